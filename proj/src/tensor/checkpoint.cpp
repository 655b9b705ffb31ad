#include "adaptlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace adaptlab {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'L', 'B', 'C', 'K', 'P', 'T'};

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw DataError("checkpoint truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const std::string& metadata) {
  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["metadata"] = metadata;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params.entries()) {
    manifest["tensors"].push_back(
        {{"name", p.name}, {"group", p.group}, {"shape", p.value.shape()}, {"dtype", "f64le"}, {"offset", offset}});
    offset += 8 * p.value.numel();
  }
  const std::string text = manifest.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params.entries())
    for (double v : p.value.values()) write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError("not a checkpoint: " + path.string());
  const auto version = read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto manifest_len = read_le<std::uint64_t>(in);
  std::string text(manifest_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(manifest_len));
  if (!in) throw DataError("checkpoint manifest truncated");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint manifest: ") + e.what());
  }
  LoadedCheckpoint loaded;
  loaded.metadata = manifest.value("metadata", std::string{});
  std::uint64_t expected_offset = 0;
  for (const auto& t : manifest.at("tensors")) {
    if (t.at("dtype").get<std::string>() != "f64le") throw DataError("unsupported dtype in checkpoint");
    if (t.at("offset").get<std::uint64_t>() != expected_offset) throw DataError("non-contiguous checkpoint payload");
    Shape shape = t.at("shape").get<Shape>();
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = std::bit_cast<double>(read_le<std::uint64_t>(in));
    expected_offset += 8 * data.size();
    loaded.params.add(t.at("name").get<std::string>(), t.at("group").get<std::string>(),
                      Tensor(std::move(shape), std::move(data)));
  }
  return loaded;
}

std::string load_checkpoint(const std::filesystem::path& path, ParameterStore& params) {
  LoadedCheckpoint loaded = read_checkpoint(path);
  if (loaded.params.size() != params.size())
    throw DataError("checkpoint has " + std::to_string(loaded.params.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  for (const auto& p : loaded.params.entries()) {
    if (!params.contains(p.name)) throw DataError("checkpoint tensor not in model: " + p.name);
    const auto& target = params.entry(p.name);
    if (target.value.shape() != p.value.shape())
      throw DataError("shape mismatch for " + p.name + ": checkpoint " + shape_string(p.value.shape()) + ", model " +
                      shape_string(target.value.shape()));
    if (target.group != p.group) throw DataError("group mismatch for " + p.name);
  }
  for (const auto& p : loaded.params.entries()) {
    auto dst = params.get(p.name).mutable_values();
    std::copy(p.value.values().begin(), p.value.values().end(), dst.begin());
  }
  return loaded.metadata;
}

}  // namespace adaptlab
