#include "adaptlab/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "adaptlab/checkpoint.hpp"
#include "adaptlab/error.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/tokenizers.hpp"

namespace adaptlab {

namespace {

constexpr double kMasked = -1e30;
constexpr std::size_t kNotStackLayer = static_cast<std::size_t>(-1);

struct VariantName {
  Variant variant;
  const char* name;
};
constexpr VariantName kVariantNames[] = {{Variant::MonolithicSubword, "monolithic-subword"},
                                         {Variant::MonolithicChar, "monolithic-char"},
                                         {Variant::ModularSubword, "modular-subword"},
                                         {Variant::ModularChar, "modular-char"}};

std::string layer_prefix(std::size_t i) { return "layer" + std::to_string(i); }

std::string adapter_prefix(std::string_view lang, std::size_t layer) {
  return "adapter." + std::string(lang) + "." + layer_prefix(layer);
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

class Initializer {
 public:
  Initializer(ParameterStore& store, std::uint64_t seed, double std)
      : store_(store), rng_(seed), normal_(0.0, std) {}

  void weight(const std::string& name, const std::string& group, std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = normal_(rng_);
    store_.add(name, group, Tensor::matrix(rows, cols, std::move(v), true));
  }
  void bias(const std::string& name, const std::string& group, std::size_t cols) {
    store_.add(name, group, Tensor::zeros({1, cols}, true));
  }
  void norm(const std::string& prefix, const std::string& group, std::size_t cols) {
    store_.add(prefix + ".g", group, Tensor::filled({1, cols}, 1.0, true));
    store_.add(prefix + ".b", group, Tensor::zeros({1, cols}, true));
  }
  void dense(const std::string& prefix, const std::string& group, std::size_t in, std::size_t out) {
    weight(prefix + ".w", group, in, out);
    bias(prefix + ".b", group, out);
  }
  void transformer_layer(const std::string& prefix, const std::string& group, const EncoderConfig& cfg) {
    const std::size_t w = cfg.hidden_width;
    dense(prefix + ".attn.qkv", group, w, 3 * w);
    dense(prefix + ".attn.out", group, w, w);
    norm(prefix + ".ln1", group, w);
    dense(prefix + ".ffn.in", group, w, cfg.ffn_width);
    dense(prefix + ".ffn.out", group, cfg.ffn_width, w);
    norm(prefix + ".ln2", group, w);
  }

 private:
  ParameterStore& store_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

}  // namespace

std::string variant_name(Variant v) {
  for (const auto& e : kVariantNames)
    if (e.variant == v) return e.name;
  throw ContractViolation("unknown variant");
}

Variant parse_variant(std::string_view name) {
  for (const auto& e : kVariantNames)
    if (name == e.name) return e.variant;
  throw ContractViolation("unknown variant: " + std::string(name));
}

std::string adapter_group(std::string_view language) { return "adapter." + std::string(language); }

void EncoderConfig::validate() const {
  ADAPTLAB_REQUIRE(hidden_width > 0 && num_layers > 0 && num_heads > 0 && ffn_width > 0,
                   "encoder widths, layer and head counts must be positive");
  ADAPTLAB_REQUIRE(hidden_width % num_heads == 0, "hidden_width must be divisible by num_heads");
  ADAPTLAB_REQUIRE(max_positions >= 2, "max_positions must fit [CLS] and [SEP]");
  ADAPTLAB_REQUIRE(init_std >= 0.0, "init_std must be non-negative");
  ADAPTLAB_REQUIRE(sampler.has_value() == is_char_variant(variant),
                   "sampler must be configured exactly for char variants");
  ADAPTLAB_REQUIRE(adapter.has_value() == is_modular_variant(variant),
                   "adapter must be configured exactly for modular variants");
  if (!is_char_variant(variant))
    ADAPTLAB_REQUIRE(vocab_size >= static_cast<std::size_t>(kByteVocabSize),
                     "subword vocab_size must include the 261 special and byte tokens");
  if (sampler) {
    ADAPTLAB_REQUIRE(sampler->rate >= 1, "sampler rate must be >= 1");
    ADAPTLAB_REQUIRE(conv_kernel() >= 1 && local_block() >= 1, "sampler kernel and block must be >= 1");
  }
  if (adapter) {
    ADAPTLAB_REQUIRE(!adapter->languages.empty(), "modular model needs at least one language");
    std::set<std::string> seen;
    for (const auto& l : adapter->languages) {
      ADAPTLAB_REQUIRE(!l.empty() && l.find('.') == std::string::npos, "bad language code: '" + l + "'");
      ADAPTLAB_REQUIRE(seen.insert(l).second, "duplicate language: " + l);
    }
    ADAPTLAB_REQUIRE(bottleneck() > 0, "adapter bottleneck must be positive");
  }
}

std::size_t EncoderConfig::bottleneck() const {
  if (!adapter) return 0;
  return adapter->bottleneck_width ? adapter->bottleneck_width : hidden_width / 2;
}

std::size_t EncoderConfig::conv_kernel() const {
  if (!sampler) return 1;
  return sampler->conv_kernel ? sampler->conv_kernel : sampler->rate;
}

std::size_t EncoderConfig::local_block() const {
  if (!sampler) return 0;
  return sampler->local_block ? sampler->local_block : 2 * sampler->rate;
}

std::size_t EncoderConfig::downsampled_positions() const { return (max_positions + rate() - 1) / rate(); }

bool EncoderConfig::has_language(std::string_view lang) const {
  if (!adapter) return false;
  return std::find(adapter->languages.begin(), adapter->languages.end(), lang) != adapter->languages.end();
}

nlohmann::json config_to_json(const EncoderConfig& cfg) {
  nlohmann::json j{{"variant", variant_name(cfg.variant)},
                   {"hidden_width", cfg.hidden_width},
                   {"num_layers", cfg.num_layers},
                   {"num_heads", cfg.num_heads},
                   {"ffn_width", cfg.ffn_width},
                   {"max_positions", cfg.max_positions},
                   {"vocab_size", cfg.vocab_size},
                   {"output_vocab_size", cfg.output_vocab_size},
                   {"init_std", cfg.init_std},
                   {"seed", cfg.seed}};
  if (cfg.adapter)
    j["adapter"] = {{"bottleneck_width", cfg.adapter->bottleneck_width}, {"languages", cfg.adapter->languages}};
  if (cfg.sampler)
    j["sampler"] = {{"rate", cfg.sampler->rate},
                    {"conv_kernel", cfg.sampler->conv_kernel},
                    {"local_block", cfg.sampler->local_block}};
  return j;
}

EncoderConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"variant",    "hidden_width",      "num_layers", "num_heads",
                                           "ffn_width",  "max_positions",     "vocab_size", "output_vocab_size",
                                           "init_std",   "seed",              "adapter",    "sampler"};
  ADAPTLAB_REQUIRE(j.is_object(), "encoder config must be an object");
  for (const auto& [k, v] : j.items()) ADAPTLAB_REQUIRE(known.count(k), "unknown encoder config key: " + k);
  EncoderConfig cfg;
  cfg.variant = parse_variant(j.at("variant").get<std::string>());
  cfg.hidden_width = j.value("hidden_width", cfg.hidden_width);
  cfg.num_layers = j.value("num_layers", cfg.num_layers);
  cfg.num_heads = j.value("num_heads", cfg.num_heads);
  cfg.ffn_width = j.value("ffn_width", cfg.ffn_width);
  cfg.max_positions = j.value("max_positions", cfg.max_positions);
  cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
  cfg.output_vocab_size = j.value("output_vocab_size", cfg.output_vocab_size);
  cfg.init_std = j.value("init_std", cfg.init_std);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("adapter")) {
    const auto& a = j.at("adapter");
    cfg.adapter = AdapterConfig{a.value("bottleneck_width", std::size_t{0}),
                                a.at("languages").get<std::vector<std::string>>()};
  }
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    cfg.sampler = SamplerConfig{s.value("rate", std::size_t{4}), s.value("conv_kernel", std::size_t{0}),
                                s.value("local_block", std::size_t{0})};
  }
  cfg.validate();
  return cfg;
}

EncoderModel::EncoderModel(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t w = cfg_.hidden_width;
  const bool chars = is_char_variant(cfg_.variant);
  Initializer init(params_, cfg_.seed, cfg_.init_std);

  if (chars) {
    init.weight("embeddings.byte", kGroupEmbeddings, kByteVocabSize, w);
    init.weight("positions.down", kGroupPositions, cfg_.downsampled_positions(), w);
  } else {
    init.weight("embeddings.token", kGroupEmbeddings, cfg_.vocab_size, w);
    init.weight("positions.token", kGroupPositions, cfg_.max_positions, w);
  }
  init.norm("body.embed_ln", kGroupBody, w);
  for (std::size_t i = 0; i < cfg_.num_layers; ++i) init.transformer_layer(layer_prefix(i), kGroupBody, cfg_);

  if (cfg_.adapter) {
    const std::size_t b = cfg_.bottleneck();
    for (const auto& lang : cfg_.adapter->languages) {
      const std::string group = adapter_group(lang);
      for (std::size_t i = 0; i < cfg_.num_layers; ++i) {
        const std::string p = adapter_prefix(lang, i);
        init.norm(p + ".ln", group, w);
        init.dense(p + ".down", group, w, b);
        init.dense(p + ".up", group, b, w);
      }
    }
  }

  if (chars) {
    const std::size_t k = cfg_.conv_kernel();
    init.weight("sampler.char_positions", kGroupSampler, cfg_.max_positions, w);
    init.norm("sampler.char_ln", kGroupSampler, w);
    init.transformer_layer("sampler.local", kGroupSampler, cfg_);
    init.dense("sampler.conv", kGroupSampler, k * w, w);
    init.norm("sampler.down_ln", kGroupSampler, w);
    init.dense("sampler.up_proj", kGroupSampler, 2 * w, w);
    init.dense("sampler.up_conv", kGroupSampler, k * w, w);
    init.norm("sampler.up_ln", kGroupSampler, w);
    init.transformer_layer("sampler.final", kGroupSampler, cfg_);
    if (cfg_.output_vocab_size > 0) {
      init.dense("pretrain_head.transform", kGroupPretrainHead, w, w);
      init.norm("pretrain_head.ln", kGroupPretrainHead, w);
      init.dense("pretrain_head.out", kGroupPretrainHead, w, cfg_.output_vocab_size);
    }
  } else {
    init.dense("mlm_head.transform", kGroupMlmHead, w, w);
    init.norm("mlm_head.ln", kGroupMlmHead, w);
    init.bias("mlm_head.bias", kGroupMlmHead, cfg_.vocab_size);
  }
}

void EncoderModel::check_language(std::string_view language) const {
  if (!is_modular_variant(cfg_.variant)) return;
  ADAPTLAB_REQUIRE(!language.empty(), "modular model needs a language to route through");
  ADAPTLAB_REQUIRE(cfg_.has_language(language), "unknown language: " + std::string(language));
}

Tensor EncoderModel::attention(const std::string& prefix, const Tensor& x, std::span<const double> key_mask,
                               std::size_t block) const {
  const std::size_t n = x.rows(), w = cfg_.hidden_width, heads = cfg_.num_heads, dh = w / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor qkv = ops::linear(x, params_.get(prefix + ".attn.qkv.w"), params_.get(prefix + ".attn.qkv.b"));
  Tensor q = ops::slice_cols(qkv, 0, w), k = ops::slice_cols(qkv, w, 2 * w), v = ops::slice_cols(qkv, 2 * w, 3 * w);
  if (block == 0 || block >= n) block = n;

  std::vector<Tensor> blocks;
  std::vector<double> mask;
  for (std::size_t s = 0; s < n; s += block) {
    const std::size_t e = std::min(n, s + block), len = e - s;
    const bool whole = s == 0 && e == n;
    Tensor qb = whole ? q : ops::slice_rows(q, s, e);
    Tensor kb = whole ? k : ops::slice_rows(k, s, e);
    Tensor vb = whole ? v : ops::slice_rows(v, s, e);
    mask.clear();
    if (!key_mask.empty()) {
      mask.resize(len * len);
      for (std::size_t r = 0; r < len; ++r) std::copy_n(key_mask.begin() + s, len, mask.begin() + r * len);
    }
    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor qh = heads == 1 ? qb : ops::slice_cols(qb, h * dh, (h + 1) * dh);
      Tensor kh = heads == 1 ? kb : ops::slice_cols(kb, h * dh, (h + 1) * dh);
      Tensor vh = heads == 1 ? vb : ops::slice_cols(vb, h * dh, (h + 1) * dh);
      Tensor p = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), scale), mask);
      head_out.push_back(ops::matmul(p, vh));
    }
    blocks.push_back(heads == 1 ? head_out[0] : ops::concat_cols(head_out));
  }
  Tensor o = blocks.size() == 1 ? blocks[0] : ops::concat_rows(blocks);
  return ops::linear(o, params_.get(prefix + ".attn.out.w"), params_.get(prefix + ".attn.out.b"));
}

Tensor EncoderModel::adapter(std::string_view language, std::size_t layer_index, const Tensor& x) const {
  const std::string p = adapter_prefix(language, layer_index);
  Tensor h = ops::layer_norm(x, params_.get(p + ".ln.g"), params_.get(p + ".ln.b"));
  h = ops::gelu(ops::linear(h, params_.get(p + ".down.w"), params_.get(p + ".down.b")));
  return ops::add(x, ops::linear(h, params_.get(p + ".up.w"), params_.get(p + ".up.b")));
}

Tensor EncoderModel::transformer_layer(const std::string& prefix, const Tensor& x, std::span<const double> key_mask,
                                       std::size_t block, std::string_view language,
                                       std::size_t layer_index) const {
  Tensor a = ops::layer_norm(ops::add(x, attention(prefix, x, key_mask, block)), params_.get(prefix + ".ln1.g"),
                             params_.get(prefix + ".ln1.b"));
  Tensor f = ops::gelu(ops::linear(a, params_.get(prefix + ".ffn.in.w"), params_.get(prefix + ".ffn.in.b")));
  f = ops::linear(f, params_.get(prefix + ".ffn.out.w"), params_.get(prefix + ".ffn.out.b"));
  Tensor out = ops::layer_norm(ops::add(a, f), params_.get(prefix + ".ln2.g"), params_.get(prefix + ".ln2.b"));
  if (layer_index != kNotStackLayer && is_modular_variant(cfg_.variant)) out = adapter(language, layer_index, out);
  return out;
}

Tensor EncoderModel::embed_chars(std::span<const int> ids) const {
  ADAPTLAB_REQUIRE(is_char_variant(cfg_.variant), "embed_chars needs a char variant");
  ADAPTLAB_REQUIRE(!ids.empty(), "cannot encode an empty sequence");
  ADAPTLAB_REQUIRE(ids.size() <= cfg_.max_positions, "sequence of " + std::to_string(ids.size()) +
                                                         " bytes exceeds max_positions " +
                                                         std::to_string(cfg_.max_positions));
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ADAPTLAB_REQUIRE(ids[i] >= 0 && ids[i] < kByteVocabSize, "byte id out of range");
    rows[i] = static_cast<std::size_t>(ids[i]);
  }
  Tensor x = ops::add(ops::gather_rows(params_.get("embeddings.byte"), rows),
                      ops::gather_rows(params_.get("sampler.char_positions"), iota_indices(ids.size())));
  return ops::layer_norm(x, params_.get("sampler.char_ln.g"), params_.get("sampler.char_ln.b"));
}

Tensor EncoderModel::downsample(const Tensor& char_embeddings, std::span<const int> ids) const {
  ADAPTLAB_REQUIRE(is_char_variant(cfg_.variant), "downsample needs a char variant");
  const std::size_t n = char_embeddings.rows(), w = cfg_.hidden_width, r = cfg_.rate(), k = cfg_.conv_kernel();
  ADAPTLAB_REQUIRE(n >= 1, "downsample needs at least one character");
  ADAPTLAB_REQUIRE(ids.empty() || ids.size() == n, "downsample: ids and states differ in length");
  const std::size_t padded = (n + r - 1) / r * r;

  Tensor x = char_embeddings;
  if (padded > n) {
    std::vector<Tensor> parts{char_embeddings, Tensor::zeros({padded - n, w})};
    x = ops::concat_rows(parts);
  }
  std::vector<double> key_mask(padded, 0.0);
  bool any_masked = padded > n;
  for (std::size_t i = n; i < padded; ++i) key_mask[i] = kMasked;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == kPadId) {
      key_mask[i] = kMasked;
      any_masked = true;
    }
  if (!any_masked) key_mask.clear();

  Tensor local = transformer_layer("sampler.local", x, key_mask, cfg_.local_block(), {}, kNotStackLayer);
  Tensor windows = ops::unfold_rows(local, k, r, 0, k > r ? k - r : 0);
  Tensor conv = ops::gelu(ops::linear(windows, params_.get("sampler.conv.w"), params_.get("sampler.conv.b")));
  return ops::layer_norm(conv, params_.get("sampler.down_ln.g"), params_.get("sampler.down_ln.b"));
}

Tensor EncoderModel::upsample(const Tensor& downsampled, const Tensor& char_embeddings) const {
  ADAPTLAB_REQUIRE(is_char_variant(cfg_.variant), "upsample needs a char variant");
  const std::size_t n = char_embeddings.rows(), r = cfg_.rate(), k = cfg_.conv_kernel();
  ADAPTLAB_REQUIRE(downsampled.rows() == (n + r - 1) / r,
                   "upsample: " + std::to_string(downsampled.rows()) + " downsampled positions cannot restore " +
                       std::to_string(n) + " characters at rate " + std::to_string(r));
  std::vector<Tensor> parts{char_embeddings, ops::repeat_rows(downsampled, r, n)};
  Tensor proj = ops::linear(ops::concat_cols(parts), params_.get("sampler.up_proj.w"), params_.get("sampler.up_proj.b"));
  const std::size_t pad_left = (k - 1) / 2;
  Tensor windows = ops::unfold_rows(proj, k, 1, pad_left, k - 1 - pad_left);
  Tensor conv = ops::gelu(ops::linear(windows, params_.get("sampler.up_conv.w"), params_.get("sampler.up_conv.b")));
  conv = ops::layer_norm(conv, params_.get("sampler.up_ln.g"), params_.get("sampler.up_ln.b"));
  return transformer_layer("sampler.final", conv, {}, 0, {}, kNotStackLayer);
}

EncoderOutput EncoderModel::encode(std::span<const int> ids, std::string_view language, bool upsample) const {
  check_language(language);
  ADAPTLAB_REQUIRE(!ids.empty(), "cannot encode an empty sequence");
  EncoderOutput out;
  Tensor x;
  std::vector<double> key_mask;
  if (is_char_variant(cfg_.variant)) {
    out.char_embeddings = embed_chars(ids);
    Tensor down = downsample(out.char_embeddings, ids);
    x = ops::add(down, ops::gather_rows(params_.get("positions.down"), iota_indices(down.rows())));
  } else {
    ADAPTLAB_REQUIRE(ids.size() <= cfg_.max_positions, "sequence of " + std::to_string(ids.size()) +
                                                           " tokens exceeds max_positions " +
                                                           std::to_string(cfg_.max_positions));
    std::vector<std::size_t> rows(ids.size());
    bool any_pad = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ADAPTLAB_REQUIRE(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < cfg_.vocab_size, "token id out of range");
      rows[i] = static_cast<std::size_t>(ids[i]);
      any_pad = any_pad || ids[i] == kPadId;
    }
    if (any_pad) {
      key_mask.resize(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) key_mask[i] = ids[i] == kPadId ? kMasked : 0.0;
    }
    x = ops::add(ops::gather_rows(params_.get("embeddings.token"), rows),
                 ops::gather_rows(params_.get("positions.token"), iota_indices(ids.size())));
  }
  x = ops::layer_norm(x, params_.get("body.embed_ln.g"), params_.get("body.embed_ln.b"));
  out.embeddings = x;
  for (std::size_t i = 0; i < cfg_.num_layers; ++i) {
    x = transformer_layer(layer_prefix(i), x, key_mask, 0, language, i);
    out.layers.push_back(x);
  }
  if (is_char_variant(cfg_.variant) && upsample) out.char_states = this->upsample(x, out.char_embeddings);
  return out;
}

Tensor EncoderModel::mlm_logits(const Tensor& states) const {
  ADAPTLAB_REQUIRE(!is_char_variant(cfg_.variant), "mlm_logits needs a subword variant");
  Tensor t = ops::gelu(ops::linear(states, params_.get("mlm_head.transform.w"), params_.get("mlm_head.transform.b")));
  t = ops::layer_norm(t, params_.get("mlm_head.ln.g"), params_.get("mlm_head.ln.b"));
  return ops::add_row(ops::matmul_nt(t, params_.get("embeddings.token")), params_.get("mlm_head.bias"));
}

Tensor EncoderModel::pretrain_logits(const Tensor& downsampled_states) const {
  ADAPTLAB_REQUIRE(is_char_variant(cfg_.variant) && cfg_.output_vocab_size > 0,
                   "pretrain_logits needs a char variant with output_vocab_size > 0");
  Tensor t = ops::gelu(ops::linear(downsampled_states, params_.get("pretrain_head.transform.w"),
                                   params_.get("pretrain_head.transform.b")));
  t = ops::layer_norm(t, params_.get("pretrain_head.ln.g"), params_.get("pretrain_head.ln.b"));
  return ops::linear(t, params_.get("pretrain_head.out.w"), params_.get("pretrain_head.out.b"));
}

void EncoderModel::copy_adapter(std::string_view from, std::string_view to) {
  ADAPTLAB_REQUIRE(cfg_.has_language(from) && cfg_.has_language(to), "copy_adapter: unknown language");
  const std::string src_group = adapter_group(from);
  const std::size_t src_prefix = src_group.size();
  for (const auto& name : params_.names_in_group(src_group)) {
    const std::string dst = adapter_group(to) + name.substr(src_prefix);
    auto src_values = params_.get(name).values();
    auto dst_values = params_.get(dst).mutable_values();
    std::copy(src_values.begin(), src_values.end(), dst_values.begin());
  }
}

void EncoderModel::save(const std::filesystem::path& path) const {
  save_checkpoint(path, params_, config_to_json(cfg_).dump());
}

EncoderModel EncoderModel::load(const std::filesystem::path& path) {
  LoadedCheckpoint ckpt = read_checkpoint(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path.string() + " has no encoder config: " + e.what());
  }
  EncoderModel model(config_from_json(meta));
  for (const auto& p : model.params_.entries()) {
    if (!ckpt.params.contains(p.name)) throw DataError("checkpoint lacks tensor " + p.name);
    const Parameter& stored = ckpt.params.entry(p.name);
    if (stored.value.shape() != p.value.shape() || stored.group != p.group)
      throw DataError("checkpoint tensor " + p.name + " does not match the encoder config");
  }
  for (const auto& p : ckpt.params.entries())
    if (!model.params_.contains(p.name) && p.group != kGroupTaskHead)
      throw DataError("checkpoint has unexpected tensor " + p.name);
  model.params_ = std::move(ckpt.params);
  for (const auto& p : model.params_.entries()) {
    Tensor t = p.value;
    t.set_requires_grad(true);
  }
  return model;
}

std::size_t adapter_parameter_count(const EncoderConfig& cfg) {
  const std::size_t w = cfg.hidden_width, b = cfg.bottleneck();
  return cfg.num_layers * (2 * w * b + b + 3 * w);
}

EncoderModel transplant_to_char(const EncoderModel& subword, const SamplerConfig& sampler,
                                std::size_t output_vocab_size, std::uint64_t seed) {
  const EncoderConfig& src = subword.config();
  ADAPTLAB_REQUIRE(src.variant == Variant::ModularSubword, "transplant_to_char needs a modular-subword model");
  EncoderConfig cfg = src;
  cfg.variant = Variant::ModularChar;
  cfg.sampler = sampler;
  cfg.max_positions = src.max_positions * sampler.rate;
  cfg.vocab_size = 0;
  cfg.output_vocab_size = output_vocab_size;
  cfg.seed = seed;
  EncoderModel model(cfg);
  std::set<std::string> groups{kGroupBody};
  for (const auto& lang : cfg.adapter->languages) groups.insert(adapter_group(lang));
  model.params().copy_matching(subword.params(), groups);
  const Tensor& positions = subword.params().get("positions.token");
  Tensor& down = model.params().get("positions.down");
  if (positions.shape() == down.shape())
    std::copy(positions.values().begin(), positions.values().end(), down.mutable_values().begin());
  return model;
}

Segmentation segment_for_model(const EncoderConfig& cfg, const SubwordVocab* vocab, std::string_view text,
                               std::size_t max_length) {
  if (is_char_variant(cfg.variant)) return byte_encode(text).truncated(max_length);
  ADAPTLAB_REQUIRE(vocab != nullptr, "subword variants need a vocabulary");
  ADAPTLAB_REQUIRE(vocab->size() == cfg.vocab_size, "model vocab_size differs from the tokenizer vocabulary");
  return vocab->encode(text).truncated(max_length);
}

}  // namespace adaptlab
