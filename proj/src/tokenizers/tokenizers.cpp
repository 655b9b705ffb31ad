#include "adaptlab/tokenizers.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "adaptlab/error.hpp"

namespace adaptlab {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// char_of_byte[b] = index of the code point containing byte b; one extra
// entry at the end holds the total code point count.
std::vector<std::size_t> char_index_of_bytes(std::string_view text) {
  std::vector<std::size_t> out(text.size() + 1);
  std::size_t chars = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_continuation(static_cast<unsigned char>(text[i]))) ++chars;
    out[i] = chars == 0 ? 0 : chars - 1;
  }
  out[text.size()] = chars;
  return out;
}

Span char_span_of(const std::vector<std::size_t>& char_of_byte, Span bytes) {
  if (bytes.begin >= bytes.end) {
    const std::size_t c = bytes.begin >= char_of_byte.size() - 1 ? char_of_byte.back() : char_of_byte[bytes.begin];
    return {c, c};
  }
  return {char_of_byte[bytes.begin], char_of_byte[bytes.end - 1] + 1};
}

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k)
      if (!is_continuation(static_cast<unsigned char>(s[i + k]))) return false;
    i += len;
  }
  return true;
}

std::string escape_token(std::string_view token) {
  const bool raw_high = valid_utf8(token);
  std::string out;
  char buf[5];
  for (char ch : token) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == '\\') {
      out += "\\\\";
    } else if (c <= 0x20 || c == 0x7F || c == '#' || (c >= 0x80 && !raw_high)) {
      std::snprintf(buf, sizeof buf, "\\x%02X", c);
      out += buf;
    } else {
      out += ch;
    }
  }
  return out;
}

std::string unescape_token(std::string_view line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] != '\\') {
      out += line[i];
      continue;
    }
    if (i + 1 < line.size() && line[i + 1] == '\\') {
      out += '\\';
      ++i;
    } else if (i + 3 < line.size() && line[i + 1] == 'x') {
      out += static_cast<char>(std::stoi(std::string(line.substr(i + 2, 2)), nullptr, 16));
      i += 3;
    } else {
      throw DataError("bad escape in vocabulary line: " + std::string(line));
    }
  }
  return out;
}

constexpr std::string_view kMergesDelimiter = "#merges";

}  // namespace

const std::vector<std::string>& special_token_strings() {
  static const std::vector<std::string> specials{"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"};
  return specials;
}

Segmentation Segmentation::truncated(std::size_t max_len) const {
  ADAPTLAB_REQUIRE(max_len >= 2, "cannot truncate below [CLS] [SEP]");
  if (size() <= max_len) return *this;
  Segmentation out;
  auto keep = [&](std::size_t i) {
    out.token_ids.push_back(token_ids[i]);
    out.byte_spans.push_back(byte_spans[i]);
    out.char_spans.push_back(char_spans[i]);
    out.word_index.push_back(word_index[i]);
  };
  for (std::size_t i = 0; i + 1 < max_len; ++i) keep(i);
  keep(size() - 1);
  int last_word = kNoWord;
  for (int w : out.word_index) last_word = std::max(last_word, w);
  out.num_words = static_cast<std::size_t>(last_word + 1);
  return out;
}

std::vector<Span> word_byte_ranges(std::string_view text) {
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  for (auto r : word_byte_ranges(text)) out.emplace_back(text.substr(r.begin, r.end - r.begin));
  return out;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::size_t count_code_points(std::string_view text) {
  std::size_t n = 0;
  for (char c : text)
    if (!is_continuation(static_cast<unsigned char>(c))) ++n;
  return n;
}

std::optional<std::uint8_t> ByteVocab::byte_of_id(int id) {
  if (id < kByteOffset || id >= kByteVocabSize) return std::nullopt;
  return static_cast<std::uint8_t>(id - kByteOffset);
}

std::string ByteVocab::token_string(int id) {
  ADAPTLAB_REQUIRE(id >= 0 && id < kByteVocabSize, "byte vocabulary id out of range");
  if (is_special_id(id)) return special_token_strings()[static_cast<std::size_t>(id)];
  return std::string(1, static_cast<char>(id - kByteOffset));
}

Segmentation byte_encode(std::string_view text) {
  Segmentation seg;
  const auto char_of_byte = char_index_of_bytes(text);
  const std::size_t total_chars = char_of_byte.back();
  const auto words = word_byte_ranges(text);
  seg.num_words = words.size();

  seg.token_ids.push_back(kClsId);
  seg.byte_spans.push_back({0, 0});
  seg.char_spans.push_back({0, 0});
  seg.word_index.push_back(kNoWord);
  std::size_t w = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    while (w < words.size() && words[w].end <= i) ++w;
    const bool in_word = w < words.size() && words[w].begin <= i;
    seg.token_ids.push_back(ByteVocab::id_of_byte(static_cast<std::uint8_t>(text[i])));
    seg.byte_spans.push_back({i, i + 1});
    seg.char_spans.push_back({char_of_byte[i], char_of_byte[i] + 1});
    seg.word_index.push_back(in_word ? static_cast<int>(w) : kNoWord);
  }
  seg.token_ids.push_back(kSepId);
  seg.byte_spans.push_back({text.size(), text.size()});
  seg.char_spans.push_back({total_chars, total_chars});
  seg.word_index.push_back(kNoWord);
  return seg;
}

void SubwordVocab::add_token(std::string surface) {
  index_.emplace(surface, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(surface));
}

void SubwordVocab::add_merge(int left, int right) {
  std::string merged = tokens_[static_cast<std::size_t>(left)] + tokens_[static_cast<std::size_t>(right)];
  auto it = index_.find(merged);
  int id;
  if (it == index_.end()) {
    id = static_cast<int>(tokens_.size());
    add_token(std::move(merged));
  } else {
    id = it->second;
  }
  merge_rank_.emplace(std::make_pair(left, right), std::make_pair(merges_.size(), id));
  merges_.emplace_back(left, right);
}

namespace {

// Replaces every left-to-right occurrence of (left, right) by merged.
bool apply_merge(std::vector<int>& symbols, int left, int right, int merged) {
  bool changed = false;
  std::size_t out = 0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      symbols[out++] = merged;
      ++i;
      changed = true;
    } else {
      symbols[out++] = symbols[i];
    }
  }
  symbols.resize(out);
  return changed;
}

std::vector<int> byte_symbols(std::string_view s) {
  std::vector<int> out;
  out.reserve(s.size());
  for (char c : s) out.push_back(ByteVocab::id_of_byte(static_cast<std::uint8_t>(c)));
  return out;
}

}  // namespace

SubwordVocab SubwordVocab::train(std::span<const std::string> corpus, std::size_t target_size) {
  ADAPTLAB_REQUIRE(target_size >= static_cast<std::size_t>(kByteVocabSize),
                   "subword vocabulary must hold at least the 261 special and byte tokens");
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus)
    for (auto& w : split_words(line)) ++counts[w + " "];
  if (counts.empty()) throw DataError("cannot train a subword vocabulary on an empty corpus");

  SubwordVocab vocab;
  for (const auto& s : special_token_strings()) vocab.add_token(s);
  for (int b = 0; b < 256; ++b) vocab.add_token(std::string(1, static_cast<char>(b)));

  std::vector<std::pair<std::vector<int>, std::size_t>> words;
  words.reserve(counts.size());
  for (const auto& [w, c] : counts) words.emplace_back(byte_symbols(w), c);

  while (vocab.size() < target_size) {
    std::map<std::pair<int, int>, std::size_t> pairs;
    for (const auto& [syms, c] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) pairs[{syms[i], syms[i + 1]}] += c;
    std::pair<int, int> best{-1, -1};
    std::size_t best_count = 0;
    for (const auto& [p, c] : pairs)
      if (c > best_count) {
        best = p;
        best_count = c;
      }
    if (best_count < 2) break;
    vocab.add_merge(best.first, best.second);
    const int merged = vocab.merge_rank_.at(best).second;
    for (auto& [syms, c] : words) apply_merge(syms, best.first, best.second, merged);
  }
  return vocab;
}

const std::string& SubwordVocab::token(int id) const {
  ADAPTLAB_REQUIRE(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), "subword id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> SubwordVocab::find(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> SubwordVocab::encode_word(std::string_view word_with_space) const {
  std::vector<int> syms = byte_symbols(word_with_space);
  while (syms.size() > 1) {
    std::size_t best_rank = merges_.size();
    std::pair<int, int> best{-1, -1};
    int merged = -1;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find({syms[i], syms[i + 1]});
      if (it != merge_rank_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best = it->first;
        merged = it->second.second;
      }
    }
    if (merged < 0) break;
    apply_merge(syms, best.first, best.second, merged);
  }
  return syms;
}

Segmentation SubwordVocab::encode(std::string_view text) const {
  Segmentation seg;
  const auto char_of_byte = char_index_of_bytes(text);
  const std::size_t total_chars = char_of_byte.back();
  const auto words = word_byte_ranges(text);
  seg.num_words = words.size();

  auto push = [&](int id, Span bytes, int word) {
    seg.token_ids.push_back(id);
    seg.byte_spans.push_back(bytes);
    seg.char_spans.push_back(char_span_of(char_of_byte, bytes));
    seg.word_index.push_back(word);
  };
  push(kClsId, {0, 0}, kNoWord);
  for (std::size_t w = 0; w < words.size(); ++w) {
    const Span range = words[w];
    const std::size_t wlen = range.end - range.begin;
    std::string piece(text.substr(range.begin, wlen));
    piece += ' ';
    std::size_t offset = 0;
    for (int id : encode_word(piece)) {
      const std::size_t len = tokens_[static_cast<std::size_t>(id)].size();
      const std::size_t b = std::min(offset, wlen), e = std::min(offset + len, wlen);
      push(id, {range.begin + b, range.begin + e}, static_cast<int>(w));
      offset += len;
    }
  }
  seg.token_ids.push_back(kSepId);
  seg.byte_spans.push_back({text.size(), text.size()});
  seg.char_spans.push_back({total_chars, total_chars});
  seg.word_index.push_back(kNoWord);
  return seg;
}

std::string SubwordVocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids)
    if (!is_special_id(id)) out += token(id);
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

void SubwordVocab::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << escape_token(t) << '\n';
  out << kMergesDelimiter << '\n';
  for (const auto& [l, r] : merges_) out << l << ' ' << r << '\n';
}

SubwordVocab SubwordVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  SubwordVocab vocab;
  std::string line;
  bool in_merges = false;
  std::vector<std::pair<int, int>> merges;
  while (std::getline(in, line)) {
    if (!in_merges) {
      if (line == kMergesDelimiter) {
        in_merges = true;
        continue;
      }
      vocab.add_token(unescape_token(line));
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ss(line);
    int l, r;
    if (!(ss >> l >> r)) throw DataError("bad merge line in " + path.string() + ": " + line);
    merges.emplace_back(l, r);
  }
  if (vocab.size() < static_cast<std::size_t>(kByteVocabSize))
    throw DataError("vocabulary " + path.string() + " lacks the byte fallback block");
  for (std::size_t i = 0; i < special_token_strings().size(); ++i)
    if (vocab.tokens_[i] != special_token_strings()[i]) throw DataError("vocabulary special tokens out of order");
  for (int b = 0; b < 256; ++b)
    if (vocab.tokens_[static_cast<std::size_t>(kByteOffset + b)] != std::string(1, static_cast<char>(b)))
      throw DataError("vocabulary byte block corrupted at byte " + std::to_string(b));
  for (auto [l, r] : merges) {
    if (l < 0 || r < 0 || static_cast<std::size_t>(l) >= vocab.size() || static_cast<std::size_t>(r) >= vocab.size())
      throw DataError("merge refers to unknown token id");
    if (!vocab.find(vocab.token(l) + vocab.token(r))) throw DataError("merge result missing from vocabulary");
    vocab.add_merge(l, r);
  }
  return vocab;
}

double compression_ratio(std::span<const std::string> corpus, const SubwordVocab& vocab) {
  ADAPTLAB_REQUIRE(!corpus.empty(), "compression_ratio needs a non-empty corpus");
  std::size_t chars = 0, tokens = 0;
  for (const auto& line : corpus) {
    chars += count_code_points(line);
    for (int id : vocab.encode(line).token_ids)
      if (!is_special_id(id)) ++tokens;
  }
  if (tokens == 0) throw DataError("compression_ratio: corpus produced no tokens");
  return static_cast<double>(chars) / static_cast<double>(tokens);
}

Tensor overlap_initialize_embeddings(const SubwordVocab& old_vocab, const Tensor& old_embeddings,
                                     const SubwordVocab& new_vocab, const OverlapInitPolicy& policy,
                                     std::size_t expected_width) {
  ADAPTLAB_REQUIRE(old_embeddings.rank() == 2 && old_embeddings.rows() == old_vocab.size(),
                   "old embedding matrix must have one row per old token");
  const std::size_t width = old_embeddings.cols();
  ADAPTLAB_REQUIRE(expected_width == 0 || expected_width == width,
                   "embedding width mismatch: old " + std::to_string(width) + ", new " +
                       std::to_string(expected_width));
  auto old = old_embeddings.values();
  std::vector<double> col_mean(width, 0.0);
  for (std::size_t r = 0; r < old_vocab.size(); ++r)
    for (std::size_t c = 0; c < width; ++c) col_mean[c] += old[r * width + c];
  for (auto& m : col_mean) m /= static_cast<double>(old_vocab.size());

  std::mt19937_64 rng(policy.seed);
  std::normal_distribution<double> noise(0.0, policy.noise_sigma);
  std::vector<double> out(new_vocab.size() * width);
  for (std::size_t r = 0; r < new_vocab.size(); ++r) {
    auto hit = old_vocab.find(new_vocab.token(static_cast<int>(r)));
    for (std::size_t c = 0; c < width; ++c)
      out[r * width + c] = hit ? old[static_cast<std::size_t>(*hit) * width + c] : col_mean[c] + noise(rng);
  }
  return Tensor::matrix(new_vocab.size(), width, std::move(out));
}

}  // namespace adaptlab
