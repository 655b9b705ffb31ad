#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adaptlab/tensor.hpp"

namespace adaptlab {

// Fixed id layout shared by every vocabulary: specials at 0-4, then the 256
// byte values at 5-260.
inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kMaskId = 3;
inline constexpr int kUnkId = 4;
inline constexpr int kNumSpecialTokens = 5;
inline constexpr int kByteOffset = kNumSpecialTokens;
inline constexpr int kByteVocabSize = kByteOffset + 256;
inline constexpr int kNoWord = -1;

const std::vector<std::string>& special_token_strings();
inline bool is_special_id(int id) { return id >= 0 && id < kNumSpecialTokens; }

/// Half-open offset range.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

/// Token ids of one text plus, per token, where it came from. Special tokens
/// and whitespace bytes have word_index == kNoWord and empty spans.
struct Segmentation {
  std::vector<int> token_ids;
  std::vector<Span> byte_spans;  // offsets into the UTF-8 bytes of the text
  std::vector<Span> char_spans;  // offsets in code points
  std::vector<int> word_index;
  std::size_t num_words = 0;

  std::size_t size() const { return token_ids.size(); }
  /// Keeps at most `max_len` tokens, preserving the trailing SEP.
  Segmentation truncated(std::size_t max_len) const;
};

/// Splits on ASCII whitespace; returns byte ranges of the words.
std::vector<Span> word_byte_ranges(std::string_view text);
std::vector<std::string> split_words(std::string_view text);
/// Collapses whitespace runs to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);
/// Number of Unicode code points (non-continuation bytes).
std::size_t count_code_points(std::string_view text);

/// Byte-level vocabulary: 5 specials followed by the 256 byte values.
class ByteVocab {
 public:
  static constexpr std::size_t size() { return kByteVocabSize; }
  static constexpr int id_of_byte(std::uint8_t byte) { return kByteOffset + byte; }
  static std::optional<std::uint8_t> byte_of_id(int id);
  static std::string token_string(int id);
};

/// [CLS] + one id per UTF-8 byte + [SEP]. Every byte of a multi-byte
/// character carries that character's char span.
Segmentation byte_encode(std::string_view text);

/// Byte-pair-merge subword vocabulary with full byte fallback. Words are
/// segmented independently; each word is encoded as its bytes followed by a
/// single space byte, so a decoded sequence is the words joined by spaces.
class SubwordVocab {
 public:
  /// Deterministic trainer: starts from the 261-entry byte vocabulary and
  /// repeatedly merges the most frequent adjacent pair (ties broken by the
  /// smaller id pair) until `target_size` or no pair occurs twice.
  static SubwordVocab train(std::span<const std::string> corpus, std::size_t target_size);

  static SubwordVocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const;
  std::optional<int> find(std::string_view surface) const;
  const std::vector<std::pair<int, int>>& merges() const { return merges_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  Segmentation encode(std::string_view text) const;
  /// Concatenates token bytes, skipping specials, and drops the trailing space.
  std::string decode(std::span<const int> ids) const;

  bool operator==(const SubwordVocab& other) const {
    return tokens_ == other.tokens_ && merges_ == other.merges_;
  }

 private:
  void add_token(std::string surface);
  void add_merge(int left, int right);
  std::vector<int> encode_word(std::string_view word_with_space) const;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::pair<int, int>> merges_;
  std::map<std::pair<int, int>, std::pair<std::size_t, int>> merge_rank_;  // pair -> (rank, merged id)
};

/// Total code points in the corpus (spaces included) divided by the number of
/// non-special tokens produced.
double compression_ratio(std::span<const std::string> corpus, const SubwordVocab& vocab);

struct OverlapInitPolicy {
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
};

/// Builds a [new_vocab.size() x width] embedding matrix: rows whose token
/// string exists in old_vocab copy the old row, the rest get the column mean
/// of the old matrix plus seeded Gaussian noise.
Tensor overlap_initialize_embeddings(const SubwordVocab& old_vocab, const Tensor& old_embeddings,
                                     const SubwordVocab& new_vocab, const OverlapInitPolicy& policy,
                                     std::size_t expected_width = 0);

}  // namespace adaptlab
