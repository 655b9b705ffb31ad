#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "adaptlab/parameters.hpp"
#include "adaptlab/tensor.hpp"
#include "adaptlab/tokenizers.hpp"

namespace adaptlab {

enum class Variant { MonolithicSubword, MonolithicChar, ModularSubword, ModularChar };

std::string variant_name(Variant v);
Variant parse_variant(std::string_view name);
inline bool is_char_variant(Variant v) { return v == Variant::MonolithicChar || v == Variant::ModularChar; }
inline bool is_modular_variant(Variant v) { return v == Variant::ModularSubword || v == Variant::ModularChar; }

struct AdapterConfig {
  std::size_t bottleneck_width = 0;  // 0 means hidden_width / 2
  std::vector<std::string> languages;
};

struct SamplerConfig {
  std::size_t rate = 4;
  std::size_t conv_kernel = 0;  // 0 means rate
  std::size_t local_block = 0;  // 0 means 2 * rate
};

struct EncoderConfig {
  Variant variant = Variant::MonolithicSubword;
  std::size_t hidden_width = 32;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t ffn_width = 64;
  std::size_t max_positions = 64;  // characters for char variants
  std::size_t vocab_size = 0;      // input subword vocabulary (subword variants)
  std::size_t output_vocab_size = 0;  // subword targets of the char pretraining head
  std::optional<AdapterConfig> adapter;
  std::optional<SamplerConfig> sampler;
  double init_std = 0.02;
  std::uint64_t seed = 0;

  /// Throws ContractViolation when any invariant of the configuration fails.
  void validate() const;
  std::size_t bottleneck() const;
  std::size_t rate() const { return sampler ? sampler->rate : 1; }
  std::size_t conv_kernel() const;
  std::size_t local_block() const;
  std::size_t downsampled_positions() const;
  bool has_language(std::string_view lang) const;
};

nlohmann::json config_to_json(const EncoderConfig& cfg);
EncoderConfig config_from_json(const nlohmann::json& j);

/// Hidden states of one forward pass. For char variants `layers` holds the
/// downsampled positions and `char_states` the upsampled output.
struct EncoderOutput {
  Tensor embeddings;
  std::vector<Tensor> layers;
  Tensor char_embeddings;
  Tensor char_states;

  /// States that carry per-input-token predictions (upsampled for char models).
  const Tensor& token_states() const { return char_states.defined() ? char_states : layers.back(); }
};

inline const std::string kGroupEmbeddings = "embeddings";
inline const std::string kGroupPositions = "positions";
inline const std::string kGroupBody = "body";
inline const std::string kGroupSampler = "sampler";
inline const std::string kGroupMlmHead = "mlm_head";
inline const std::string kGroupPretrainHead = "pretrain_head";
inline const std::string kGroupTaskHead = "task_head";
std::string adapter_group(std::string_view language);

/// One of the four encoder architectures with seeded initial parameters.
/// Weights ~ N(0, init_std), biases 0, layer-norm gains 1.
class EncoderModel {
 public:
  explicit EncoderModel(EncoderConfig cfg);

  const EncoderConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// Forward pass over `ids` (subword ids or byte ids). Modular models need a
  /// configured `language`; monolithic models ignore it. Char variants skip
  /// the upsampler when `upsample` is false.
  EncoderOutput encode(std::span<const int> ids, std::string_view language = {}, bool upsample = true) const;

  /// Byte embedding plus character positions, normalized: n x w.
  Tensor embed_chars(std::span<const int> ids) const;
  /// Local blockwise attention then strided convolution; ceil(n/r) x w.
  Tensor downsample(const Tensor& char_embeddings, std::span<const int> ids) const;
  /// Repeat, concatenate with the character embeddings, project, convolve and
  /// run the final attention layer; n x w.
  Tensor upsample(const Tensor& downsampled, const Tensor& char_embeddings) const;

  /// Subword logits from stack states via the tied embedding decoder.
  Tensor mlm_logits(const Tensor& states) const;
  /// Subword logits from downsampled states (char variants).
  Tensor pretrain_logits(const Tensor& downsampled_states) const;

  /// Copies every tensor of one language's adapter stack onto another's.
  void copy_adapter(std::string_view from, std::string_view to);

  void save(const std::filesystem::path& path) const;
  static EncoderModel load(const std::filesystem::path& path);

 private:
  Tensor transformer_layer(const std::string& prefix, const Tensor& x, std::span<const double> key_mask,
                           std::size_t block, std::string_view language, std::size_t layer_index) const;
  Tensor attention(const std::string& prefix, const Tensor& x, std::span<const double> key_mask,
                   std::size_t block) const;
  Tensor adapter(std::string_view language, std::size_t layer_index, const Tensor& x) const;
  void check_language(std::string_view language) const;

  EncoderConfig cfg_;
  ParameterStore params_;
};

/// Closed-form size of one language's adapter stack:
/// num_layers * (2 * w * b + b + 3 * w).
std::size_t adapter_parameter_count(const EncoderConfig& cfg);

/// Builds a modular-char model whose transformer body and adapters are copied
/// from a modular-subword model; subword embeddings are discarded.
EncoderModel transplant_to_char(const EncoderModel& subword, const SamplerConfig& sampler,
                                std::size_t output_vocab_size, std::uint64_t seed);

/// The segmentation a model consumes: subwords from `vocab` for subword
/// variants, bytes for char variants (`vocab` may be null), truncated to
/// `max_length` tokens.
Segmentation segment_for_model(const EncoderConfig& cfg, const SubwordVocab* vocab, std::string_view text,
                               std::size_t max_length);

}  // namespace adaptlab
