#pragma once

#include <bit>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "adaptlab/encoder.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/tokenizers.hpp"

namespace adaptlab::testing {

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, bool requires_grad = false,
                            double std = 1.0) {
  std::normal_distribution<double> n(0.0, std);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return Tensor::matrix(rows, cols, std::move(v), requires_grad);
}

/// sum(out * R) for a fixed random R with entries of std 1/sqrt(numel), so
/// the loss stays O(1) and its gradient reaches every element.
inline Tensor projected(const Tensor& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const double std = 1.0 / std::sqrt(static_cast<double>(out.numel()));
  return ops::weighted_sum(out, random_matrix(out.rows(), out.cols(), rng, false, std));
}

/// Seeded sentences over a small lexicon; `shift` rewrites vowels so the
/// result reads like a related variety.
inline std::vector<std::string> toy_sentences(std::uint64_t seed, std::size_t lines, bool shift = false) {
  static const std::vector<std::string> lexicon{"der",   "hund",   "lauft", "schnell", "uber", "die",   "wiese",
                                                "katze", "schlaft", "im",   "garten",  "ein",  "mann",  "liest",
                                                "buch",  "am",     "abend", "kinder",  "spielen", "laut"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, lexicon.size() - 1), len(3, 8);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < lines; ++i) {
    std::string line;
    const std::size_t n = len(rng);
    for (std::size_t w = 0; w < n; ++w) {
      if (w) line += ' ';
      std::string word = lexicon[pick(rng)];
      if (shift)
        for (auto& c : word) c = c == 'a' ? 'o' : c == 'u' ? 'i' : c;
      line += word;
    }
    out.push_back(line);
  }
  return out;
}

inline EncoderConfig toy_config(Variant variant, std::size_t layers = 2, std::size_t width = 32,
                                std::size_t rate = 4) {
  EncoderConfig cfg;
  cfg.variant = variant;
  cfg.hidden_width = width;
  cfg.num_layers = layers;
  cfg.num_heads = 2;
  cfg.ffn_width = 2 * width;
  cfg.max_positions = 64;
  cfg.vocab_size = kByteVocabSize + 19;
  cfg.seed = 5;
  if (is_modular_variant(variant)) cfg.adapter = AdapterConfig{0, {"src", "tgt"}};
  if (is_char_variant(variant)) {
    cfg.sampler = SamplerConfig{rate, 0, 0};
    cfg.output_vocab_size = 40;
  }
  return cfg;
}

/// Random ids: [CLS] body [SEP], valid for any variant of `cfg`.
inline std::vector<int> random_ids(const EncoderConfig& cfg, std::size_t n, std::mt19937_64& rng) {
  const int top = is_char_variant(cfg.variant) ? kByteVocabSize : static_cast<int>(cfg.vocab_size);
  std::uniform_int_distribution<int> pick(kNumSpecialTokens, top - 1);
  std::vector<int> ids{kClsId};
  while (ids.size() + 1 < n) ids.push_back(pick(rng));
  ids.push_back(kSepId);
  return ids;
}

inline void perturb_group(ParameterStore& params, const std::string& group, std::mt19937_64& rng, double std = 0.5) {
  std::normal_distribution<double> n(0.0, std);
  for (const auto& name : params.names_in_group(group))
    for (auto& v : params.get(name).mutable_values()) v += n(rng);
}

inline void zero_adapter_outputs(ParameterStore& params) {
  for (const auto& p : params.entries())
    if (p.group.rfind("adapter.", 0) == 0 && p.name.find(".up.") != std::string::npos) {
      Tensor t = p.value;
      for (auto& v : t.mutable_values()) v = 0.0;
    }
}

inline bool bit_identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::bit_cast<std::uint64_t>(x[i]) != std::bit_cast<std::uint64_t>(y[i])) return false;
  return true;
}

inline bool bit_identical(const EncoderOutput& a, const EncoderOutput& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (!bit_identical(a.layers[i], b.layers[i])) return false;
  if (a.char_states.defined() != b.char_states.defined()) return false;
  return !a.char_states.defined() || bit_identical(a.char_states, b.char_states);
}

inline std::set<std::string> names_with_prefix(const ParameterStore& params, std::initializer_list<std::string> prefixes) {
  std::set<std::string> out;
  for (const auto& p : params.entries())
    for (const auto& pre : prefixes)
      if (p.name.rfind(pre, 0) == 0) out.insert(p.name);
  return out;
}

/// Scalar touching every layer, the char states and the pretraining head,
/// so a gradient check reaches every parameter of a full model.
inline Tensor probe_loss(const EncoderModel& model, const std::vector<int>& ids) {
  EncoderOutput out = model.encode(ids, "src");
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < out.layers.size(); ++i) terms.push_back(projected(out.layers[i], 10 + i));
  std::vector<std::size_t> targets;
  if (is_char_variant(model.config().variant)) {
    terms.push_back(projected(out.char_states, 3));
    for (std::size_t i = 0; i < out.layers.back().rows(); ++i) targets.push_back((7 * i + 1) % 40);
    terms.push_back(ops::cross_entropy(model.pretrain_logits(out.layers.back()), targets));
  } else {
    for (std::size_t i = 0; i < ids.size(); ++i) targets.push_back((11 * i + 3) % model.config().vocab_size);
    terms.push_back(ops::cross_entropy(model.mlm_logits(out.layers.back()), targets));
  }
  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = ops::add(total, terms[i]);
  return total;
}

}  // namespace adaptlab::testing
