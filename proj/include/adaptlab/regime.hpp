#pragma once

#include <set>
#include <string>
#include <string_view>

#include "adaptlab/encoder.hpp"

namespace adaptlab {

enum class Regime { AdapterOnly, AdapterEmbeddings, All, CharModulesStage1, CharAdapterStage2 };

std::string regime_name(Regime r);
Regime parse_regime(std::string_view name);

struct RegimeLanguages {
  std::string source;
  std::string target;
};

/// Trainable parameter names of a regime:
///   adapter-only        target adapter
///   adapter+embeddings  target adapter, token or byte embedding table
///   all                 every parameter
///   char-modules-stage1 byte embeddings, sampler, pretraining head
///   char-adapter-stage2 sampler, source and target adapters, pretraining head
/// Throws ContractViolation when the regime does not fit the variant.
std::set<std::string> regime_trainable_names(const EncoderModel& model, Regime regime,
                                             const RegimeLanguages& languages);

/// Sets requires_grad on exactly the regime's parameters and returns them.
std::set<std::string> apply_regime(EncoderModel& model, Regime regime, const RegimeLanguages& languages);

struct ParameterCount {
  std::size_t total = 0;
  std::size_t trainable = 0;
};

ParameterCount count_parameters(const EncoderModel& model, Regime regime, const RegimeLanguages& languages);

}  // namespace adaptlab
