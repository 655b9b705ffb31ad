#include "adaptlab/regime.hpp"

#include "adaptlab/error.hpp"

namespace adaptlab {

namespace {

struct RegimeName {
  Regime regime;
  const char* name;
};
constexpr RegimeName kRegimeNames[] = {{Regime::AdapterOnly, "adapter-only"},
                                       {Regime::AdapterEmbeddings, "adapter+embeddings"},
                                       {Regime::All, "all"},
                                       {Regime::CharModulesStage1, "char-modules-stage1"},
                                       {Regime::CharAdapterStage2, "char-adapter-stage2"}};

void insert_group(std::set<std::string>& out, const ParameterStore& params, const std::string& group) {
  for (auto& n : params.names_in_group(group)) out.insert(std::move(n));
}

void require_language(const EncoderConfig& cfg, const std::string& lang, Regime regime) {
  ADAPTLAB_REQUIRE(cfg.has_language(lang),
                   "regime " + regime_name(regime) + " needs configured language '" + lang + "'");
}

}  // namespace

std::string regime_name(Regime r) {
  for (const auto& e : kRegimeNames)
    if (e.regime == r) return e.name;
  throw ContractViolation("unknown regime");
}

Regime parse_regime(std::string_view name) {
  for (const auto& e : kRegimeNames)
    if (name == e.name) return e.regime;
  throw ContractViolation("unknown regime: " + std::string(name));
}

std::set<std::string> regime_trainable_names(const EncoderModel& model, Regime regime,
                                             const RegimeLanguages& languages) {
  const EncoderConfig& cfg = model.config();
  const ParameterStore& params = model.params();
  const std::string mismatch = "regime " + regime_name(regime) + " does not apply to " + variant_name(cfg.variant);
  std::set<std::string> out;
  switch (regime) {
    case Regime::All:
      for (const auto& p : params.entries()) out.insert(p.name);
      break;
    case Regime::AdapterOnly:
    case Regime::AdapterEmbeddings:
      ADAPTLAB_REQUIRE(is_modular_variant(cfg.variant), mismatch);
      require_language(cfg, languages.target, regime);
      insert_group(out, params, adapter_group(languages.target));
      if (regime == Regime::AdapterEmbeddings) insert_group(out, params, kGroupEmbeddings);
      break;
    case Regime::CharModulesStage1:
      ADAPTLAB_REQUIRE(cfg.variant == Variant::ModularChar, mismatch);
      insert_group(out, params, kGroupEmbeddings);
      insert_group(out, params, kGroupSampler);
      insert_group(out, params, kGroupPretrainHead);
      break;
    case Regime::CharAdapterStage2:
      ADAPTLAB_REQUIRE(cfg.variant == Variant::ModularChar, mismatch);
      require_language(cfg, languages.source, regime);
      require_language(cfg, languages.target, regime);
      insert_group(out, params, kGroupSampler);
      insert_group(out, params, kGroupPretrainHead);
      insert_group(out, params, adapter_group(languages.source));
      insert_group(out, params, adapter_group(languages.target));
      break;
  }
  return out;
}

std::set<std::string> apply_regime(EncoderModel& model, Regime regime, const RegimeLanguages& languages) {
  auto names = regime_trainable_names(model, regime, languages);
  model.params().set_trainable(names);
  return names;
}

ParameterCount count_parameters(const EncoderModel& model, Regime regime, const RegimeLanguages& languages) {
  ParameterCount out;
  out.total = model.params().numel();
  for (const auto& name : regime_trainable_names(model, regime, languages))
    out.trainable += model.params().get(name).numel();
  return out;
}

}  // namespace adaptlab
