#include "adaptlab/pretraining.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adaptlab/error.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/optim.hpp"

namespace adaptlab {

namespace {

constexpr std::uint64_t kValidationSeedSalt = 0x5eed'0f'fa11ULL;

struct Side {
  std::vector<std::string> train, valid;
  std::size_t train_tokens = 0, valid_tokens = 0;
};

std::size_t total_tokens(const std::vector<std::string>& lines, const TokenCounter& count) {
  std::size_t n = 0;
  for (const auto& l : lines) n += count(l);
  return n;
}

Side split_side(std::span<const std::string> lines, const TokenCounter& count, std::uint64_t seed) {
  std::vector<std::string> shuffled(lines.begin(), lines.end());
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const std::size_t n_valid = validation_size(shuffled.size());
  Side side;
  side.valid.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_valid));
  side.train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_valid), shuffled.end());
  side.train_tokens = total_tokens(side.train, count);
  side.valid_tokens = total_tokens(side.valid, count);
  return side;
}

// Keeps sentences in order while the running total stays within 102% of
// `budget`.
std::size_t truncate_to(std::vector<std::string>& lines, std::size_t budget, const TokenCounter& count) {
  const double upper = 1.02 * static_cast<double>(budget);
  std::vector<std::string> kept;
  std::size_t total = 0;
  for (auto& l : lines) {
    const std::size_t t = count(l);
    if (static_cast<double>(total + t) <= upper) {
      total += t;
      kept.push_back(std::move(l));
    }
  }
  lines = std::move(kept);
  return total;
}

void balance(std::vector<std::string>& a, std::size_t& a_tokens, std::vector<std::string>& b, std::size_t& b_tokens,
             const TokenCounter& count) {
  if (a_tokens > b_tokens)
    a_tokens = truncate_to(a, b_tokens, count);
  else if (b_tokens > a_tokens)
    b_tokens = truncate_to(b, a_tokens, count);
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

MaskAction draw_action(const MaskingPolicy& policy, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  if (u < policy.mask_prob) return MaskAction::Mask;
  if (u < policy.mask_prob + policy.random_prob) return MaskAction::Random;
  return MaskAction::Keep;
}

void check_masking_args(double rate, const MaskingPolicy& policy) {
  ADAPTLAB_REQUIRE(rate >= 0.0 && rate <= 1.0, "masking rate must lie in [0, 1]");
  ADAPTLAB_REQUIRE(policy.mask_prob >= 0.0 && policy.random_prob >= 0.0 && policy.mask_prob + policy.random_prob <= 1.0,
                   "masking policy probabilities must be non-negative and sum to at most 1");
}

struct Example {
  std::vector<int> ids;  // subword ids (MLM) or byte ids (CANINE-S)
  std::string text;
};

std::vector<int> input_ids(const std::string& text, Objective objective, const SubwordVocab& vocab,
                           std::size_t max_length) {
  Segmentation seg = objective == Objective::Mlm ? vocab.encode(text) : byte_encode(text);
  return seg.truncated(max_length).token_ids;
}

MaskingPlan make_plan(const std::string& text, const std::vector<int>& ids, Objective objective,
                      const EncoderModel& model, const PretrainConfig& config, const SubwordVocab& vocab,
                      std::mt19937_64& rng) {
  if (objective == Objective::Mlm)
    return mask_for_mlm(ids, config.mask_rate, config.policy, model.config().vocab_size, rng);
  // Mask on the full text, then drop targets beyond the truncated length.
  MaskingPlan plan = mask_for_canine_s(text, vocab, model.config().rate(), config.mask_rate, config.policy, rng);
  if (plan.input_ids.size() > ids.size()) {
    plan.input_ids.resize(ids.size() - 1);
    plan.input_ids.push_back(kSepId);
    const std::size_t down = (ids.size() + model.config().rate() - 1) / model.config().rate();
    MaskingPlan cut;
    cut.input_ids = std::move(plan.input_ids);
    for (std::size_t i = 0; i < plan.size(); ++i)
      if (plan.positions[i] < down) {
        cut.positions.push_back(plan.positions[i]);
        cut.targets.push_back(plan.targets[i]);
        cut.actions.push_back(plan.actions[i]);
      }
    plan = std::move(cut);
  }
  return plan;
}

// Mean cross entropy over the plan's targets; undefined tensor when the plan
// has no targets.
Tensor plan_loss(const EncoderModel& model, const MaskingPlan& plan, Objective objective, std::string_view language) {
  if (plan.size() == 0) return {};
  EncoderOutput out = model.encode(plan.input_ids, language, false);
  Tensor rows = ops::gather_rows(out.layers.back(), plan.positions);
  Tensor logits = objective == Objective::Mlm ? model.mlm_logits(rows) : model.pretrain_logits(rows);
  std::vector<std::size_t> targets(plan.targets.begin(), plan.targets.end());
  return ops::cross_entropy(logits, targets);
}

void check_objective(const EncoderModel& model, Objective objective, const SubwordVocab& vocab) {
  const auto& cfg = model.config();
  if (objective == Objective::Mlm) {
    ADAPTLAB_REQUIRE(!is_char_variant(cfg.variant), "MLM needs a subword variant");
    ADAPTLAB_REQUIRE(cfg.vocab_size == vocab.size(), "model vocab_size differs from the tokenizer vocabulary");
  } else {
    ADAPTLAB_REQUIRE(is_char_variant(cfg.variant), "CANINE-S needs a char variant");
    ADAPTLAB_REQUIRE(cfg.output_vocab_size == vocab.size(),
                     "model output_vocab_size differs from the tokenizer vocabulary");
  }
}

std::set<std::string> frozen_names(const ParameterStore& params, const std::set<std::string>& trainable) {
  std::set<std::string> out;
  for (const auto& p : params.entries())
    if (!trainable.count(p.name)) out.insert(p.name);
  return out;
}

}  // namespace

TokenCounter subword_token_counter(const SubwordVocab& vocab) {
  return [&vocab](const std::string& line) {
    const auto ids = vocab.encode(line).token_ids;
    return static_cast<std::size_t>(std::count_if(ids.begin(), ids.end(), [](int id) { return !is_special_id(id); }));
  };
}

std::size_t validation_size(std::size_t n) { return std::max<std::size_t>(1, (n * 5 + 50) / 100); }

MixedCorpus build_mixed_corpus(std::span<const std::string> target_lines, std::span<const std::string> source_lines,
                               const TokenCounter& count, bool mix, std::uint64_t seed) {
  if (target_lines.size() < 2) throw DataError("target corpus needs at least 2 sentences for a train/valid split");
  if (mix && source_lines.size() < 2) throw DataError("mixing needs at least 2 source sentences");
  Side target = split_side(target_lines, count, seed);
  MixedCorpus out;
  if (mix) {
    Side source = split_side(source_lines, count, seed + 1);
    balance(target.train, target.train_tokens, source.train, source.train_tokens, count);
    balance(target.valid, target.valid_tokens, source.valid, source.valid_tokens, count);
    out.source_train = std::move(source.train);
    out.source_valid = std::move(source.valid);
    out.source_train_tokens = source.train_tokens;
    out.source_valid_tokens = source.valid_tokens;
  }
  out.target_train = std::move(target.train);
  out.target_valid = std::move(target.valid);
  out.target_train_tokens = target.train_tokens;
  out.target_valid_tokens = target.valid_tokens;
  return out;
}

MixedCorpus build_source_corpus(std::span<const std::string> source_lines, const TokenCounter& count,
                                std::uint64_t seed) {
  if (source_lines.size() < 2) throw DataError("source corpus needs at least 2 sentences for a train/valid split");
  Side source = split_side(source_lines, count, seed + 1);
  MixedCorpus out;
  out.source_train = std::move(source.train);
  out.source_valid = std::move(source.valid);
  out.source_train_tokens = source.train_tokens;
  out.source_valid_tokens = source.valid_tokens;
  return out;
}

MaskingPlan mask_for_mlm(std::span<const int> ids, double rate, const MaskingPolicy& policy, std::size_t vocab_size,
                         std::mt19937_64& rng) {
  check_masking_args(rate, policy);
  ADAPTLAB_REQUIRE(vocab_size > static_cast<std::size_t>(kNumSpecialTokens), "vocabulary has no ordinary tokens");
  std::uniform_int_distribution<int> random_token(kNumSpecialTokens, static_cast<int>(vocab_size) - 1);
  MaskingPlan plan;
  plan.input_ids.assign(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (is_special_id(ids[i])) continue;
    if (uniform01(rng) >= rate) continue;
    const MaskAction action = draw_action(policy, rng);
    if (action == MaskAction::Mask) plan.input_ids[i] = kMaskId;
    if (action == MaskAction::Random) plan.input_ids[i] = random_token(rng);
    plan.positions.push_back(i);
    plan.targets.push_back(ids[i]);
    plan.actions.push_back(action);
  }
  return plan;
}

MaskingPlan mask_for_canine_s(std::string_view text, const SubwordVocab& vocab, std::size_t r, double rate,
                              const MaskingPolicy& policy, std::mt19937_64& rng) {
  check_masking_args(rate, policy);
  ADAPTLAB_REQUIRE(r >= 1, "downsampling rate must be >= 1");
  std::uniform_int_distribution<int> random_byte(kByteOffset, kByteVocabSize - 1);
  const Segmentation subwords = vocab.encode(text);
  MaskingPlan plan;
  plan.input_ids = byte_encode(text).token_ids;
  std::set<std::size_t> taken;
  for (std::size_t t = 0; t < subwords.size(); ++t) {
    const int id = subwords.token_ids[t];
    const Span span = subwords.byte_spans[t];
    if (is_special_id(id) || span.begin == span.end) continue;
    if (uniform01(rng) >= rate) continue;
    // Byte i of the text sits at sequence index i + 1, after [CLS].
    const std::size_t position = (span.begin + 1) / r;
    if (!taken.insert(position).second) continue;
    const MaskAction action = draw_action(policy, rng);
    for (std::size_t b = span.begin; b < span.end; ++b) {
      if (action == MaskAction::Mask) plan.input_ids[b + 1] = kMaskId;
      if (action == MaskAction::Random) plan.input_ids[b + 1] = random_byte(rng);
    }
    plan.positions.push_back(position);
    plan.targets.push_back(id);
    plan.actions.push_back(action);
  }
  return plan;
}

std::string objective_name(Objective o) { return o == Objective::Mlm ? "mlm" : "canine-s"; }

Objective parse_objective(std::string_view name) {
  if (name == "mlm") return Objective::Mlm;
  if (name == "canine-s") return Objective::CanineS;
  throw ContractViolation("unknown objective: " + std::string(name));
}

Objective default_objective(Variant v) { return is_char_variant(v) ? Objective::CanineS : Objective::Mlm; }

nlohmann::json pretrain_config_to_json(const PretrainConfig& c) {
  return {{"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"max_length", c.max_length},
          {"mask_rate", c.mask_rate},
          {"mask_prob", c.policy.mask_prob},
          {"random_prob", c.policy.random_prob},
          {"seed", c.seed},
          {"init_target_adapter", c.init_target_adapter}};
}

PretrainConfig pretrain_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"lr",        "epochs",    "batch_size",  "max_length",         "mask_rate",
                                           "mask_prob", "random_prob", "seed",      "init_target_adapter"};
  ADAPTLAB_REQUIRE(j.is_object(), "pretrain config must be an object");
  for (const auto& [k, v] : j.items()) ADAPTLAB_REQUIRE(known.count(k), "unknown pretrain config key: " + k);
  PretrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_length = j.value("max_length", c.max_length);
  c.mask_rate = j.value("mask_rate", c.mask_rate);
  c.policy.mask_prob = j.value("mask_prob", c.policy.mask_prob);
  c.policy.random_prob = j.value("random_prob", c.policy.random_prob);
  c.seed = j.value("seed", c.seed);
  c.init_target_adapter = j.value("init_target_adapter", c.init_target_adapter);
  ADAPTLAB_REQUIRE(c.epochs >= 1 && c.batch_size >= 1 && c.max_length >= 2, "pretrain epochs, batch_size, max_length");
  return c;
}

nlohmann::json pretrain_run_to_json(const PretrainRun& run) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : run.epochs) {
    nlohmann::json rec{{"epoch", e.epoch}, {"valid_loss", e.valid_loss}};
    rec["train_loss"] = std::isnan(e.train_loss) ? nlohmann::json(nullptr) : nlohmann::json(e.train_loss);
    epochs.push_back(rec);
  }
  return {{"config", pretrain_config_to_json(run.config)},
          {"regime", regime_name(run.regime)},
          {"objective", objective_name(run.objective)},
          {"epochs", epochs},
          {"best_epoch", run.best_epoch},
          {"best_checkpoint", run.best_checkpoint_id()},
          {"trainable", run.trainable},
          {"frozen_hash_before", run.frozen_hash_before},
          {"frozen_hash_after", run.frozen_hash_after}};
}

std::size_t select_best_epoch(std::span<const EpochRecord> epochs) {
  ADAPTLAB_REQUIRE(epochs.size() >= 2, "checkpoint selection needs at least one trained epoch");
  std::size_t best = 1;
  for (std::size_t i = 2; i < epochs.size(); ++i)
    if (epochs[i].valid_loss < epochs[best].valid_loss) best = i;
  return best;
}

double validation_loss(const EncoderModel& model, std::span<const std::string> sentences, std::string_view language,
                       Objective objective, const PretrainConfig& config, const SubwordVocab& vocab,
                       std::uint64_t seed) {
  NoGradGuard no_grad;
  std::mt19937_64 rng(seed);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : sentences) {
    const auto ids = input_ids(s, objective, vocab, config.max_length);
    const MaskingPlan plan = make_plan(s, ids, objective, model, config, vocab, rng);
    Tensor loss = plan_loss(model, plan, objective, language);
    if (!loss.defined()) continue;
    total += loss.item() * static_cast<double>(plan.size());
    count += plan.size();
  }
  if (count == 0) throw DataError("validation split produced no masked targets");
  return total / static_cast<double>(count);
}

PretrainRun pretrain(EncoderModel& model, const MixedCorpus& corpus, Objective objective, Regime regime,
                     const RegimeLanguages& languages, const PretrainConfig& config, const SubwordVocab& vocab,
                     const EpochCallback& on_epoch) {
  check_objective(model, objective, vocab);
  ADAPTLAB_REQUIRE(config.epochs >= 1 && config.batch_size >= 1, "pretrain needs epochs >= 1 and batch_size >= 1");
  if (corpus.target_train.empty() && corpus.source_train.empty()) throw DataError("pretraining corpus is empty");
  const bool modular = is_modular_variant(model.config().variant);
  const std::string target_lang = modular ? languages.target : std::string();
  const std::string source_lang = modular ? languages.source : std::string();

  PretrainRun run;
  run.config = config;
  run.regime = regime;
  run.objective = objective;
  run.trainable = apply_regime(model, regime, languages);
  const std::set<std::string> frozen = frozen_names(model.params(), run.trainable);
  run.frozen_hash_before = hash_parameters(model.params(), frozen);

  if (modular && config.init_target_adapter && !corpus.target_train.empty() && languages.source != languages.target)
    model.copy_adapter(languages.source, languages.target);

  // Single-language batches in a seeded order.
  struct Batch {
    bool target;
    std::vector<std::size_t> items;
  };
  auto make_batches = [&](std::mt19937_64& rng) {
    std::vector<Batch> batches;
    for (bool is_target : {true, false}) {
      const auto& lines = is_target ? corpus.target_train : corpus.source_train;
      std::vector<std::size_t> order(lines.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
        const std::size_t e = std::min(order.size(), s + config.batch_size);
        batches.push_back({is_target, std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(s),
                                                               order.begin() + static_cast<std::ptrdiff_t>(e))});
      }
    }
    std::shuffle(batches.begin(), batches.end(), rng);
    return batches;
  };

  std::vector<std::vector<int>> target_ids, source_ids;
  for (const auto& s : corpus.target_train) target_ids.push_back(input_ids(s, objective, vocab, config.max_length));
  for (const auto& s : corpus.source_train) source_ids.push_back(input_ids(s, objective, vocab, config.max_length));

  const std::uint64_t valid_seed = config.seed ^ kValidationSeedSalt;
  auto evaluate = [&] {
    double total = 0.0, weight = 0.0;
    if (!corpus.target_valid.empty()) {
      const double w = static_cast<double>(corpus.target_valid.size());
      total += w * validation_loss(model, corpus.target_valid, target_lang, objective, config, vocab, valid_seed);
      weight += w;
    }
    if (!corpus.source_valid.empty()) {
      const double w = static_cast<double>(corpus.source_valid.size());
      total += w * validation_loss(model, corpus.source_valid, source_lang, objective, config, vocab, valid_seed + 1);
      weight += w;
    }
    if (weight == 0.0) throw DataError("pretraining corpus has no validation sentences");
    const double v = total / weight;
    if (!std::isfinite(v)) throw DivergenceError("validation loss is not finite");
    return v;
  };

  run.epochs.push_back({0, std::numeric_limits<double>::quiet_NaN(), evaluate()});
  if (on_epoch) on_epoch(run.epochs.back());

  Adam adam(model.params(), run.trainable, AdamHyper{config.lr, 0.9, 0.999, 1e-8});
  std::mt19937_64 rng(config.seed);
  ParameterStore best_values;
  auto snapshot = [&] {
    best_values = ParameterStore();
    for (const auto& name : run.trainable) {
      const Parameter& p = model.params().entry(name);
      best_values.add(p.name, p.group, p.value.clone());
    }
  };
  snapshot();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const Batch& batch : make_batches(rng)) {
      const auto& lines = batch.target ? corpus.target_train : corpus.source_train;
      const auto& ids = batch.target ? target_ids : source_ids;
      const std::string& lang = batch.target ? target_lang : source_lang;
      std::vector<Tensor> losses;
      for (std::size_t i : batch.items) {
        const MaskingPlan plan = make_plan(lines[i], ids[i], objective, model, config, vocab, rng);
        Tensor l = plan_loss(model, plan, objective, lang);
        if (l.defined()) losses.push_back(l);
      }
      if (losses.empty()) continue;
      Tensor loss = ops::average(losses);
      if (!std::isfinite(loss.item()))
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
      model.params().zero_grad();
      backward(loss);
      adam.step(model.params());
      loss_sum += loss.item() * static_cast<double>(losses.size());
      loss_count += losses.size();
    }
    const double train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    run.epochs.push_back({epoch, train_loss, evaluate()});
    if (on_epoch) on_epoch(run.epochs.back());
    if (epoch == 1 || run.epochs.back().valid_loss < run.epochs[run.best_epoch].valid_loss) {
      run.best_epoch = epoch;
      snapshot();
    }
  }
  run.best_epoch = select_best_epoch(run.epochs);
  model.params().copy_matching(best_values, best_values.groups());
  model.params().zero_grad();
  run.frozen_hash_after = hash_parameters(model.params(), frozen);
  return run;
}

TwoStageRun two_stage_char_adapter(EncoderModel& model, const MixedCorpus& source_corpus, const MixedCorpus& mixed,
                                   const RegimeLanguages& languages, const PretrainConfig& stage1,
                                   const PretrainConfig& stage2, const SubwordVocab& vocab,
                                   const EpochCallback& on_epoch) {
  ADAPTLAB_REQUIRE(model.config().variant == Variant::ModularChar, "two-stage schedule needs a modular-char model");
  ADAPTLAB_REQUIRE(source_corpus.target_train.empty(), "stage 1 trains on source sentences only");
  TwoStageRun out;
  out.stage1 = pretrain(model, source_corpus, Objective::CanineS, Regime::CharModulesStage1, languages, stage1, vocab,
                        on_epoch);
  out.stage2 =
      pretrain(model, mixed, Objective::CanineS, Regime::CharAdapterStage2, languages, stage2, vocab, on_epoch);
  return out;
}

}  // namespace adaptlab
