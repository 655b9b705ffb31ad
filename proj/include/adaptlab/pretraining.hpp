#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "adaptlab/encoder.hpp"
#include "adaptlab/regime.hpp"
#include "adaptlab/tokenizers.hpp"

namespace adaptlab {

/// Counts the tokens of one sentence; mixing balances these counts.
using TokenCounter = std::function<std::size_t(const std::string&)>;
TokenCounter subword_token_counter(const SubwordVocab& vocab);

struct MixedCorpus {
  std::vector<std::string> target_train, source_train, target_valid, source_valid;
  std::size_t target_train_tokens = 0, source_train_tokens = 0;
  std::size_t target_valid_tokens = 0, source_valid_tokens = 0;
};

/// Number of validation sentences out of n: 5%, rounded, at least 1.
std::size_t validation_size(std::size_t n);

/// Seeded shuffle of each side, then a 95/5 split. With `mix`, the side with
/// more tokens keeps whole sentences (in shuffled order, skipping any that
/// would overshoot) up to 102% of the other side's tokens, for both splits.
MixedCorpus build_mixed_corpus(std::span<const std::string> target_lines, std::span<const std::string> source_lines,
                               const TokenCounter& count, bool mix, std::uint64_t seed);

/// Source-only corpus: the same split with empty target sides.
MixedCorpus build_source_corpus(std::span<const std::string> source_lines, const TokenCounter& count,
                                std::uint64_t seed);

enum class MaskAction { Mask, Random, Keep };

struct MaskingPolicy {
  double mask_prob = 0.8;
  double random_prob = 0.1;  // the remainder keeps the original token
};

/// Masked input plus prediction targets. For MLM `positions` index the input
/// tokens; for CANINE-S they index downsampled positions and `targets` hold
/// subword ids.
struct MaskingPlan {
  std::vector<int> input_ids;
  std::vector<std::size_t> positions;
  std::vector<int> targets;
  std::vector<MaskAction> actions;
  std::size_t size() const { return positions.size(); }
};

/// Each non-special position is selected independently with probability
/// `rate`; random replacements draw non-special ids below `vocab_size`.
MaskingPlan mask_for_mlm(std::span<const int> ids, double rate, const MaskingPolicy& policy, std::size_t vocab_size,
                         std::mt19937_64& rng);

/// Selects subwords of `text` at `rate`, rewrites the bytes of each selected
/// span, and attaches the subword id to downsampled position
/// (span_begin + 1) / r, the first one overlapping the span. A subword whose
/// position already holds a target is not selected.
MaskingPlan mask_for_canine_s(std::string_view text, const SubwordVocab& vocab, std::size_t r, double rate,
                              const MaskingPolicy& policy, std::mt19937_64& rng);

enum class Objective { Mlm, CanineS };
std::string objective_name(Objective o);
Objective parse_objective(std::string_view name);
Objective default_objective(Variant v);

struct PretrainConfig {
  double lr = 1e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::size_t max_length = 64;  // tokens (subword) or bytes (char), including [CLS] and [SEP]
  double mask_rate = 0.15;
  MaskingPolicy policy;
  std::uint64_t seed = 0;
  /// Copy the source adapter onto the target adapter before training when the
  /// model is modular and the corpus has target sentences.
  bool init_target_adapter = true;
};

nlohmann::json pretrain_config_to_json(const PretrainConfig& c);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = std::numeric_limits<double>::quiet_NaN();  // NaN for epoch 0
  double valid_loss = 0.0;
};

struct PretrainRun {
  PretrainConfig config;
  Regime regime = Regime::All;
  Objective objective = Objective::Mlm;
  std::vector<EpochRecord> epochs;  // epochs[0] is the untrained model
  std::size_t best_epoch = 0;
  std::set<std::string> trainable;
  std::string frozen_hash_before, frozen_hash_after;

  double best_valid_loss() const { return epochs.at(best_epoch).valid_loss; }
  std::string best_checkpoint_id() const { return "epoch-" + std::to_string(best_epoch); }
};

nlohmann::json pretrain_run_to_json(const PretrainRun& run);

/// Argmin of validation loss over epochs 1..E, earliest on ties.
std::size_t select_best_epoch(std::span<const EpochRecord> epochs);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains the regime's parameters with Adam (constant lr) on single-language
/// batches, evaluates the fixed-seed validation masking after every epoch,
/// and leaves the model at its best epoch. Target sentences route through
/// `languages.target`, source sentences through `languages.source`.
/// Throws DivergenceError on a non-finite loss.
PretrainRun pretrain(EncoderModel& model, const MixedCorpus& corpus, Objective objective, Regime regime,
                     const RegimeLanguages& languages, const PretrainConfig& config, const SubwordVocab& vocab,
                     const EpochCallback& on_epoch = {});

/// Mean masked-prediction loss over `sentences` with the masking fixed by
/// `seed`; the value pretrain records as validation loss.
double validation_loss(const EncoderModel& model, std::span<const std::string> sentences, std::string_view language,
                       Objective objective, const PretrainConfig& config, const SubwordVocab& vocab,
                       std::uint64_t seed);

struct TwoStageRun {
  PretrainRun stage1;
  PretrainRun stage2;
};

/// Stage 1: char-modules-stage1 on the source corpus. Stage 2:
/// char-adapter-stage2 on the mixed corpus, starting from stage 1's best
/// epoch. Modular-char only.
TwoStageRun two_stage_char_adapter(EncoderModel& model, const MixedCorpus& source_corpus, const MixedCorpus& mixed,
                                   const RegimeLanguages& languages, const PretrainConfig& stage1,
                                   const PretrainConfig& stage2, const SubwordVocab& vocab,
                                   const EpochCallback& on_epoch = {});

}  // namespace adaptlab
