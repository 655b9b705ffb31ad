#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "adaptlab/encoder.hpp"
#include "adaptlab/tokenizers.hpp"

namespace adaptlab {

struct TaggedSentence {
  std::vector<std::string> words;
  std::vector<std::string> tags;
};

/// Token-level task data. Tags outside `inventory` are allowed only when
/// they are listed in `masked_tags` (evaluation-only tags).
struct TokenTaggedCorpus {
  std::vector<TaggedSentence> sentences;
  std::vector<std::string> inventory;
  std::set<std::string> masked_tags;
  void validate() const;
};

struct LabeledSentence {
  std::string text;
  std::string label;
};

struct LabeledSentenceCorpus {
  std::vector<LabeledSentence> items;
  std::vector<std::string> inventory;
  void validate() const;
};

/// `word<TAB>tag` lines, blank line between sentences. The inventory is the
/// sorted set of tags seen, minus `masked_tags`.
TokenTaggedCorpus parse_token_task(std::istream& in, const std::set<std::string>& masked_tags = {});
TokenTaggedCorpus read_token_task(const std::filesystem::path& path, const std::set<std::string>& masked_tags = {});
void write_token_task(std::ostream& out, const TokenTaggedCorpus& corpus);

/// `sentence<TAB>label` lines; the inventory is the sorted set of labels.
LabeledSentenceCorpus parse_sequence_task(std::istream& in);
LabeledSentenceCorpus read_sequence_task(const std::filesystem::path& path);
void write_sequence_task(std::ostream& out, const LabeledSentenceCorpus& corpus);

/// Index of the first token of each of `num_words` words. Throws DataError
/// when a word has no token (for instance after truncation).
std::vector<std::size_t> first_token_alignment(std::size_t num_words, const Segmentation& segmentation);

/// Accuracy over positions whose gold tag is not masked.
double pos_accuracy(std::span<const std::string> predictions, std::span<const std::string> gold,
                    const std::set<std::string>& masked_tags = {});

/// Per-class F1 weighted by gold support.
double weighted_f1(std::span<const std::string> predictions, std::span<const std::string> gold);

struct SampleStats {
  double mean = 0.0;
  double stddev = 0.0;  // n - 1 denominator; 0 for a single value
};
SampleStats sample_stats(std::span<const double> values);

enum class TaskKind { Token, Sequence };
enum class SelectionMetric { Accuracy, WeightedF1 };

struct FinetuneConfig {
  double lr = 2e-5;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::size_t max_length = 64;
  double head_init_std = 0.02;
};

nlohmann::json finetune_config_to_json(const FinetuneConfig& c);
FinetuneConfig finetune_config_from_json(const nlohmann::json& j);

/// Adapter routing for fine-tuning: training and validation sentences use
/// `train`, held-out test sentences use `test`. Ignored by monolithic models.
struct FinetuneLanguages {
  std::string train;
  std::string test;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<double> valid_metric;  // epochs 1..E
  std::size_t best_epoch = 0;
  double test_metric = 0.0;
  std::vector<std::string> test_predictions;  // one per word or per sentence
};

struct FinetuneReport {
  TaskKind task = TaskKind::Token;
  SelectionMetric metric = SelectionMetric::Accuracy;
  std::vector<SeedRun> runs;
  double mean = 0.0;
  double stddev = 0.0;
  std::string frozen_hash_before, frozen_hash_after;  // adapter groups of modular models
  std::vector<double> values() const;
};

nlohmann::json finetune_report_to_json(const FinetuneReport& r);

/// Unified view of both task kinds.
struct ClassificationData {
  std::vector<std::string> texts;
  std::vector<std::vector<std::string>> labels;  // per word (token task) or a single label
  std::vector<std::string> inventory;
  std::set<std::string> masked_tags;
};
ClassificationData to_classification_data(const TokenTaggedCorpus& corpus);
ClassificationData to_classification_data(const LabeledSentenceCorpus& corpus);

/// For every seed: copies `model`, attaches a seeded linear head, trains it
/// with Adam for `epochs` (modular models keep their adapters frozen),
/// keeps the epoch with the best validation metric, and scores the test
/// split. The token head reads each word's first upsampled token state; the
/// sequence head reads the first-position state.
FinetuneReport finetune_classifier(const EncoderModel& model, const SubwordVocab* vocab, TaskKind task,
                                   const ClassificationData& train, const ClassificationData& valid,
                                   const ClassificationData& test, const FinetuneConfig& config,
                                   std::span<const std::uint64_t> seeds, const FinetuneLanguages& languages);

/// Default selection metric: accuracy for token tasks, weighted F1 for
/// sequence tasks.
SelectionMetric default_metric(TaskKind task);

}  // namespace adaptlab
