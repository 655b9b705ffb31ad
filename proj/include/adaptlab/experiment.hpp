#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "adaptlab/downstream.hpp"
#include "adaptlab/encoder.hpp"
#include "adaptlab/pretraining.hpp"
#include "adaptlab/regime.hpp"
#include "adaptlab/report.hpp"
#include "adaptlab/retrieval.hpp"

namespace adaptlab {

/// Stages of one experiment, in execution order.
enum class Stage { Config, Tokenizer, Model, Pretrain, Finetune, Retrieval, Report };
std::string stage_name(Stage s);
/// Process exit code for a failure in `s` (0 is success).
int stage_exit_code(Stage s);

class ExperimentError : public std::runtime_error {
 public:
  ExperimentError(Stage stage, const std::string& what)
      : std::runtime_error(stage_name(stage) + ": " + what), stage_(stage) {}
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

struct SplitPaths {
  std::filesystem::path train, valid, test;
};

struct RetrievalPaths {
  std::string name;
  std::filesystem::path queries, candidates;
};

enum class RetrievalMethod { Encoder, ChrF };

struct ExperimentConfig {
  std::string name = "experiment";
  Variant variant = Variant::ModularSubword;

  // Tokenizer: load `vocab` or train one of `vocab_size` on `vocab_corpus`.
  std::optional<std::filesystem::path> vocab;
  std::optional<std::filesystem::path> vocab_corpus;
  std::size_t vocab_size = 0;

  // Model: start from `base_checkpoint`, or initialize from `model`
  // (vocab_size is filled in from the tokenizer).
  std::optional<std::filesystem::path> base_checkpoint;
  EncoderConfig model;

  // Pretraining; skipped when `regime` is empty.
  std::optional<Regime> regime;
  std::optional<Objective> objective;  // default follows the variant
  RegimeLanguages languages{"src", "tgt"};
  std::optional<std::filesystem::path> target_corpus, source_corpus;
  bool mix = false;
  PretrainConfig pretrain;
  std::optional<PretrainConfig> stage1;  // runs char-modules-stage1 on the source corpus first

  /// Adapter that reads target-language text at evaluation time; defaults to
  /// languages.target. A baseline without pretraining routes through the source.
  std::optional<std::string> eval_language;

  FinetuneConfig finetune;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::optional<SplitPaths> pos;  // train/valid: source language; test: target
  std::vector<std::string> pos_masked_tags;
  std::optional<SplitPaths> gdi;  // all splits in the target language
  std::vector<RetrievalPaths> retrieval;  // queries: source; candidates: target
  RetrievalMethod retrieval_method = RetrievalMethod::Encoder;
  RepresentationOptions representation;

  std::optional<std::filesystem::path> reference_report;  // for the relative column
  std::filesystem::path output_dir = "out";

  std::string evaluation_language() const { return eval_language.value_or(languages.target); }
  /// Variant/regime/objective compatibility and required fields.
  void validate() const;
};

/// Relative paths resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json experiment_config_to_json(const ExperimentConfig& c);
/// Throws ExperimentError(Stage::Config) for unreadable or invalid files.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ExperimentResult {
  EvaluationReport report;
  std::filesystem::path report_path, manifest_path, checkpoint_path;
};

/// Runs every configured stage and writes manifest.json, report.json,
/// vocab.txt and checkpoints/model.ckpt into the output directory. On
/// failure the report holds the completed stages plus `failed_stage`, and an
/// ExperimentError is thrown.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

/// Re-runs the experiment recorded in a manifest after checking the input
/// hashes; `output_dir` overrides the recorded one when given.
ExperimentResult rerun_from_manifest(const std::filesystem::path& manifest,
                                     const std::optional<std::filesystem::path>& output_dir = {},
                                     std::ostream* log = nullptr);

/// Lower-case hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace adaptlab
