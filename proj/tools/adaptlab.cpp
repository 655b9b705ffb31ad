// Command-line front end. Every training or evaluation subcommand reads the
// same experiment config file and runs the subset of stages it names.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "adaptlab/error.hpp"
#include "adaptlab/experiment.hpp"
#include "adaptlab/report.hpp"
#include "adaptlab/synthetic.hpp"
#include "adaptlab/tokenizers.hpp"

namespace fs = std::filesystem;
using namespace adaptlab;

namespace {

constexpr int kUsageError = 1;

struct Overrides {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string vocab;
  std::vector<std::uint64_t> seeds;
  bool quiet = false;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "Experiment config file (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out, "Output directory (overrides output_dir)");
  cmd->add_option("--checkpoint", o.checkpoint, "Start from this model checkpoint (overrides base_checkpoint)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--vocab", o.vocab, "Subword vocabulary file (overrides vocab and vocab_corpus)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seeds", o.seeds, "Fine-tuning seeds (overrides seeds)");
  cmd->add_flag("-q,--quiet", o.quiet, "Suppress progress lines on stderr");
}

ExperimentConfig load_with(const Overrides& o) {
  ExperimentConfig c = load_experiment_config(o.config);
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.checkpoint.empty()) {
    c.base_checkpoint = fs::absolute(o.checkpoint);
  }
  if (!o.vocab.empty()) {
    c.vocab = fs::absolute(o.vocab);
    c.vocab_corpus.reset();
  }
  if (!o.seeds.empty()) c.seeds = o.seeds;
  return c;
}

void print_summary(const ExperimentResult& r) {
  std::cout << format_report_row(r.report_path.parent_path().filename().string(), r.report) << "\n";
  std::cout << "report: " << r.report_path.string() << "\nmanifest: " << r.manifest_path.string() << "\n";
}

int run_config(ExperimentConfig c, bool quiet) {
  const ExperimentResult r = run_experiment(c, quiet ? nullptr : &std::cerr);
  print_summary(r);
  return 0;
}

EvaluationReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read report " + path);
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::vector<std::string> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read corpus " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    std::string norm = normalize_whitespace(line);
    if (!norm.empty()) lines.push_back(std::move(norm));
  }
  return lines;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adapt text encoders to a low-resource close dialect: pretraining regimes and evaluation harness"};
  app.require_subcommand(1);

  // gen-synthetic
  SyntheticConfig syn;
  std::string syn_out;
  auto* gen = app.add_subcommand("gen-synthetic", "Write the seeded synthetic source language and dialect corpora");
  gen->add_option("-o,--out", syn_out, "Output directory")->required();
  gen->add_option("--seed", syn.seed, "Generator seed")->capture_default_str();
  gen->add_option("--source-sentences", syn.source_sentences, "Source pretraining sentences")->capture_default_str();
  gen->add_option("--dialect-sentences", syn.dialect_sentences, "Dialect pretraining sentences")
      ->capture_default_str();
  gen->add_option("--pos-train", syn.pos_train, "POS training sentences")->capture_default_str();
  gen->add_option("--pos-valid", syn.pos_valid, "POS validation sentences")->capture_default_str();
  gen->add_option("--pos-test", syn.pos_test, "POS test sentences (dialect)")->capture_default_str();
  gen->add_option("--gdi-train", syn.gdi_train, "Dialect-ID training sentences")->capture_default_str();
  gen->add_option("--gdi-valid", syn.gdi_valid, "Dialect-ID validation sentences")->capture_default_str();
  gen->add_option("--gdi-test", syn.gdi_test, "Dialect-ID test sentences")->capture_default_str();
  gen->add_option("--retrieval-pairs", syn.retrieval_pairs, "Pairs per retrieval test set")->capture_default_str();
  gen->add_option("--regions", syn.regions, "Dialect regions")->capture_default_str();
  gen->add_option("--retrieval-sets", syn.retrieval_sets, "Retrieval test sets")->capture_default_str();
  gen->add_option("--spelling-variation", syn.spelling_variation, "Per-token spelling variant probability")
      ->capture_default_str();
  gen->add_option("--rule-coverage", syn.rule_coverage, "Fraction of word forms each sound rule reaches")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  // build-vocab
  std::vector<std::string> vocab_corpora;
  std::size_t vocab_size = 0;
  std::string vocab_out;
  auto* bv = app.add_subcommand("build-vocab", "Train a subword vocabulary");
  bv->add_option("--corpus", vocab_corpora, "Training corpus files, one sentence per line")
      ->required()
      ->check(CLI::ExistingFile);
  bv->add_option("--size", vocab_size, "Target vocabulary size (>= 261)")->required();
  bv->add_option("-o,--out", vocab_out, "Vocabulary output file")->required();
  std::vector<std::string> ratio_corpora;
  bv->add_option("--ratio", ratio_corpora, "Corpora to report the compression ratio of")->check(CLI::ExistingFile);

  Overrides pre_o, ft_o, ret_o, run_o;
  auto* pre = app.add_subcommand("pretrain", "Run only the tokenizer, model and pretraining stages of a config");
  add_overrides(pre, pre_o);

  auto* ft = app.add_subcommand("finetune", "Fine-tune and evaluate POS and/or dialect ID (no pretraining)");
  add_overrides(ft, ft_o);
  std::string ft_task = "all";
  ft->add_option("--task", ft_task, "pos, gdi or all")->check(CLI::IsMember({"pos", "gdi", "all"}))
      ->capture_default_str();

  auto* ret = app.add_subcommand("retrieve", "Evaluate retrieval only (no pretraining)");
  add_overrides(ret, ret_o);
  std::string ret_method;
  ret->add_option("--method", ret_method, "encoder or chrf (overrides retrieval_method)")
      ->check(CLI::IsMember({"encoder", "chrf"}));

  auto* run = app.add_subcommand("run", "Run a full experiment from a config, or rerun one from its manifest");
  std::string manifest;
  run->add_option("-c,--config", run_o.config, "Experiment config file (JSON)")->check(CLI::ExistingFile);
  run->add_option("-m,--manifest", manifest, "manifest.json of an earlier run")->check(CLI::ExistingFile);
  run->add_option("-o,--out", run_o.out, "Output directory (overrides output_dir)");
  run->add_flag("-q,--quiet", run_o.quiet, "Suppress progress lines on stderr");

  std::vector<std::string> report_files, report_labels;
  std::string reference, baseline;
  bool check_only = false;
  auto* rep = app.add_subcommand("report", "Tabulate report.json files");
  rep->add_option("reports", report_files, "report.json files")->required()->check(CLI::ExistingFile);
  rep->add_option("--labels", report_labels, "Row labels (default: parent directory names)");
  rep->add_option("--reference", reference, "Report whose macro-average is 100% for the relative column")
      ->check(CLI::ExistingFile);
  rep->add_option("--baseline", baseline, "Report to compute the improvement ratio against")
      ->check(CLI::ExistingFile);
  rep->add_flag("--check", check_only, "Only verify that every aggregate is recomputable from raw scores");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen) {
      write_synthetic(generate_synthetic(syn), syn_out);
      std::cout << "wrote synthetic data to " << syn_out << "\n";
      return 0;
    }
    if (*bv) {
      try {
        std::vector<std::string> lines;
        for (const auto& p : vocab_corpora) {
          auto more = read_corpus(p);
          lines.insert(lines.end(), more.begin(), more.end());
        }
        const SubwordVocab vocab = SubwordVocab::train(lines, vocab_size);
        vocab.save(vocab_out);
        std::cout << "vocabulary: " << vocab.size() << " entries -> " << vocab_out << "\n";
        for (const auto& p : ratio_corpora) {
          const auto text = read_corpus(p);
          std::printf("compression ratio %s: %.3f\n", p.c_str(), compression_ratio(text, vocab));
        }
        return 0;
      } catch (const std::exception& e) {
        throw ExperimentError(Stage::Tokenizer, e.what());
      }
    }
    if (*pre) {
      ExperimentConfig c = load_with(pre_o);
      if (!c.regime) throw ExperimentError(Stage::Config, "config has no regime; nothing to pretrain");
      c.pos.reset();
      c.gdi.reset();
      c.retrieval.clear();
      c.reference_report.reset();
      return run_config(c, pre_o.quiet);
    }
    if (*ft) {
      ExperimentConfig c = load_with(ft_o);
      c.regime.reset();
      c.stage1.reset();
      c.retrieval.clear();
      if (ft_task == "pos") c.gdi.reset();
      if (ft_task == "gdi") c.pos.reset();
      if (!c.pos && !c.gdi) throw ExperimentError(Stage::Config, "config defines no fine-tuning task");
      return run_config(c, ft_o.quiet);
    }
    if (*ret) {
      ExperimentConfig c = load_with(ret_o);
      c.regime.reset();
      c.stage1.reset();
      c.pos.reset();
      c.gdi.reset();
      if (ret_method == "chrf") c.retrieval_method = RetrievalMethod::ChrF;
      if (ret_method == "encoder") c.retrieval_method = RetrievalMethod::Encoder;
      if (c.retrieval.empty()) throw ExperimentError(Stage::Config, "config defines no retrieval task");
      return run_config(c, ret_o.quiet);
    }
    if (*run) {
      if (run_o.config.empty() == manifest.empty()) {
        std::cerr << "run: give exactly one of --config or --manifest\n";
        return kUsageError;
      }
      std::optional<fs::path> out;
      if (!run_o.out.empty()) out = run_o.out;
      if (!manifest.empty()) {
        print_summary(rerun_from_manifest(manifest, out, run_o.quiet ? nullptr : &std::cerr));
        return 0;
      }
      ExperimentConfig c = load_experiment_config(run_o.config);
      if (out) c.output_dir = *out;
      return run_config(c, run_o.quiet);
    }
    if (*rep) {
      try {
        std::optional<EvaluationReport> ref, base;
        if (!reference.empty()) ref = read_report(reference);
        if (!baseline.empty()) base = read_report(baseline);
        bool consistent = true;
        for (std::size_t i = 0; i < report_files.size(); ++i) {
          EvaluationReport r = read_report(report_files[i]);
          const std::string label =
              i < report_labels.size() ? report_labels[i] : fs::path(report_files[i]).parent_path().filename().string();
          if (!r.self_consistent()) {
            consistent = false;
            std::cout << label << ": INCONSISTENT aggregates\n";
            continue;
          }
          if (check_only) {
            std::cout << label << ": consistent\n";
            continue;
          }
          if (ref && ref->macro_avg && r.macro_avg) r.relative = relative_performance(*r.macro_avg, *ref->macro_avg);
          std::string row = format_report_row(label, r);
          if (base && base->macro_avg && r.macro_avg)
            row += " | gain " + format_one_decimal(improvement_ratio(*r.macro_avg, *base->macro_avg)) + "%";
          std::cout << row << "\n";
        }
        return consistent ? 0 : stage_exit_code(Stage::Report);
      } catch (const ExperimentError&) {
        throw;
      } catch (const std::exception& e) {
        throw ExperimentError(Stage::Report, e.what());
      }
    }
  } catch (const ExperimentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return stage_exit_code(e.stage());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return 0;
}
