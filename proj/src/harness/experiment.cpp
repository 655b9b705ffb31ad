#include "adaptlab/experiment.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "adaptlab/error.hpp"
#include "adaptlab/tokenizers.hpp"

namespace adaptlab {

namespace fs = std::filesystem;
using nlohmann::json;

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Config: return "config";
    case Stage::Tokenizer: return "tokenizer";
    case Stage::Model: return "model";
    case Stage::Pretrain: return "pretrain";
    case Stage::Finetune: return "finetune";
    case Stage::Retrieval: return "retrieval";
    case Stage::Report: return "report";
  }
  return "unknown";
}

int stage_exit_code(Stage s) { return 2 + static_cast<int>(s); }

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

namespace {

// ---------------------------------------------------------------- config I/O

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

std::optional<fs::path> opt_path(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return resolve(base, j[key].get<std::string>());
}

SplitPaths split_from_json(const json& j, const fs::path& base) {
  return {resolve(base, j.at("train").get<std::string>()), resolve(base, j.at("valid").get<std::string>()),
          resolve(base, j.at("test").get<std::string>())};
}

json split_to_json(const SplitPaths& s) {
  return {{"train", s.train.string()}, {"valid", s.valid.string()}, {"test", s.test.string()}};
}

json opt_to_json(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

std::string retrieval_method_name(RetrievalMethod m) { return m == RetrievalMethod::ChrF ? "chrf" : "encoder"; }

RetrievalMethod parse_retrieval_method(const std::string& s) {
  if (s == "encoder") return RetrievalMethod::Encoder;
  if (s == "chrf") return RetrievalMethod::ChrF;
  throw ContractViolation("unknown retrieval method: " + s);
}

void check_keys(const json& j, const std::set<std::string>& known, const std::string& what) {
  ADAPTLAB_REQUIRE(j.is_object(), what + " must be an object");
  for (const auto& [k, v] : j.items()) ADAPTLAB_REQUIRE(known.count(k), "unknown " + what + " key: " + k);
}

// ---------------------------------------------------------------- helpers

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read corpus " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string norm = normalize_whitespace(line);
    if (!norm.empty()) lines.push_back(std::move(norm));
  }
  if (lines.empty()) throw DataError("corpus " + path.string() + " is empty");
  return lines;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

bool needs_vocab(const ExperimentConfig& c) {
  if (!is_char_variant(c.variant)) return true;
  return c.regime.has_value() && c.objective.value_or(default_objective(c.variant)) == Objective::CanineS;
}

/// Every input file the experiment reads, by role.
std::map<std::string, fs::path> input_files(const ExperimentConfig& c) {
  std::map<std::string, fs::path> files;
  if (c.vocab) files["vocab"] = *c.vocab;
  if (c.vocab_corpus) files["vocab_corpus"] = *c.vocab_corpus;
  if (c.base_checkpoint) files["base_checkpoint"] = *c.base_checkpoint;
  if (c.target_corpus) files["target_corpus"] = *c.target_corpus;
  if (c.source_corpus) files["source_corpus"] = *c.source_corpus;
  if (c.pos) {
    files["pos.train"] = c.pos->train;
    files["pos.valid"] = c.pos->valid;
    files["pos.test"] = c.pos->test;
  }
  if (c.gdi) {
    files["gdi.train"] = c.gdi->train;
    files["gdi.valid"] = c.gdi->valid;
    files["gdi.test"] = c.gdi->test;
  }
  for (const auto& r : c.retrieval) {
    files["retrieval." + r.name + ".queries"] = r.queries;
    files["retrieval." + r.name + ".candidates"] = r.candidates;
  }
  if (c.reference_report) files["reference_report"] = *c.reference_report;
  return files;
}

TaskScore task_score(const FinetuneReport& r) {
  TaskScore t;
  for (double v : r.values()) t.per_seed.push_back(100.0 * v);
  const SampleStats s = sample_stats(t.per_seed);
  t.mean = s.mean;
  t.stddev = s.stddev;
  return t;
}

/// Drives the stages and keeps report.json and manifest.json current.
class Runner {
 public:
  Runner(const ExperimentConfig& c, std::ostream* log) : c_(c), log_(log) {}

  ExperimentResult run() {
    Stage stage = Stage::Config;
    try {
      prepare();
      stage = Stage::Tokenizer;
      tokenizer();
      stage = Stage::Model;
      build_model();
      if (c_.regime) {
        stage = Stage::Pretrain;
        pretraining();
      }
      stage = Stage::Model;
      save_model();
      stage = Stage::Finetune;
      finetuning();
      stage = Stage::Retrieval;
      retrieval();
      stage = Stage::Report;
      finish();
    } catch (const ExperimentError&) {
      throw;
    } catch (const std::exception& e) {
      fail(stage, e.what());
    }
    return result_;
  }

 private:
  void note(const std::string& msg) {
    if (log_) *log_ << "[" << c_.name << "] " << msg << std::endl;
  }

  void prepare() {
    c_.validate();
    for (const auto& [role, path] : input_files(c_))
      if (!fs::is_regular_file(path)) throw DataError(role + " file does not exist: " + path.string());
    for (const auto& [role, path] : input_files(c_)) inputs_[role] = {{"path", path.string()}, {"sha256", file_sha256(path)}};

    if (c_.base_checkpoint) {
      // Compatibility is checked against the stored configuration before any training.
      model_config_ = EncoderModel::load(*c_.base_checkpoint).config();
      if (model_config_.variant != c_.variant)
        throw ContractViolation("base checkpoint is " + variant_name(model_config_.variant) + ", config asks for " +
                                variant_name(c_.variant));
    } else {
      model_config_ = c_.model;
      model_config_.variant = c_.variant;
    }
    if (is_modular_variant(c_.variant)) {
      std::vector<std::string> needed{c_.languages.source, c_.evaluation_language()};
      if (c_.regime && c_.target_corpus) needed.push_back(c_.languages.target);
      const auto& langs = model_config_.adapter ? model_config_.adapter->languages : std::vector<std::string>{};
      for (const auto& l : needed)
        if (std::find(langs.begin(), langs.end(), l) == langs.end())
          throw ContractViolation("model has no adapter for language '" + l + "'");
    }

    out_ = c_.output_dir;
    fs::create_directories(out_ / "checkpoints");
    result_.report_path = out_ / "report.json";
    result_.manifest_path = out_ / "manifest.json";
    result_.checkpoint_path = out_ / "checkpoints" / "model.ckpt";
    write_manifest("running");
    write_report();
  }

  void tokenizer() {
    if (c_.vocab) {
      vocab_ = SubwordVocab::load(*c_.vocab);
      note("loaded vocabulary of " + std::to_string(vocab_->size()) + " entries");
    } else if (c_.vocab_corpus) {
      const auto lines = read_lines(*c_.vocab_corpus);
      vocab_ = SubwordVocab::train(lines, c_.vocab_size);
      note("trained vocabulary of " + std::to_string(vocab_->size()) + " entries");
    }
    if (vocab_) {
      vocab_->save(out_ / "vocab.txt");
      result_.report.details["tokenizer"] = {{"size", vocab_->size()}, {"sha256", file_sha256(out_ / "vocab.txt")}};
    }
  }

  void build_model() {
    if (c_.base_checkpoint) {
      model_ = std::make_unique<EncoderModel>(EncoderModel::load(*c_.base_checkpoint));
    } else {
      EncoderConfig cfg = model_config_;
      if (vocab_) {
        if (is_char_variant(cfg.variant))
          cfg.output_vocab_size = vocab_->size();
        else
          cfg.vocab_size = vocab_->size();
      }
      model_ = std::make_unique<EncoderModel>(cfg);
    }
    const auto& cfg = model_->config();
    if (vocab_ && !is_char_variant(cfg.variant) && cfg.vocab_size != vocab_->size())
      throw ContractViolation("model vocab_size differs from the tokenizer vocabulary");
    result_.report.details["model"] = config_to_json(cfg);
    note("model " + variant_name(cfg.variant) + " with " + std::to_string(model_->params().numel()) +
         " parameters");
  }

  TokenCounter counter() const {
    if (is_char_variant(c_.variant)) return [](const std::string& s) { return count_code_points(s); };
    return subword_token_counter(*vocab_);
  }

  void pretraining() {
    const Regime regime = *c_.regime;
    const Objective objective = c_.objective.value_or(default_objective(c_.variant));
    const std::uint64_t seed = c_.pretrain.seed;
    std::vector<std::string> target, source;
    if (c_.target_corpus) target = read_lines(*c_.target_corpus);
    if (c_.source_corpus) source = read_lines(*c_.source_corpus);
    const TokenCounter count = counter();

    auto on_epoch = [&](const EpochRecord& e) {
      char buf[128];
      if (std::isnan(e.train_loss))
        std::snprintf(buf, sizeof buf, "pretrain epoch %zu valid %.4f", e.epoch, e.valid_loss);
      else
        std::snprintf(buf, sizeof buf, "pretrain epoch %zu train %.4f valid %.4f", e.epoch, e.train_loss,
                      e.valid_loss);
      note(buf);
    };
    json record;
    if (c_.stage1) {
      const MixedCorpus source_only = build_source_corpus(source, count, c_.stage1->seed);
      const MixedCorpus mixed = build_mixed_corpus(target, source, count, c_.mix, seed);
      const TwoStageRun run = two_stage_char_adapter(*model_, source_only, mixed, c_.languages, *c_.stage1,
                                                     c_.pretrain, *vocab_, on_epoch);
      record = {{"stage1", pretrain_run_to_json(run.stage1)}, {"stage2", pretrain_run_to_json(run.stage2)}};
      best_checkpoint_ = run.stage2.best_checkpoint_id();
    } else {
      const MixedCorpus corpus = target.empty() ? build_source_corpus(source, count, seed)
                                                : build_mixed_corpus(target, source, count, c_.mix, seed);
      const PretrainRun run = pretrain(*model_, corpus, objective, regime, c_.languages, c_.pretrain,
                                       vocab_ ? *vocab_ : SubwordVocab{}, on_epoch);
      record = pretrain_run_to_json(run);
      record["corpus"] = {{"target_train", corpus.target_train.size()},
                          {"target_valid", corpus.target_valid.size()},
                          {"source_train", corpus.source_train.size()},
                          {"source_valid", corpus.source_valid.size()},
                          {"target_train_tokens", corpus.target_train_tokens},
                          {"source_train_tokens", corpus.source_train_tokens}};
      best_checkpoint_ = run.best_checkpoint_id();
    }
    pretraining_ = record;
    result_.report.details["pretraining"] = record;
    write_report();
    write_manifest("running");
  }

  void save_model() {
    model_->save(result_.checkpoint_path);
    result_.report.details["checkpoint_sha256"] = file_sha256(result_.checkpoint_path);
  }

  const SubwordVocab* vocab_ptr() const { return vocab_ ? &*vocab_ : nullptr; }

  void finetuning() {
    const std::string eval = c_.evaluation_language();
    if (c_.pos) {
      const std::set<std::string> masked(c_.pos_masked_tags.begin(), c_.pos_masked_tags.end());
      const auto train = to_classification_data(read_token_task(c_.pos->train, masked));
      const auto valid = to_classification_data(read_token_task(c_.pos->valid, masked));
      const auto test = to_classification_data(read_token_task(c_.pos->test, masked));
      note("fine-tuning pos on " + std::to_string(train.texts.size()) + " sentences");
      const FinetuneReport r = finetune_classifier(*model_, vocab_ptr(), TaskKind::Token, train, valid, test,
                                                   c_.finetune, c_.seeds, {c_.languages.source, eval});
      result_.report.pos = task_score(r);
      result_.report.details["pos"] = finetune_report_to_json(r);
      note("pos " + format_one_decimal(result_.report.pos->mean));
      write_report();
    }
    if (c_.gdi) {
      const auto train = to_classification_data(read_sequence_task(c_.gdi->train));
      const auto valid = to_classification_data(read_sequence_task(c_.gdi->valid));
      const auto test = to_classification_data(read_sequence_task(c_.gdi->test));
      note("fine-tuning gdi on " + std::to_string(train.texts.size()) + " sentences");
      const FinetuneReport r = finetune_classifier(*model_, vocab_ptr(), TaskKind::Sequence, train, valid, test,
                                                   c_.finetune, c_.seeds, {eval, eval});
      result_.report.gdi = task_score(r);
      result_.report.details["gdi"] = finetune_report_to_json(r);
      note("gdi " + format_one_decimal(result_.report.gdi->mean));
      write_report();
    }
  }

  void retrieval() {
    json details = json::array();
    for (const auto& paths : c_.retrieval) {
      const RetrievalTask task = read_retrieval_task(paths.queries, paths.candidates);
      const RetrievalResult r =
          c_.retrieval_method == RetrievalMethod::ChrF
              ? retrieve_with_chrf(task)
              : retrieve_with_encoder(*model_, vocab_ptr(), task, c_.languages.source, c_.evaluation_language(),
                                      c_.representation);
      result_.report.retrieval.push_back({paths.name, 100.0 * r.accuracy});
      details.push_back({{"name", paths.name}, {"pairs", task.queries.size()}, {"predicted", r.predicted}});
      note("retrieval " + paths.name + " " + format_one_decimal(100.0 * r.accuracy));
    }
    if (!c_.retrieval.empty()) {
      result_.report.details["retrieval"] = details;
      write_report();
    }
  }

  void finish() {
    result_.report.update_macro();
    if (c_.reference_report && result_.report.macro_avg) {
      const EvaluationReport ref = report_from_json(read_json(*c_.reference_report));
      if (!ref.macro_avg) throw DataError("reference report has no macro average");
      result_.report.relative = relative_performance(*result_.report.macro_avg, *ref.macro_avg);
    }
    if (!result_.report.self_consistent()) throw ContractViolation("report aggregates are not self-consistent");
    write_report();
    write_manifest("complete");
    note("done");
  }

  [[noreturn]] void fail(Stage stage, const std::string& what) {
    result_.report.details["failed_stage"] = stage_name(stage);
    result_.report.details["error"] = what;
    // Without an output directory there is nothing to preserve.
    if (!out_.empty()) {
      try {
        write_report();
        write_manifest("failed", stage_name(stage) + ": " + what);
      } catch (const std::exception&) {
      }
    }
    throw ExperimentError(stage, what);
  }

  void write_report() const { write_text(result_.report_path, report_to_json(result_.report).dump(2) + "\n"); }

  void write_manifest(const std::string& status, const std::string& error = {}) const {
    json m;
    m["format"] = "adaptlab-experiment-manifest";
    m["version"] = 1;
    m["status"] = status;
    if (!error.empty()) m["error"] = error;
    m["config"] = experiment_config_to_json(c_);
    m["seeds"] = c_.seeds;
    m["inputs"] = inputs_;
    m["pretraining"] = pretraining_;
    m["best_checkpoint"] = best_checkpoint_.empty() ? json(nullptr) : json(best_checkpoint_);
    m["artifacts"] = {{"report", "report.json"}, {"checkpoint", "checkpoints/model.ckpt"},
                      {"vocab", vocab_ ? json("vocab.txt") : json(nullptr)}};
    if (status == "complete") {
      m["artifacts_sha256"] = {{"report", file_sha256(result_.report_path)},
                               {"checkpoint", file_sha256(result_.checkpoint_path)}};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    m["elapsed_seconds"] = seconds;
    write_text(result_.manifest_path, m.dump(2) + "\n");
  }

  ExperimentConfig c_;
  std::ostream* log_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  fs::path out_;
  json inputs_ = json::object();
  json pretraining_ = nullptr;
  std::string best_checkpoint_;
  EncoderConfig model_config_;
  std::optional<SubwordVocab> vocab_;
  std::unique_ptr<EncoderModel> model_;
  ExperimentResult result_;
};

}  // namespace

void ExperimentConfig::validate() const {
  ADAPTLAB_REQUIRE(!name.empty(), "experiment name is empty");
  ADAPTLAB_REQUIRE(!output_dir.empty(), "output_dir is empty");
  if (needs_vocab(*this))
    ADAPTLAB_REQUIRE(vocab || (vocab_corpus && vocab_size > 0),
                     "a subword vocabulary (vocab, or vocab_corpus with vocab_size) is required");
  ADAPTLAB_REQUIRE(!(vocab && vocab_corpus), "give either vocab or vocab_corpus, not both");
  if (regime) {
    const Objective obj = objective.value_or(default_objective(variant));
    ADAPTLAB_REQUIRE((obj == Objective::CanineS) == is_char_variant(variant),
                     objective_name(obj) + " does not fit variant " + variant_name(variant));
    switch (*regime) {
      case Regime::AdapterOnly:
      case Regime::AdapterEmbeddings:
        ADAPTLAB_REQUIRE(is_modular_variant(variant), regime_name(*regime) + " needs a modular variant");
        ADAPTLAB_REQUIRE(target_corpus.has_value(), regime_name(*regime) + " needs a target corpus");
        break;
      case Regime::All:
        ADAPTLAB_REQUIRE(target_corpus || source_corpus, "pretraining needs a corpus");
        break;
      case Regime::CharModulesStage1:
        ADAPTLAB_REQUIRE(variant == Variant::ModularChar, "char-modules-stage1 needs the modular-char variant");
        ADAPTLAB_REQUIRE(source_corpus && !target_corpus, "char-modules-stage1 trains on a source corpus only");
        break;
      case Regime::CharAdapterStage2:
        ADAPTLAB_REQUIRE(variant == Variant::ModularChar, "char-adapter-stage2 needs the modular-char variant");
        ADAPTLAB_REQUIRE(target_corpus.has_value(), "char-adapter-stage2 needs a target corpus");
        if (stage1) ADAPTLAB_REQUIRE(source_corpus.has_value(), "stage 1 needs a source corpus");
        break;
    }
    if (mix) ADAPTLAB_REQUIRE(target_corpus && source_corpus, "mixing needs target and source corpora");
  }
  ADAPTLAB_REQUIRE(!stage1 || regime == Regime::CharAdapterStage2, "stage1 only precedes char-adapter-stage2");
  if (pos || gdi) ADAPTLAB_REQUIRE(!seeds.empty(), "fine-tuning needs at least one seed");
  std::set<std::string> names;
  for (const auto& r : retrieval) ADAPTLAB_REQUIRE(names.insert(r.name).second, "duplicate retrieval name " + r.name);
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  check_keys(j,
             {"name", "variant", "vocab", "vocab_corpus", "vocab_size", "base_checkpoint", "model", "regime",
              "objective", "languages", "target_corpus", "source_corpus", "mix", "pretrain", "stage1",
              "eval_language", "finetune", "seeds", "pos", "pos_masked_tags", "gdi", "retrieval",
              "retrieval_method", "representation", "reference_report", "output_dir"},
             "experiment config");
  ExperimentConfig c;
  c.name = j.value("name", c.name);
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.vocab = opt_path(j, "vocab", base_dir);
  c.vocab_corpus = opt_path(j, "vocab_corpus", base_dir);
  c.vocab_size = j.value("vocab_size", std::size_t{0});
  c.base_checkpoint = opt_path(j, "base_checkpoint", base_dir);
  if (j.contains("model") && !j["model"].is_null()) {
    // Vocabulary sizes come from the tokenizer; a placeholder passes validation.
    json m = j["model"];
    m["variant"] = variant_name(c.variant);
    const bool unsized = !is_char_variant(c.variant) && m.value("vocab_size", std::size_t{0}) == 0;
    if (unsized) m["vocab_size"] = kByteVocabSize;
    c.model = config_from_json(m);
    if (unsized) c.model.vocab_size = 0;
  }
  c.model.variant = c.variant;
  if (j.contains("regime") && !j["regime"].is_null()) c.regime = parse_regime(j["regime"].get<std::string>());
  if (j.contains("objective") && !j["objective"].is_null())
    c.objective = parse_objective(j["objective"].get<std::string>());
  if (j.contains("languages")) {
    check_keys(j["languages"], {"source", "target"}, "languages");
    c.languages.source = j["languages"].value("source", c.languages.source);
    c.languages.target = j["languages"].value("target", c.languages.target);
  }
  c.target_corpus = opt_path(j, "target_corpus", base_dir);
  c.source_corpus = opt_path(j, "source_corpus", base_dir);
  c.mix = j.value("mix", false);
  if (j.contains("pretrain")) c.pretrain = pretrain_config_from_json(j["pretrain"]);
  if (j.contains("stage1") && !j["stage1"].is_null()) c.stage1 = pretrain_config_from_json(j["stage1"]);
  if (j.contains("eval_language") && !j["eval_language"].is_null())
    c.eval_language = j["eval_language"].get<std::string>();
  if (j.contains("finetune")) c.finetune = finetune_config_from_json(j["finetune"]);
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("pos") && !j["pos"].is_null()) c.pos = split_from_json(j["pos"], base_dir);
  c.pos_masked_tags = j.value("pos_masked_tags", std::vector<std::string>{});
  if (j.contains("gdi") && !j["gdi"].is_null()) c.gdi = split_from_json(j["gdi"], base_dir);
  if (j.contains("retrieval")) {
    for (const auto& r : j["retrieval"]) {
      check_keys(r, {"name", "queries", "candidates"}, "retrieval entry");
      c.retrieval.push_back({r.at("name").get<std::string>(), resolve(base_dir, r.at("queries").get<std::string>()),
                             resolve(base_dir, r.at("candidates").get<std::string>())});
    }
  }
  if (j.contains("retrieval_method")) c.retrieval_method = parse_retrieval_method(j["retrieval_method"]);
  if (j.contains("representation")) {
    check_keys(j["representation"], {"include_embeddings", "max_length"}, "representation");
    c.representation.include_embeddings = j["representation"].value("include_embeddings", false);
    c.representation.max_length = j["representation"].value("max_length", c.representation.max_length);
  }
  c.reference_report = opt_path(j, "reference_report", base_dir);
  if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
  return c;
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["variant"] = variant_name(c.variant);
  j["vocab"] = opt_to_json(c.vocab);
  j["vocab_corpus"] = opt_to_json(c.vocab_corpus);
  j["vocab_size"] = c.vocab_size;
  j["base_checkpoint"] = opt_to_json(c.base_checkpoint);
  if (c.base_checkpoint) {
    j["model"] = nullptr;
  } else {
    j["model"] = config_to_json(c.model);
    j["model"]["variant"] = variant_name(c.variant);
  }
  j["regime"] = c.regime ? json(regime_name(*c.regime)) : json(nullptr);
  j["objective"] = c.objective ? json(objective_name(*c.objective)) : json(nullptr);
  j["languages"] = {{"source", c.languages.source}, {"target", c.languages.target}};
  j["target_corpus"] = opt_to_json(c.target_corpus);
  j["source_corpus"] = opt_to_json(c.source_corpus);
  j["mix"] = c.mix;
  j["pretrain"] = pretrain_config_to_json(c.pretrain);
  j["stage1"] = c.stage1 ? pretrain_config_to_json(*c.stage1) : json(nullptr);
  j["eval_language"] = c.eval_language ? json(*c.eval_language) : json(nullptr);
  j["finetune"] = finetune_config_to_json(c.finetune);
  j["seeds"] = c.seeds;
  j["pos"] = c.pos ? split_to_json(*c.pos) : json(nullptr);
  j["pos_masked_tags"] = c.pos_masked_tags;
  j["gdi"] = c.gdi ? split_to_json(*c.gdi) : json(nullptr);
  j["retrieval"] = json::array();
  for (const auto& r : c.retrieval)
    j["retrieval"].push_back({{"name", r.name}, {"queries", r.queries.string()}, {"candidates", r.candidates.string()}});
  j["retrieval_method"] = retrieval_method_name(c.retrieval_method);
  j["representation"] = {{"include_embeddings", c.representation.include_embeddings},
                         {"max_length", c.representation.max_length}};
  j["reference_report"] = opt_to_json(c.reference_report);
  j["output_dir"] = c.output_dir.string();
  return j;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  try {
    return experiment_config_from_json(read_json(path), fs::absolute(path).parent_path());
  } catch (const ExperimentError&) {
    throw;
  } catch (const std::exception& e) {
    throw ExperimentError(Stage::Config, path.string() + ": " + e.what());
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log) {
  return Runner(config, log).run();
}

ExperimentResult rerun_from_manifest(const fs::path& manifest, const std::optional<fs::path>& output_dir,
                                     std::ostream* log) {
  ExperimentConfig config;
  json m;
  try {
    m = read_json(manifest);
    if (m.value("format", "") != "adaptlab-experiment-manifest")
      throw DataError(manifest.string() + " is not an experiment manifest");
    config = experiment_config_from_json(m.at("config"));
    for (const auto& [role, entry] : m.at("inputs").items()) {
      const fs::path path = entry.at("path").get<std::string>();
      if (!fs::is_regular_file(path)) throw DataError(role + " file is missing: " + path.string());
      if (file_sha256(path) != entry.at("sha256").get<std::string>())
        throw DataError(role + " file changed since the manifest was written: " + path.string());
    }
  } catch (const ExperimentError&) {
    throw;
  } catch (const std::exception& e) {
    throw ExperimentError(Stage::Config, e.what());
  }
  if (output_dir) config.output_dir = *output_dir;
  return run_experiment(config, log);
}

}  // namespace adaptlab
