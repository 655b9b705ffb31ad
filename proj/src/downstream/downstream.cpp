#include "adaptlab/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "adaptlab/error.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/optim.hpp"

namespace adaptlab {

namespace {

constexpr const char* kHeadWeight = "task_head.w";
constexpr const char* kHeadBias = "task_head.b";

std::vector<std::string> sorted_unique(std::set<std::string> s, const std::set<std::string>& drop = {}) {
  std::vector<std::string> out;
  for (auto& x : s)
    if (!drop.count(x)) out.push_back(x);
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

// Index of the largest value, lowest index on ties.
std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.cols(); ++c)
    if (logits.at(row, c) > logits.at(row, best)) best = c;
  return best;
}

struct PreparedSplit {
  std::vector<std::vector<int>> ids;
  std::vector<std::vector<std::size_t>> positions;  // label positions (token task)
  std::vector<std::vector<std::size_t>> targets;     // class index per trained label
  std::vector<std::vector<std::size_t>> target_rows;  // row within positions for each target
};

PreparedSplit prepare(const EncoderModel& model, const SubwordVocab* vocab, TaskKind task,
                      const ClassificationData& data, const std::map<std::string, std::size_t>& classes,
                      std::size_t max_length) {
  PreparedSplit out;
  for (std::size_t i = 0; i < data.texts.size(); ++i) {
    const Segmentation seg = segment_for_model(model.config(), vocab, data.texts[i], max_length);
    out.ids.push_back(seg.token_ids);
    std::vector<std::size_t> pos, tgt, rows;
    if (task == TaskKind::Token) {
      pos = first_token_alignment(data.labels[i].size(), seg);
      if (seg.num_words != data.labels[i].size())
        throw DataError("sentence " + std::to_string(i) + " has " + std::to_string(seg.num_words) +
                        " words but " + std::to_string(data.labels[i].size()) + " tags");
    } else {
      pos = {0};
    }
    for (std::size_t k = 0; k < data.labels[i].size(); ++k) {
      auto it = classes.find(data.labels[i][k]);
      if (it == classes.end()) continue;
      tgt.push_back(it->second);
      rows.push_back(k);
    }
    out.positions.push_back(std::move(pos));
    out.targets.push_back(std::move(tgt));
    out.target_rows.push_back(std::move(rows));
  }
  return out;
}

Tensor head_logits(const EncoderModel& model, TaskKind task, std::span<const int> ids,
                   std::span<const std::size_t> positions, std::string_view language) {
  const bool chars = is_char_variant(model.config().variant);
  const bool upsample = chars && task == TaskKind::Token;
  EncoderOutput out = model.encode(ids, language, upsample);
  const Tensor& states = task == TaskKind::Token ? out.token_states() : out.layers.back();
  Tensor rows = ops::gather_rows(states, positions);
  return ops::linear(rows, model.params().get(kHeadWeight), model.params().get(kHeadBias));
}

std::vector<std::string> predict(const EncoderModel& model, TaskKind task, const PreparedSplit& split,
                                 const std::vector<std::string>& inventory, std::string_view language) {
  NoGradGuard no_grad;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < split.ids.size(); ++i) {
    Tensor logits = head_logits(model, task, split.ids[i], split.positions[i], language);
    for (std::size_t r = 0; r < logits.rows(); ++r) out.push_back(inventory[argmax_row(logits, r)]);
  }
  return out;
}

std::vector<std::string> flatten(const std::vector<std::vector<std::string>>& labels) {
  std::vector<std::string> out;
  for (const auto& l : labels) out.insert(out.end(), l.begin(), l.end());
  return out;
}

double score(SelectionMetric metric, std::span<const std::string> pred, std::span<const std::string> gold,
             const std::set<std::string>& masked) {
  return metric == SelectionMetric::Accuracy ? pos_accuracy(pred, gold, masked) : weighted_f1(pred, gold);
}

}  // namespace

void TokenTaggedCorpus::validate() const {
  const std::set<std::string> known(inventory.begin(), inventory.end());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    if (s.words.size() != s.tags.size())
      throw DataError("sentence " + std::to_string(i) + ": word and tag counts differ");
    if (s.words.empty()) throw DataError("sentence " + std::to_string(i) + " is empty");
    for (const auto& t : s.tags)
      if (!known.count(t) && !masked_tags.count(t))
        throw DataError("sentence " + std::to_string(i) + ": tag '" + t + "' is not in the inventory");
  }
}

void LabeledSentenceCorpus::validate() const {
  const std::set<std::string> known(inventory.begin(), inventory.end());
  for (std::size_t i = 0; i < items.size(); ++i)
    if (!known.count(items[i].label))
      throw DataError("line " + std::to_string(i + 1) + ": label '" + items[i].label + "' is not in the inventory");
}

TokenTaggedCorpus parse_token_task(std::istream& in, const std::set<std::string>& masked_tags) {
  TokenTaggedCorpus corpus;
  corpus.masked_tags = masked_tags;
  std::set<std::string> tags;
  TaggedSentence current;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!current.words.empty()) corpus.sentences.push_back(std::move(current));
    current = {};
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() || line.find('\t', tab + 1) != std::string::npos)
      throw DataError("line " + std::to_string(line_no) + ": expected word<TAB>tag");
    std::string word = line.substr(0, tab);
    if (word.find_first_of(" \t\n\r\f\v") != std::string::npos)
      throw DataError("line " + std::to_string(line_no) + ": word contains whitespace");
    current.words.push_back(std::move(word));
    current.tags.push_back(line.substr(tab + 1));
    tags.insert(current.tags.back());
  }
  flush();
  corpus.inventory = sorted_unique(tags, masked_tags);
  return corpus;
}

TokenTaggedCorpus read_token_task(const std::filesystem::path& path, const std::set<std::string>& masked_tags) {
  auto in = open_input(path);
  return parse_token_task(in, masked_tags);
}

void write_token_task(std::ostream& out, const TokenTaggedCorpus& corpus) {
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    if (i) out << '\n';
    const auto& s = corpus.sentences[i];
    for (std::size_t k = 0; k < s.words.size(); ++k) out << s.words[k] << '\t' << s.tags[k] << '\n';
  }
}

LabeledSentenceCorpus parse_sequence_task(std::istream& in) {
  LabeledSentenceCorpus corpus;
  std::set<std::string> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
      throw DataError("line " + std::to_string(line_no) + ": expected sentence<TAB>label");
    corpus.items.push_back({line.substr(0, tab), line.substr(tab + 1)});
    labels.insert(corpus.items.back().label);
  }
  corpus.inventory = sorted_unique(labels);
  return corpus;
}

LabeledSentenceCorpus read_sequence_task(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_sequence_task(in);
}

void write_sequence_task(std::ostream& out, const LabeledSentenceCorpus& corpus) {
  for (const auto& item : corpus.items) out << item.text << '\t' << item.label << '\n';
}

std::vector<std::size_t> first_token_alignment(std::size_t num_words, const Segmentation& segmentation) {
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> first(num_words, kUnset);
  for (std::size_t t = 0; t < segmentation.size(); ++t) {
    const int w = segmentation.word_index[t];
    if (w < 0 || static_cast<std::size_t>(w) >= num_words) continue;
    if (first[static_cast<std::size_t>(w)] == kUnset) first[static_cast<std::size_t>(w)] = t;
  }
  for (std::size_t w = 0; w < num_words; ++w)
    if (first[w] == kUnset) throw DataError("word " + std::to_string(w) + " has no token");
  return first;
}

double pos_accuracy(std::span<const std::string> predictions, std::span<const std::string> gold,
                    const std::set<std::string>& masked_tags) {
  ADAPTLAB_REQUIRE(predictions.size() == gold.size(), "predictions and gold differ in length");
  std::size_t correct = 0, counted = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (masked_tags.count(gold[i])) continue;
    ++counted;
    correct += predictions[i] == gold[i];
  }
  if (counted == 0) throw DataError("accuracy has an empty denominator");
  return static_cast<double>(correct) / static_cast<double>(counted);
}

double weighted_f1(std::span<const std::string> predictions, std::span<const std::string> gold) {
  ADAPTLAB_REQUIRE(predictions.size() == gold.size(), "predictions and gold differ in length");
  if (gold.empty()) throw DataError("weighted F1 of an empty set");
  std::map<std::string, std::size_t> support, predicted, hits;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++support[gold[i]];
    ++predicted[predictions[i]];
    if (predictions[i] == gold[i]) ++hits[gold[i]];
  }
  double total = 0.0;
  for (const auto& [label, n] : support) {
    const double tp = static_cast<double>(hits[label]);
    const double denom = static_cast<double>(n + predicted[label]);
    const double f1 = denom > 0 ? 2.0 * tp / denom : 0.0;
    total += f1 * static_cast<double>(n);
  }
  return total / static_cast<double>(gold.size());
}

SampleStats sample_stats(std::span<const double> values) {
  ADAPTLAB_REQUIRE(!values.empty(), "statistics of no values");
  SampleStats s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

nlohmann::json finetune_config_to_json(const FinetuneConfig& c) {
  return {{"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"max_length", c.max_length},
          {"head_init_std", c.head_init_std}};
}

FinetuneConfig finetune_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"lr", "epochs", "batch_size", "max_length", "head_init_std"};
  ADAPTLAB_REQUIRE(j.is_object(), "finetune config must be an object");
  for (const auto& [k, v] : j.items()) ADAPTLAB_REQUIRE(known.count(k), "unknown finetune config key: " + k);
  FinetuneConfig c;
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_length = j.value("max_length", c.max_length);
  c.head_init_std = j.value("head_init_std", c.head_init_std);
  return c;
}

std::vector<double> FinetuneReport::values() const {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.test_metric);
  return out;
}

nlohmann::json finetune_report_to_json(const FinetuneReport& r) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& s : r.runs)
    runs.push_back({{"seed", s.seed},
                    {"valid_metric", s.valid_metric},
                    {"best_epoch", s.best_epoch},
                    {"test_metric", s.test_metric}});
  return {{"task", r.task == TaskKind::Token ? "token" : "sequence"},
          {"metric", r.metric == SelectionMetric::Accuracy ? "accuracy" : "weighted-f1"},
          {"runs", runs},
          {"mean", r.mean},
          {"std", r.stddev},
          {"frozen_hash_before", r.frozen_hash_before},
          {"frozen_hash_after", r.frozen_hash_after}};
}

ClassificationData to_classification_data(const TokenTaggedCorpus& corpus) {
  corpus.validate();
  ClassificationData d;
  for (const auto& s : corpus.sentences) {
    std::string text;
    for (const auto& w : s.words) text += (text.empty() ? "" : " ") + w;
    d.texts.push_back(std::move(text));
    d.labels.push_back(s.tags);
  }
  d.inventory = corpus.inventory;
  d.masked_tags = corpus.masked_tags;
  return d;
}

ClassificationData to_classification_data(const LabeledSentenceCorpus& corpus) {
  corpus.validate();
  ClassificationData d;
  for (const auto& item : corpus.items) {
    d.texts.push_back(item.text);
    d.labels.push_back({item.label});
  }
  d.inventory = corpus.inventory;
  return d;
}

SelectionMetric default_metric(TaskKind task) {
  return task == TaskKind::Token ? SelectionMetric::Accuracy : SelectionMetric::WeightedF1;
}

FinetuneReport finetune_classifier(const EncoderModel& model, const SubwordVocab* vocab, TaskKind task,
                                   const ClassificationData& train, const ClassificationData& valid,
                                   const ClassificationData& test, const FinetuneConfig& config,
                                   std::span<const std::uint64_t> seeds, const FinetuneLanguages& languages) {
  if (train.texts.empty() || valid.texts.empty() || test.texts.empty())
    throw DataError("fine-tuning needs non-empty train, validation and test splits");
  ADAPTLAB_REQUIRE(!seeds.empty(), "fine-tuning needs at least one seed");
  ADAPTLAB_REQUIRE(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(),
                   "fine-tuning seeds must be distinct");
  ADAPTLAB_REQUIRE(config.epochs >= 1 && config.batch_size >= 1, "fine-tuning needs epochs >= 1 and batch_size >= 1");
  ADAPTLAB_REQUIRE(!train.inventory.empty(), "fine-tuning needs a label inventory");
  ADAPTLAB_REQUIRE(!model.params().contains(kHeadWeight), "model already carries a task head");

  const bool modular = is_modular_variant(model.config().variant);
  const std::string train_lang = modular ? languages.train : std::string();
  const std::string test_lang = modular ? languages.test : std::string();

  std::map<std::string, std::size_t> classes;
  for (std::size_t i = 0; i < train.inventory.size(); ++i) classes[train.inventory[i]] = i;
  const PreparedSplit train_split = prepare(model, vocab, task, train, classes, config.max_length);
  const PreparedSplit valid_split = prepare(model, vocab, task, valid, classes, config.max_length);
  const PreparedSplit test_split = prepare(model, vocab, task, test, classes, config.max_length);
  const auto valid_gold = flatten(valid.labels);
  const auto test_gold = flatten(test.labels);

  FinetuneReport report;
  report.task = task;
  report.metric = default_metric(task);
  std::set<std::string> adapters;
  for (const auto& p : model.params().entries())
    if (p.group.rfind("adapter.", 0) == 0) adapters.insert(p.name);
  report.frozen_hash_before = hash_parameters(model.params(), adapters);

  const std::size_t w = model.config().hidden_width, k = train.inventory.size();
  for (std::uint64_t seed : seeds) {
    EncoderModel tuned = model;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, config.head_init_std);
    std::vector<double> head(w * k);
    for (auto& x : head) x = normal(rng);
    tuned.params().add(kHeadWeight, kGroupTaskHead, Tensor::matrix(w, k, std::move(head), true));
    tuned.params().add(kHeadBias, kGroupTaskHead, Tensor::zeros({1, k}, true));

    std::set<std::string> trainable;
    for (const auto& p : tuned.params().entries()) {
      if (p.group == kGroupMlmHead || p.group == kGroupPretrainHead) continue;
      if (modular && adapters.count(p.name)) continue;
      trainable.insert(p.name);
    }
    tuned.params().set_trainable(trainable);
    Adam adam(tuned.params(), trainable, AdamHyper{config.lr, 0.9, 0.999, 1e-8});

    SeedRun run;
    run.seed = seed;
    ParameterStore best;
    double best_metric = -1.0;
    std::vector<std::size_t> order(train_split.ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
        const std::size_t e = std::min(order.size(), s + config.batch_size);
        std::size_t labeled = 0;
        for (std::size_t b = s; b < e; ++b) labeled += train_split.targets[order[b]].size();
        if (labeled == 0) continue;
        std::vector<Tensor> terms;
        for (std::size_t b = s; b < e; ++b) {
          const std::size_t i = order[b];
          if (train_split.targets[i].empty()) continue;
          Tensor logits = head_logits(tuned, task, train_split.ids[i], train_split.positions[i], train_lang);
          Tensor rows = ops::gather_rows(logits, train_split.target_rows[i]);
          Tensor ce = ops::cross_entropy(rows, train_split.targets[i]);
          terms.push_back(ops::scale(ce, static_cast<double>(train_split.targets[i].size()) /
                                             static_cast<double>(labeled)));
        }
        Tensor loss = terms.front();
        for (std::size_t t = 1; t < terms.size(); ++t) loss = ops::add(loss, terms[t]);
        if (!std::isfinite(loss.item()))
          throw DivergenceError("non-finite fine-tuning loss at epoch " + std::to_string(epoch));
        tuned.params().zero_grad();
        backward(loss);
        adam.step(tuned.params());
      }
      const auto pred = predict(tuned, task, valid_split, train.inventory, train_lang);
      const double m = score(report.metric, pred, valid_gold, valid.masked_tags);
      run.valid_metric.push_back(m);
      if (m > best_metric) {
        best_metric = m;
        run.best_epoch = epoch;
        best = ParameterStore();
        for (const auto& name : trainable) {
          const Parameter& p = tuned.params().entry(name);
          best.add(p.name, p.group, p.value.clone());
        }
      }
    }
    tuned.params().copy_matching(best, best.groups());
    tuned.params().zero_grad();
    run.test_predictions = predict(tuned, task, test_split, train.inventory, test_lang);
    run.test_metric = score(report.metric, run.test_predictions, test_gold, test.masked_tags);
    const std::string after = hash_parameters(tuned.params(), adapters);
    if (report.frozen_hash_after.empty() || report.frozen_hash_after == report.frozen_hash_before)
      report.frozen_hash_after = after;
    report.runs.push_back(std::move(run));
  }
  const auto values = report.values();
  const SampleStats stats = sample_stats(values);
  report.mean = stats.mean;
  report.stddev = stats.stddev;
  return report;
}

}  // namespace adaptlab
