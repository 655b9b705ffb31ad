#include <doctest.h>

#include <cmath>
#include <sstream>

#include "adaptlab/downstream.hpp"
#include "adaptlab/error.hpp"
#include "test_support.hpp"

using namespace adaptlab;
using namespace adaptlab::testing;

namespace {

using Labels = std::vector<std::string>;

// Confusion-matrix oracle, independent of the library's bookkeeping.
double f1_oracle(const Labels& pred, const Labels& gold) {
  std::set<std::string> classes(gold.begin(), gold.end());
  double total = 0.0;
  for (const auto& c : classes) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (gold[i] == c) ++support;
      if (pred[i] == c && gold[i] == c) ++tp;
      if (pred[i] == c && gold[i] != c) ++fp;
      if (pred[i] != c && gold[i] == c) ++fn;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    total += f * support / static_cast<double>(gold.size());
  }
  return total;
}

ClassificationData marker_task(std::uint64_t seed, std::size_t n) {
  auto base = toy_sentences(seed, n);
  std::mt19937_64 rng(seed);
  LabeledSentenceCorpus c;
  for (std::size_t i = 0; i < n; ++i) {
    const bool yes = (rng() & 1) != 0;
    c.items.push_back({(yes ? "yes " : "no ") + base[i], yes ? "Y" : "N"});
  }
  c.inventory = {"N", "Y"};
  return to_classification_data(c);
}

}  // namespace

TEST_CASE("task file formats") {
  std::istringstream tokens("der\tART\nHund\tNN\n\r\nzum\tAPPRART\nHaus\tNN\n\n\n");
  auto corpus = parse_token_task(tokens, {"APPRART"});
  REQUIRE(corpus.sentences.size() == 2);
  CHECK(corpus.sentences[1].words == Labels{"zum", "Haus"});
  CHECK(corpus.inventory == Labels{"ART", "NN"});
  CHECK_NOTHROW(corpus.validate());
  std::ostringstream out;
  write_token_task(out, corpus);
  std::istringstream again(out.str());
  auto reread = parse_token_task(again, {"APPRART"});
  CHECK(reread.sentences[0].tags == corpus.sentences[0].tags);
  CHECK(reread.sentences[1].words == corpus.sentences[1].words);

  std::istringstream bad("der ART\n");
  CHECK_THROWS_AS(parse_token_task(bad), DataError);
  TokenTaggedCorpus unknown = corpus;
  unknown.inventory = {"ART"};
  CHECK_THROWS_AS(unknown.validate(), DataError);

  std::istringstream seq("grüezi mitenand\tZH\nmerci vilmal\tBE\n");
  auto labeled = parse_sequence_task(seq);
  REQUIRE(labeled.items.size() == 2);
  CHECK(labeled.items[0].text == "grüezi mitenand");
  CHECK(labeled.inventory == Labels{"BE", "ZH"});
  std::istringstream seq_bad("no label here\n");
  CHECK_THROWS_AS(parse_sequence_task(seq_bad), DataError);
}

TEST_CASE("first-token alignment") {
  // Byte model: each word starts at its first byte; "über" starts with a two-byte character.
  const std::string text = "über den Fluss";
  const Segmentation bytes = byte_encode(text);
  auto pos = first_token_alignment(3, bytes);
  const auto words = word_byte_ranges(text);
  for (std::size_t w = 0; w < 3; ++w) {
    CHECK(bytes.byte_spans[pos[w]].begin == words[w].begin);
    CHECK(bytes.byte_spans[pos[w]].end == words[w].begin + 1);
  }
  CHECK(pos == std::vector<std::size_t>{1, 7, 11});

  std::vector<std::string> corpus(20, "ab cd ef");
  auto vocab = SubwordVocab::train(corpus, 300);
  REQUIRE(vocab.encode("ab cd ef").size() == 5);
  CHECK(first_token_alignment(3, vocab.encode("ab cd ef")) == std::vector<std::size_t>{1, 2, 3});
  const Segmentation split = vocab.encode("xyz ab");
  REQUIRE(split.size() == 2 + 4 + 1);  // "xyz " falls back to bytes
  CHECK(first_token_alignment(2, split) == std::vector<std::size_t>{1, 5});

  CHECK_THROWS_AS(first_token_alignment(3, vocab.encode("ab cd ef").truncated(3)), DataError);
}

TEST_CASE("accuracy with masked tags") {
  CHECK(pos_accuracy(Labels{"A", "B"}, Labels{"A", "B"}) == 1.0);
  const Labels gold{"A", "B", "APPRART", "C", "D"};
  const Labels pred{"A", "B", "X", "C", "X"};
  CHECK(pos_accuracy(pred, gold, {"APPRART"}) == doctest::Approx(0.75));
  CHECK(pos_accuracy(pred, gold) == doctest::Approx(0.6));
  CHECK_THROWS_AS(pos_accuracy(Labels{"A"}, Labels{"APPRART"}, {"APPRART"}), DataError);
  CHECK_THROWS_AS(pos_accuracy(Labels{"A"}, Labels{"A", "B"}), ContractViolation);
}

TEST_CASE("weighted F1") {
  CHECK(weighted_f1(Labels{"A", "B", "C"}, Labels{"A", "B", "C"}) == doctest::Approx(1.0));
  const Labels gold{"A", "A", "A", "B"}, pred{"A", "A", "B", "B"};
  // A: P = 1, R = 2/3, F1 = 0.8. B: P = 1/2, R = 1, F1 = 2/3.
  CHECK(weighted_f1(pred, gold) == doctest::Approx(0.75 * 0.8 + 0.25 * 2.0 / 3.0).epsilon(1e-12));
  CHECK(weighted_f1(pred, gold) == doctest::Approx(f1_oracle(pred, gold)).epsilon(1e-12));
  // Constant predictions over balanced classes: F1 of the predicted class times its weight.
  const Labels balanced{"A", "A", "B", "B"}, constant{"A", "A", "A", "A"};
  CHECK(weighted_f1(constant, balanced) == doctest::Approx(0.5 * (2.0 * 0.5 * 1.0 / 1.5)));
  CHECK_THROWS_AS(weighted_f1(Labels{}, Labels{}), DataError);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Labels g, p;
    for (int i = 0; i < 15; ++i) {
      g.push_back(std::string(1, static_cast<char>('A' + rng() % 4)));
      p.push_back(std::string(1, static_cast<char>('A' + rng() % 5)));
    }
    CHECK(weighted_f1(p, g) == doctest::Approx(f1_oracle(p, g)).epsilon(1e-12));
  }
}

TEST_CASE("sample statistics") {
  const std::vector<double> v{1, 2, 3, 4};
  auto s = sample_stats(v);
  CHECK(s.mean == 2.5);
  CHECK(s.stddev == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(sample_stats(std::vector<double>{7.0}).stddev == 0.0);
}

TEST_CASE("fine-tuning") {
  auto train = marker_task(1, 96), valid = marker_task(2, 24), test = marker_task(3, 40);
  std::vector<std::string> text = train.texts;
  auto vocab = SubwordVocab::train(text, 300);
  auto cfg = toy_config(Variant::ModularSubword, 2, 32);
  cfg.vocab_size = vocab.size();
  EncoderModel model(cfg);
  FinetuneConfig ft;
  ft.lr = 1e-3;
  ft.batch_size = 8;
  const FinetuneLanguages langs{"src", "tgt"};

  SUBCASE("separable sequence task") {
    const std::vector<std::uint64_t> seeds{1, 2};
    auto report = finetune_classifier(model, &vocab, TaskKind::Sequence, train, valid, test, ft, seeds, langs);
    REQUIRE(report.runs.size() == 2);
    for (const auto& run : report.runs) {
      CHECK(run.test_metric == 1.0);
      CHECK(run.valid_metric.size() == 10);
      CHECK(run.best_epoch >= 1);
      CHECK(run.valid_metric[run.best_epoch - 1] == 1.0);
      CHECK(run.test_predictions.size() == test.texts.size());
    }
    CHECK(report.metric == SelectionMetric::WeightedF1);
    CHECK(report.frozen_hash_before == report.frozen_hash_after);
    CHECK(report.mean == 1.0);
    CHECK_FALSE(model.params().contains("task_head.w"));
  }

  SUBCASE("token task emits one prediction per word") {
    TokenTaggedCorpus tagged;
    for (const auto& s : toy_sentences(5, 40)) {
      TaggedSentence t;
      t.words = split_words(s);
      for (const auto& w : t.words) t.tags.push_back(w.size() % 2 ? "ODD" : "EVEN");
      tagged.sentences.push_back(t);
    }
    tagged.inventory = {"EVEN", "ODD"};
    auto data = to_classification_data(tagged);
    std::size_t words = 0;
    for (const auto& l : data.labels) words += l.size();
    ft.epochs = 2;
    const std::vector<std::uint64_t> seeds{3};
    auto report = finetune_classifier(model, &vocab, TaskKind::Token, data, data, data, ft, seeds, langs);
    CHECK(report.runs[0].test_predictions.size() == words);
    CHECK(report.frozen_hash_before == report.frozen_hash_after);
  }

  SUBCASE("preconditions") {
    const std::vector<std::uint64_t> dup{4, 4};
    CHECK_THROWS_AS(finetune_classifier(model, &vocab, TaskKind::Sequence, train, valid, test, ft, dup, langs),
                    ContractViolation);
    ClassificationData empty;
    const std::vector<std::uint64_t> one{4};
    CHECK_THROWS_AS(finetune_classifier(model, &vocab, TaskKind::Sequence, train, empty, test, ft, one, langs),
                    DataError);
  }
}

TEST_CASE("char token head reads upsampled states") {
  auto cfg = toy_config(Variant::MonolithicChar, 1, 16);
  EncoderModel model(cfg);
  TokenTaggedCorpus tagged;
  tagged.sentences.push_back({{"ab", "cde"}, {"X", "Y"}});
  tagged.sentences.push_back({{"fg"}, {"X"}});
  tagged.inventory = {"X", "Y"};
  auto data = to_classification_data(tagged);
  FinetuneConfig ft;
  ft.epochs = 1;
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  auto report = finetune_classifier(model, nullptr, TaskKind::Token, data, data, data, ft, seeds, {});
  CHECK(report.runs.size() == 3);
  for (const auto& run : report.runs) CHECK(run.test_predictions.size() == 3);
  const auto values = report.values();
  auto stats = sample_stats(values);
  CHECK(report.mean == stats.mean);
  CHECK(report.stddev == stats.stddev);
}
