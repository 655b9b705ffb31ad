// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adaptlab/downstream.hpp"
#include "adaptlab/experiment.hpp"
#include "adaptlab/gradcheck.hpp"
#include "adaptlab/pretraining.hpp"
#include "adaptlab/regime.hpp"
#include "adaptlab/report.hpp"
#include "adaptlab/retrieval.hpp"
#include "adaptlab/synthetic.hpp"
#include "test_support.hpp"

using namespace adaptlab;
using namespace adaptlab::testing;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 120.0;
constexpr double kMacroTolerance = 0.05;
constexpr double kRelativeTolerance = 0.05;
constexpr double kImprovementTolerance = 0.1;
constexpr double kMetricTolerance = 1e-12;
constexpr double kChrfTolerance = 0.1;
constexpr double kRetrievalGainPoints = 10.0;
constexpr double kEndToEndSeconds = 15 * 60.0;

constexpr Variant kAllVariants[] = {Variant::MonolithicSubword, Variant::MonolithicChar, Variant::ModularSubword,
                                    Variant::ModularChar};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  /// A failed check clears `pass` and names itself in the detail.
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    note("failed: " + what);
  }
  void note(const std::string& what) {
    if (detail.tellp() != 0) detail << "; ";
    detail << what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Gradients

struct Bucket {
  const char* label;
  std::vector<std::string> prefixes;
};

std::vector<Bucket> layer_buckets(const EncoderConfig& cfg) {
  std::vector<Bucket> b{{"embedding", {"embeddings.", "positions.", "sampler.char_positions"}},
                        {"attention", {}},
                        {"feed-forward", {}},
                        {"layer-norm", {"body.embed_ln", "sampler.char_ln"}}};
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    const std::string l = "layer" + std::to_string(i);
    b[1].prefixes.push_back(l + ".attn.");
    b[2].prefixes.push_back(l + ".ffn.");
    b[3].prefixes.push_back(l + ".ln");
  }
  if (is_modular_variant(cfg.variant)) b.push_back({"adapter", {"adapter.src."}});
  if (is_char_variant(cfg.variant)) {
    b.push_back({"downsampler", {"sampler.local.", "sampler.conv.", "sampler.down_ln"}});
    b.push_back({"upsampler", {"sampler.up_", "sampler.final."}});
  }
  b.push_back({"head", {"mlm_head.", "pretrain_head."}});
  return b;
}

Outcome criterion_gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (Variant v : kAllVariants) {
    auto cfg = toy_config(v, 2, 32);
    cfg.init_std = 0.3;
    EncoderModel model(cfg);
    std::mt19937_64 rng(11);
    const auto ids = random_ids(cfg, is_char_variant(v) ? 9 : 4, rng);
    auto& params = model.params();
    std::set<std::string> covered;
    for (const auto& bucket : layer_buckets(cfg)) {
      std::set<std::string> names;
      for (const auto& p : params.entries())
        for (const auto& pre : bucket.prefixes)
          if (p.name.rfind(pre, 0) == 0) names.insert(p.name);
      if (names.empty()) continue;
      covered.insert(names.begin(), names.end());
      params.set_trainable(names);
      const auto r = gradient_check_detailed([&] { return probe_loss(model, ids); }, params);
      worst = std::max(worst, r.max_relative_error);
      o.expect(r.max_relative_error <= kGradTolerance,
               variant_name(v) + " " + bucket.label + " " + fmt("%.2e", r.max_relative_error) + " at " +
                   r.worst_parameter);
    }
    // Every parameter the probe can reach belongs to some layer type.
    for (const auto& p : params.entries())
      if (p.group.rfind("adapter.", 0) != 0 || p.group == adapter_group("src"))
        o.expect(covered.count(p.name) == 1, variant_name(v) + " " + p.name + " unchecked");
  }
  const double secs = seconds_since(t0);
  o.expect(secs < kGradSeconds, "runtime " + fmt("%.1f", secs) + " s");
  o.note("max relative error " + fmt("%.2e", worst) + " <= " + fmt("%.0e", kGradTolerance) + ", " +
         fmt("%.1f", secs) + " s < " + fmt("%.0f", kGradSeconds) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 2. Shape laws

Outcome criterion_shapes() {
  Outcome o;
  NoGradGuard no_grad;
  std::size_t checked = 0;
  for (std::size_t r : {1, 2, 4}) {
    EncoderModel model(toy_config(Variant::MonolithicChar, 1, 8, r));
    std::mt19937_64 rng(r);
    for (std::size_t n = 1; n <= 64; ++n) {
      Tensor h = random_matrix(n, 8, rng);
      Tensor down = model.downsample(h, {});
      const std::size_t up = model.upsample(down, h).rows();
      if (down.rows() != (n + r - 1) / r || up != n)
        o.expect(false, "n=" + std::to_string(n) + " r=" + std::to_string(r) + " gave " +
                            std::to_string(down.rows()) + "/" + std::to_string(up));
      ++checked;
    }
  }
  EncoderModel model(toy_config(Variant::MonolithicChar, 1, 8, 4));
  std::mt19937_64 rng(9);
  const std::size_t big = model.downsample(random_matrix(2048, 8, rng), {}).rows();
  o.expect(big == 512, "2048 chars at r=4 -> " + std::to_string(big));
  o.note(std::to_string(checked) + " (n, r) pairs satisfy ceil(n/r) down and n up");
  return o;
}

// ---------------------------------------------------------------------------
// 3. Frozen parameters

Outcome criterion_freezing() {
  Outcome o;
  const SyntheticData data = [] {
    SyntheticConfig s;
    s.seed = 21;
    s.source_sentences = 120;
    s.dialect_sentences = 120;
    s.pos_train = s.pos_valid = s.pos_test = 4;
    s.gdi_train = s.gdi_valid = s.gdi_test = 8;
    s.retrieval_pairs = 4;
    return generate_synthetic(s);
  }();
  const auto vocab = SubwordVocab::train(data.source_corpus, 320);
  const auto counter = subword_token_counter(vocab);
  const RegimeLanguages langs{"src", "tgt"};
  const auto source = build_source_corpus(data.source_corpus, counter, 3);
  const auto mixed = build_mixed_corpus(data.dialect_corpus, data.source_corpus, counter, true, 3);
  const auto target = build_mixed_corpus(data.dialect_corpus, {}, counter, false, 3);

  struct Case {
    Regime regime;
    Variant variant;
    const MixedCorpus* corpus;
  };
  const Case cases[] = {{Regime::AdapterOnly, Variant::ModularSubword, &target},
                        {Regime::AdapterEmbeddings, Variant::ModularSubword, &target},
                        {Regime::CharModulesStage1, Variant::ModularChar, &source},
                        {Regime::CharAdapterStage2, Variant::ModularChar, &mixed}};
  std::size_t groups_checked = 0;
  for (const auto& c : cases) {
    auto cfg = toy_config(c.variant, 2, 32);
    if (is_char_variant(c.variant))
      cfg.output_vocab_size = vocab.size();
    else
      cfg.vocab_size = vocab.size();
    EncoderModel model(cfg);
    const auto trainable = regime_trainable_names(model, c.regime, langs);
    std::map<std::string, std::string> before;
    for (const auto& g : model.params().groups()) {
      std::set<std::string> frozen;
      for (const auto& n : model.params().names_in_group(g))
        if (!trainable.count(n)) frozen.insert(n);
      if (!frozen.empty()) before[g] = hash_parameters(model.params(), frozen);
    }
    const std::string trained_before = hash_parameters(model.params(), trainable);

    PretrainConfig pc;
    pc.lr = 2e-3;
    pc.epochs = 3;
    pc.batch_size = 16;
    pc.seed = 4;
    pc.init_target_adapter = c.regime != Regime::CharAdapterStage2;
    pretrain(model, *c.corpus, default_objective(c.variant), c.regime, langs, pc, vocab);

    const std::string name = regime_name(c.regime);
    for (const auto& [g, h] : before) {
      std::set<std::string> frozen;
      for (const auto& n : model.params().names_in_group(g))
        if (!trainable.count(n)) frozen.insert(n);
      o.expect(hash_parameters(model.params(), frozen) == h, name + " changed frozen group " + g);
      ++groups_checked;
    }
    o.expect(hash_parameters(model.params(), trainable) != trained_before, name + " left its trainable set unchanged");
  }
  o.note(std::to_string(groups_checked) + " frozen group hashes unchanged after 3 epochs under 4 regimes");
  return o;
}

// ---------------------------------------------------------------------------
// 4-5. Routing

EncoderConfig three_language_config(Variant v) {
  auto cfg = toy_config(v);
  cfg.adapter = AdapterConfig{0, {"src", "tgt", "xx"}};
  return cfg;
}

Outcome criterion_routing() {
  Outcome o;
  std::size_t inputs = 0;
  for (Variant v : {Variant::ModularSubword, Variant::ModularChar}) {
    EncoderModel model(three_language_config(v));
    std::mt19937_64 rng(31);
    for (const auto& g : model.params().groups()) perturb_group(model.params(), g, rng, 0.05);
    for (int trial = 0; trial < 10; ++trial) {
      const auto ids = random_ids(model.config(), 6 + 3 * static_cast<std::size_t>(trial), rng);
      const auto src = model.encode(ids, "src");
      const auto xx = model.encode(ids, "xx");
      const auto tgt = model.encode(ids, "tgt");
      EncoderModel changed = model;
      perturb_group(changed.params(), adapter_group("tgt"), rng, 0.5);
      const std::string tag = variant_name(v) + " input " + std::to_string(trial);
      o.expect(bit_identical(src, changed.encode(ids, "src")), tag + ": src moved with tgt adapter");
      o.expect(bit_identical(xx, changed.encode(ids, "xx")), tag + ": xx moved with tgt adapter");
      o.expect(!bit_identical(tgt, changed.encode(ids, "tgt")), tag + ": tgt ignores its adapter");
      ++inputs;
    }
  }
  o.note("perturbing one adapter leaves the other languages bit-identical on " + std::to_string(inputs) +
         " inputs");
  return o;
}

Outcome criterion_adapter_copy() {
  Outcome o;
  std::size_t inputs = 0;
  for (Variant v : {Variant::ModularSubword, Variant::ModularChar}) {
    EncoderModel model(three_language_config(v));
    std::mt19937_64 rng(41);
    perturb_group(model.params(), adapter_group("src"), rng, 0.3);
    perturb_group(model.params(), adapter_group("tgt"), rng, 0.3);
    model.copy_adapter("src", "tgt");
    for (int trial = 0; trial < 10; ++trial) {
      const auto ids = random_ids(model.config(), 8 + 2 * static_cast<std::size_t>(trial), rng);
      o.expect(bit_identical(model.encode(ids, "src"), model.encode(ids, "tgt")),
               variant_name(v) + " input " + std::to_string(trial) + " differs after copy");
      ++inputs;
    }
  }
  o.note("src and tgt outputs bit-identical after copy on " + std::to_string(inputs) + " inputs");
  return o;
}

// ---------------------------------------------------------------------------
// 6. Table arithmetic

struct TableRow {
  double pos, gdi, r1, r2, macro;
};

constexpr TableRow kMainTable[] = {
    {52.6, 47.2, 60.6, 75.7, 56.0}, {86.9, 62.1, 91.1, 96.0, 80.9}, {46.7, 59.0, 92.8, 94.8, 66.5},
    {60.9, 60.8, 96.4, 96.9, 72.8}, {64.8, 61.3, 66.1, 82.2, 66.7}, {83.2, 62.0, 82.9, 92.4, 77.6},
    {41.5, 51.9, 35.6, 42.6, 44.2},
};

constexpr TableRow kRegimeTable[] = {
    {83.2, 62.0, 82.9, 92.4, 77.6},
    {83.9, 62.1, 86.0, 93.7, 78.6},
    {85.7, 63.1, 86.6, 93.4, 79.6},
};

Outcome criterion_tables() {
  Outcome o;
  double worst = 0.0;
  auto check_rows = [&](const TableRow* rows, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = rows[i];
      const double m = macro_average(r.pos, r.gdi, std::vector<double>{r.r1, r.r2});
      worst = std::max(worst, std::abs(m - r.macro));
      o.expect(std::abs(m - r.macro) <= kMacroTolerance, "macro " + fmt("%.3f", m) + " vs " + fmt("%.1f", r.macro));
    }
  };
  check_rows(kMainTable, std::size(kMainTable));
  check_rows(kRegimeTable, std::size(kRegimeTable));
  const double rel_a = relative_performance(77.6, 79.6), rel_b = relative_performance(78.6, 79.6);
  o.expect(std::abs(rel_a - 97.5) <= kRelativeTolerance, "relative " + fmt("%.3f", rel_a) + " vs 97.5");
  o.expect(std::abs(rel_b - 98.7) <= kRelativeTolerance, "relative " + fmt("%.3f", rel_b) + " vs 98.7");
  const double imp_a = improvement_ratio(72.8, 66.5), imp_b = improvement_ratio(80.9, 56.0);
  o.expect(std::abs(imp_a - 9.5) <= kImprovementTolerance, "improvement " + fmt("%.3f", imp_a) + " vs 9.5");
  o.expect(std::abs(imp_b - 44.5) <= kImprovementTolerance, "improvement " + fmt("%.3f", imp_b) + " vs 44.5");
  o.note("10 macro values within " + fmt("%.3f", worst) + "; relative " + fmt("%.2f", rel_a) + ", " +
         fmt("%.2f", rel_b) + "; improvement " + fmt("%.2f", imp_a) + ", " + fmt("%.2f", imp_b));
  return o;
}

// ---------------------------------------------------------------------------
// 7. Metric oracles

struct LabelFixture {
  std::vector<std::string> gold, pred;
};

const std::vector<LabelFixture>& label_fixtures() {
  static const std::vector<LabelFixture> f{
      {{"A", "A", "A", "B"}, {"A", "A", "B", "B"}},
      {{"A", "B", "C", "A", "B", "C"}, {"A", "B", "C", "A", "B", "C"}},
      {{"A", "A", "B", "B", "C"}, {"B", "B", "A", "A", "A"}},
      {{"N", "V", "N", "ART", "N", "ADJ", "V"}, {"N", "V", "ADJ", "ART", "N", "N", "N"}},
      {{"X", "X", "X", "X", "Y"}, {"X", "X", "X", "X", "X"}},
      {{"A", "B", "A", "C", "C", "C", "B", "A"}, {"A", "C", "A", "C", "B", "C", "B", "D"}},
  };
  return f;
}

/// Weighted F1 from an explicit confusion matrix.
double f1_oracle(const LabelFixture& f) {
  std::map<std::string, std::map<std::string, double>> cm;
  std::set<std::string> labels;
  for (std::size_t i = 0; i < f.gold.size(); ++i) {
    cm[f.gold[i]][f.pred[i]] += 1;
    labels.insert(f.gold[i]);
    labels.insert(f.pred[i]);
  }
  double total = 0, weighted = 0;
  for (const auto& g : labels) {
    double tp = cm[g][g], row = 0, col = 0;
    for (const auto& x : labels) {
      row += cm[g][x];
      col += cm[x][g];
    }
    if (row == 0) continue;
    const double p = col ? tp / col : 0, r = tp / row;
    weighted += row * (p + r > 0 ? 2 * p * r / (p + r) : 0);
    total += row;
  }
  return weighted / total;
}

double accuracy_oracle(const LabelFixture& f, const std::set<std::string>& masked) {
  double hit = 0, n = 0;
  for (std::size_t i = 0; i < f.gold.size(); ++i) {
    if (masked.count(f.gold[i])) continue;
    n += 1;
    hit += f.gold[i] == f.pred[i];
  }
  return hit / n;
}

double brute_force_greedy(const Tensor& q, const Tensor& c) {
  auto cosine = [&](std::size_t i, std::size_t j) {
    double dot = 0, nq = 0, nc = 0;
    for (std::size_t k = 0; k < q.cols(); ++k) {
      dot += q.at(i, k) * c.at(j, k);
      nq += q.at(i, k) * q.at(i, k);
      nc += c.at(j, k) * c.at(j, k);
    }
    return dot / std::sqrt(nq * nc);
  };
  double recall = 0, precision = 0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double m = -2;
    for (std::size_t j = 0; j < c.rows(); ++j) m = std::max(m, cosine(i, j));
    recall += m / static_cast<double>(q.rows());
  }
  for (std::size_t j = 0; j < c.rows(); ++j) {
    double m = -2;
    for (std::size_t i = 0; i < q.rows(); ++i) m = std::max(m, cosine(i, j));
    precision += m / static_cast<double>(c.rows());
  }
  return 2 * precision * recall / (precision + recall);
}

Outcome criterion_metrics() {
  Outcome o;
  double worst = 0;
  std::size_t fixtures = 0;
  for (const auto& f : label_fixtures()) {
    const double f1 = weighted_f1(f.pred, f.gold);
    const double acc = pos_accuracy(f.pred, f.gold);
    const double acc_masked = pos_accuracy(f.pred, f.gold, {f.gold.front()});
    worst = std::max({worst, std::abs(f1 - f1_oracle(f)), std::abs(acc - accuracy_oracle(f, {})),
                      std::abs(acc_masked - accuracy_oracle(f, {f.gold.front()}))});
    o.expect(std::abs(f1 - f1_oracle(f)) <= kMetricTolerance, "weighted F1 fixture " + std::to_string(fixtures));
    o.expect(std::abs(acc - accuracy_oracle(f, {})) <= kMetricTolerance, "accuracy fixture " + std::to_string(fixtures));
    o.expect(std::abs(acc_masked - accuracy_oracle(f, {f.gold.front()})) <= kMetricTolerance,
             "masked accuracy fixture " + std::to_string(fixtures));
    ++fixtures;
  }
  std::mt19937_64 rng(51);
  double greedy_worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor q = random_matrix(3, 8, rng), c = random_matrix(4, 8, rng);
    greedy_worst = std::max(greedy_worst, std::abs(greedy_match_score(q, c) - brute_force_greedy(q, c)));
  }
  o.expect(greedy_worst <= kMetricTolerance, "greedy vs brute force " + fmt("%.1e", greedy_worst));
  const double same = chrf("der hund lauft", "der hund lauft");
  const double disjoint = chrf("abc", "xyz");
  const double partial = chrf("ab", "abc");
  o.expect(std::abs(same - 100.0) <= kMetricTolerance, "chrF(x, x) = " + fmt("%.6f", same));
  o.expect(disjoint == 0.0, "chrF disjoint = " + fmt("%.6f", disjoint));
  o.expect(std::abs(partial - 63.6) <= kChrfTolerance, "chrF(ab, abc) = " + fmt("%.3f", partial));
  o.note(std::to_string(fixtures) + " label fixtures match the confusion-matrix oracle (max diff " +
         fmt("%.1e", worst) + "); greedy 3x4 max diff " + fmt("%.1e", greedy_worst) + "; chrF " + fmt("%.1f", same) +
         "/" + fmt("%.1f", disjoint) + "/" + fmt("%.2f", partial));
  return o;
}

// ---------------------------------------------------------------------------
// 8. Retrieval sanity

Outcome criterion_self_retrieval() {
  Outcome o;
  SyntheticConfig s;
  s.seed = 61;
  s.retrieval_pairs = 50;
  s.source_sentences = s.dialect_sentences = 200;
  const SyntheticData data = generate_synthetic(s);
  const RetrievalTask& pairs = data.retrieval.front();
  const auto vocab = SubwordVocab::train(data.source_corpus, 320);
  for (Variant v : kAllVariants) {
    auto cfg = toy_config(v, 2, 32);
    cfg.max_positions = is_char_variant(v) ? 256 : 64;
    if (is_char_variant(v))
      cfg.output_vocab_size = vocab.size();
    else
      cfg.vocab_size = vocab.size();
    EncoderModel model(cfg);
    RepresentationOptions opt;
    opt.max_length = cfg.max_positions;
    const auto* vp = is_char_variant(v) ? nullptr : &vocab;
    const std::string src = is_modular_variant(v) ? "src" : "";
    const std::string tgt = is_modular_variant(v) ? "tgt" : "";

    const RetrievalTask self{pairs.queries, pairs.queries};
    const double acc = retrieve_with_encoder(model, vp, self, src, src, opt).accuracy;
    o.expect(acc == 1.0, variant_name(v) + " self-retrieval " + fmt("%.3f", acc));

    const auto base = retrieve_with_encoder(model, vp, pairs, src, tgt, opt);
    std::vector<std::size_t> perm(pairs.candidates.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(62));
    RetrievalTask shuffled = pairs;
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.candidates[perm[i]] = pairs.candidates[i];
    std::vector<Tensor> qr, cr;
    for (const auto& q : shuffled.queries) qr.push_back(sentence_representation(model, vp, q, src, opt));
    for (const auto& c : shuffled.candidates) cr.push_back(sentence_representation(model, vp, c, tgt, opt));
    const auto moved =
        retrieve_top1(qr.size(), cr.size(), [&](std::size_t i, std::size_t j) { return greedy_match_score(qr[i], cr[j]); });
    bool same = true;
    for (std::size_t i = 0; i < perm.size(); ++i) same = same && moved.predicted[i] == perm[base.predicted[i]];
    o.expect(same, variant_name(v) + " predictions change under candidate permutation");
  }
  o.note("self-retrieval 100% for 4 variants on 50 sentences; predictions follow a candidate permutation exactly");
  return o;
}

}  // namespace

// ---------------------------------------------------------------------------
// 9-11. End-to-end synthetic-dialect experiments

namespace {

SyntheticConfig dialect_data_config() {
  SyntheticConfig s;
  s.seed = 1;
  s.source_sentences = 2000;
  s.dialect_sentences = 2000;
  s.retrieval_pairs = 200;
  s.rule_coverage = 1.0;
  return s;
}

/// Desk-scale modular-subword encoder shared by every end-to-end run.
ExperimentConfig desk_experiment(const fs::path& out) {
  ExperimentConfig c;
  c.variant = Variant::ModularSubword;
  c.model.hidden_width = 64;
  c.model.num_layers = 4;
  c.model.num_heads = 4;
  c.model.ffn_width = 128;
  c.model.max_positions = 64;
  c.model.adapter = AdapterConfig{0, {"src", "tgt"}};
  c.model.seed = 3;
  c.pretrain.lr = 1e-3;
  c.pretrain.epochs = 10;
  c.pretrain.batch_size = 16;
  c.pretrain.seed = 2;
  c.finetune.lr = 3e-4;
  c.finetune.epochs = 3;
  c.finetune.batch_size = 16;
  c.seeds = {1, 2, 3};
  c.pos_masked_tags = {kSyntheticMaskedTag};
  c.output_dir = out;
  return c;
}

SplitPaths pos_paths(const fs::path& d) { return {d / "pos/train.tsv", d / "pos/valid.tsv", d / "pos/test.tsv"}; }

std::vector<RetrievalPaths> retrieval_paths(const fs::path& d, const SyntheticData& data) {
  std::vector<RetrievalPaths> out;
  for (const auto& name : data.retrieval_names)
    out.push_back({name, d / "retrieval" / (name + ".src.txt"), d / "retrieval" / (name + ".tgt.txt")});
  return out;
}

struct Timed {
  ExperimentResult result;
  double seconds = 0.0;
};

Timed run_timed(const ExperimentConfig& c, bool verbose) {
  const auto t0 = Clock::now();
  Timed t{run_experiment(c, verbose ? &std::cerr : nullptr), 0.0};
  t.seconds = seconds_since(t0);
  return t;
}

/// The shared runs behind criteria 9-11, produced once on first use.
class DialectStudy {
 public:
  DialectStudy(fs::path work, bool verbose) : work_(std::move(work)), verbose_(verbose) {}

  const fs::path& data_dir() {
    if (!data_) {
      data_ = generate_synthetic(dialect_data_config());
      data_path_ = work_ / "data";
      fs::remove_all(data_path_);
      write_synthetic(*data_, data_path_);
    }
    return data_path_;
  }

  /// Source-only pretraining of the whole model, evaluated with dialect text
  /// read through the source adapter: the no-CPT baseline.
  const Timed& base() {
    if (!base_) {
      const fs::path& d = data_dir();
      ExperimentConfig c = desk_experiment(work_ / "base");
      c.name = "base";
      c.vocab_corpus = d / "source.txt";
      c.vocab_size = 400;
      c.regime = Regime::All;
      c.source_corpus = d / "source.txt";
      c.eval_language = "src";
      c.pos = pos_paths(d);
      c.retrieval = retrieval_paths(d, *data_);
      base_ = run_timed(c, verbose_);
    }
    return *base_;
  }

  ExperimentConfig cpt_config(const std::string& name, Regime regime) {
    const Timed& b = base();
    const fs::path& d = data_dir();
    ExperimentConfig c = desk_experiment(work_ / name);
    c.name = name;
    c.vocab = b.result.report_path.parent_path() / "vocab.txt";
    c.base_checkpoint = b.result.checkpoint_path;
    c.regime = regime;
    c.target_corpus = d / "dialect.txt";
    return c;
  }

  /// Adapter-only continued pretraining on the dialect, then retrieval.
  const Timed& retrieval_cpt() {
    if (!retrieval_cpt_) {
      ExperimentConfig c = cpt_config("cpt-retrieval", Regime::AdapterOnly);
      c.retrieval = retrieval_paths(data_dir(), *data_);
      retrieval_cpt_ = run_timed(c, verbose_);
    }
    return *retrieval_cpt_;
  }

  /// Continued pretraining of the dialect adapter and the embedding table,
  /// then zero-shot POS tagging.
  const Timed& pos_cpt() {
    if (!pos_cpt_) {
      ExperimentConfig c = cpt_config("cpt-pos", Regime::AdapterEmbeddings);
      c.pos = pos_paths(data_dir());
      pos_cpt_ = run_timed(c, verbose_);
    }
    return *pos_cpt_;
  }

  const fs::path& work() const { return work_; }
  bool verbose() const { return verbose_; }

 private:
  fs::path work_;
  bool verbose_;
  std::optional<SyntheticData> data_;
  fs::path data_path_;
  std::optional<Timed> base_, retrieval_cpt_, pos_cpt_;
};

Outcome criterion_retrieval_gain(DialectStudy& study) {
  Outcome o;
  const Timed& base = study.base();
  const Timed& cpt = study.retrieval_cpt();
  const auto& br = base.result.report.retrieval;
  const auto& cr = cpt.result.report.retrieval;
  if (br.empty() || br.size() != cr.size()) {
    o.expect(false, "retrieval scores missing");
    return o;
  }
  const double gain = cr[0].accuracy - br[0].accuracy;
  o.expect(gain >= kRetrievalGainPoints, br[0].name + " gain " + fmt("%.1f", gain) + " points");

  const auto& epochs = cpt.result.report.details.at("pretraining").at("epochs");
  std::vector<double> loss;
  for (const auto& e : epochs) loss.push_back(e.at("valid_loss").get<double>());
  bool monotone = loss.size() >= 4;
  for (std::size_t i = 1; monotone && i < 4; ++i) monotone = loss[i] < loss[i - 1];
  std::string curve;
  for (std::size_t i = 0; i < std::min<std::size_t>(4, loss.size()); ++i)
    curve += (i ? " > " : "") + fmt("%.3f", loss[i]);
  o.expect(monotone, "validation loss not decreasing: " + curve);
  const double secs = base.seconds + cpt.seconds;
  o.expect(secs < kEndToEndSeconds, "runtime " + fmt("%.0f", secs) + " s");

  std::string sets;
  for (std::size_t i = 0; i < br.size(); ++i)
    sets += (i ? ", " : "") + br[i].name + " " + fmt("%.1f", br[i].accuracy) + " -> " + fmt("%.1f", cr[i].accuracy);
  o.note(sets + "; gain " + fmt("%.1f", gain) + " >= " + fmt("%.0f", kRetrievalGainPoints) + "; valid loss " + curve +
         "; " + fmt("%.0f", secs) + " s < " + fmt("%.0f", kEndToEndSeconds) + " s");
  return o;
}

Outcome criterion_pos_transfer(DialectStudy& study) {
  Outcome o;
  const Timed& base = study.base();
  const Timed& cpt = study.pos_cpt();
  const auto& b = base.result.report.pos;
  const auto& c = cpt.result.report.pos;
  if (!b || !c || b->per_seed.size() != c->per_seed.size()) {
    o.expect(false, "POS scores missing");
    return o;
  }
  std::size_t wins = 0;
  std::string seeds;
  for (std::size_t i = 0; i < b->per_seed.size(); ++i) {
    wins += c->per_seed[i] > b->per_seed[i];
    seeds += (i ? ", " : "") + fmt("%.2f", b->per_seed[i]) + " -> " + fmt("%.2f", c->per_seed[i]);
  }
  o.expect(wins == b->per_seed.size(), "CPT wins " + std::to_string(wins) + "/" + std::to_string(b->per_seed.size()));
  const double secs = base.seconds + cpt.seconds;
  o.expect(secs < kEndToEndSeconds, "runtime " + fmt("%.0f", secs) + " s");
  o.note("accuracy per seed " + seeds + "; CPT wins " + std::to_string(wins) + "/" +
         std::to_string(b->per_seed.size()) + "; " + fmt("%.0f", secs) + " s < " + fmt("%.0f", kEndToEndSeconds) +
         " s");
  return o;
}

/// Small character-adapter experiment touching every stage: both char
/// pretraining stages, dialect identification and retrieval.
ExperimentConfig char_experiment(const fs::path& work) {
  SyntheticConfig s;
  s.seed = 7;
  s.source_sentences = s.dialect_sentences = 200;
  s.pos_train = 40;
  s.pos_valid = 10;
  s.pos_test = 20;
  s.gdi_train = 60;
  s.gdi_valid = 20;
  s.gdi_test = 40;
  s.retrieval_pairs = 20;
  const SyntheticData data = generate_synthetic(s);
  const fs::path d = work / "char-data";
  fs::remove_all(d);
  write_synthetic(data, d);

  ExperimentConfig c;
  c.name = "char-adapter";
  c.variant = Variant::ModularChar;
  c.vocab_corpus = d / "source.txt";
  c.vocab_size = 320;
  c.model.hidden_width = 32;
  c.model.num_layers = 2;
  c.model.num_heads = 2;
  c.model.ffn_width = 64;
  c.model.max_positions = 256;
  c.model.adapter = AdapterConfig{0, {"src", "tgt"}};
  c.model.sampler = SamplerConfig{4, 0, 0};
  c.model.seed = 8;
  c.regime = Regime::CharAdapterStage2;
  c.target_corpus = d / "dialect.txt";
  c.source_corpus = d / "source.txt";
  c.mix = true;
  c.pretrain.lr = 1e-3;
  c.pretrain.epochs = 2;
  c.pretrain.batch_size = 16;
  c.pretrain.max_length = 256;
  c.pretrain.seed = 9;
  c.pretrain.init_target_adapter = false;
  PretrainConfig s1 = c.pretrain;
  s1.seed = 10;
  c.stage1 = s1;
  c.finetune.lr = 1e-3;
  c.finetune.epochs = 2;
  c.finetune.batch_size = 16;
  c.finetune.max_length = 256;
  c.seeds = {1, 2};
  c.gdi = SplitPaths{d / "gdi/train.tsv", d / "gdi/valid.tsv", d / "gdi/test.tsv"};
  c.retrieval = {{data.retrieval_names[0], d / "retrieval" / (data.retrieval_names[0] + ".src.txt"),
                  d / "retrieval" / (data.retrieval_names[0] + ".tgt.txt")}};
  c.representation.max_length = 256;
  c.output_dir = work / "char-adapter";
  return c;
}

Outcome criterion_determinism(DialectStudy& study) {
  Outcome o;
  std::vector<ExperimentResult> originals{study.retrieval_cpt().result,
                                          run_experiment(char_experiment(study.work()), nullptr)};
  std::size_t compared = 0;
  for (const auto& first : originals) {
    const fs::path out = first.report_path.parent_path().string() + "-rerun";
    fs::remove_all(out);
    const ExperimentResult again = rerun_from_manifest(first.manifest_path, out, nullptr);
    const std::string name = first.report_path.parent_path().filename().string();
    o.expect(slurp(first.report_path) == slurp(again.report_path), name + " report differs on rerun");
    o.expect(slurp(first.checkpoint_path) == slurp(again.checkpoint_path), name + " checkpoint differs on rerun");
    ++compared;
  }
  o.note(std::to_string(compared) + " experiments rerun from their manifests with byte-identical report.json and "
                                    "checkpoint");
  return o;
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "adaptlab_acceptance").string();
  bool verbose = false;
  app.add_option("--only", only, "Run only these criteria (1-11)")->delimiter(',');
  app.add_option("--work", work, "Directory for generated data and experiment outputs");
  app.add_flag("-v,--verbose", verbose, "Log experiment progress to stderr");
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(work);
  DialectStudy study(work, verbose);
  const std::vector<Criterion> criteria{
      {1, "gradient check", criterion_gradients},
      {2, "shape laws", criterion_shapes},
      {3, "frozen parameters", criterion_freezing},
      {4, "routing isolation", criterion_routing},
      {5, "adapter copy", criterion_adapter_copy},
      {6, "table arithmetic", criterion_tables},
      {7, "metric oracles", criterion_metrics},
      {8, "retrieval sanity", criterion_self_retrieval},
      {9, "dialect retrieval after CPT", [&] { return criterion_retrieval_gain(study); }},
      {10, "zero-shot POS after CPT", [&] { return criterion_pos_transfer(study); }},
      {11, "rerun determinism", [&] { return criterion_determinism(study); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << ", "
              << fmt("%.1f", seconds_since(t0)) << " s): " << o.detail.str() << std::endl;
  }
  return failed ? 1 : 0;
}
