#include "adaptlab/synthetic.hpp"

#include <array>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include "adaptlab/error.hpp"

namespace adaptlab {

namespace {

constexpr std::size_t kTopics = 8;

struct Lexicon {
  std::vector<std::string> art, pper, appr, apprart, kon, adv;
  std::vector<std::vector<std::string>> nn, adja, vv;  // per topic
};

struct Sentence {
  std::vector<std::string> words, tags;
};

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), 0x5e7a17u};
  return std::mt19937_64(seq);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }
bool coin(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

std::string syllable(std::mt19937_64& rng, bool closed) {
  static const std::array<const char*, 15> onsets{"b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "w", "sch"};
  static const std::array<const char*, 8> nuclei{"a", "e", "i", "o", "u", "ei", "au", "ie"};
  static const std::array<const char*, 7> codas{"n", "r", "l", "s", "m", "ch", "k"};
  std::string s = onsets[pick(rng, onsets.size())];
  s += nuclei[pick(rng, nuclei.size())];
  if (closed) s += codas[pick(rng, codas.size())];
  return s;
}

// `count` distinct stems of `syllables` syllables, none already in `used`.
std::vector<std::string> stems(std::mt19937_64& rng, std::size_t count, std::size_t min_syl, std::size_t max_syl,
                               std::unordered_set<std::string>& used) {
  std::vector<std::string> out;
  while (out.size() < count) {
    const std::size_t n = min_syl + pick(rng, max_syl - min_syl + 1);
    std::string w;
    for (std::size_t i = 0; i < n; ++i) w += syllable(rng, i + 1 == n && coin(rng, 0.6));
    if (used.insert(w).second) out.push_back(w);
  }
  return out;
}

Lexicon make_lexicon(std::uint64_t seed) {
  auto rng = stream(seed, 1);
  std::unordered_set<std::string> used;
  Lexicon lex;
  lex.art = stems(rng, 4, 1, 1, used);
  lex.pper = stems(rng, 6, 1, 1, used);
  lex.appr = stems(rng, 8, 1, 2, used);
  lex.apprart = stems(rng, 4, 1, 1, used);
  lex.kon = stems(rng, 3, 1, 1, used);
  lex.adv = stems(rng, 14, 2, 2, used);
  for (std::size_t t = 0; t < kTopics; ++t) {
    lex.nn.push_back(stems(rng, 12, 1, 3, used));
    lex.adja.push_back(stems(rng, 4, 2, 2, used));
    lex.vv.push_back(stems(rng, 6, 1, 2, used));
  }
  return lex;
}

class SentenceGenerator {
 public:
  explicit SentenceGenerator(const Lexicon& lex) : lex_(lex) {}

  Sentence operator()(std::mt19937_64& rng) const {
    Sentence s;
    const std::size_t topic = pick(rng, kTopics);
    auto from = [&](const std::vector<std::vector<std::string>>& table) -> const std::vector<std::string>& {
      return table[coin(rng, 0.85) ? topic : pick(rng, kTopics)];
    };
    auto push = [&](const std::string& w, const char* tag) {
      s.words.push_back(w);
      s.tags.push_back(tag);
    };
    auto closed = [&](const std::vector<std::string>& v, const char* tag) { push(v[pick(rng, v.size())], tag); };
    auto noun = [&] {
      const auto& v = from(lex_.nn);
      push(v[pick(rng, v.size())] + (coin(rng, 0.3) ? "en" : ""), "NN");
    };
    auto adj = [&] {
      const auto& v = from(lex_.adja);
      push(v[pick(rng, v.size())] + (coin(rng, 0.5) ? "e" : "er"), "ADJA");
    };
    auto verb = [&] {
      const auto& v = from(lex_.vv);
      push(v[pick(rng, v.size())] + (coin(rng, 0.5) ? "t" : "en"), "VVFIN");
    };
    auto np = [&] {
      closed(lex_.art, "ART");
      if (coin(rng, 0.5)) adj();
      noun();
    };
    auto pp = [&] {
      if (coin(rng, 0.4)) {
        closed(lex_.apprart, kSyntheticMaskedTag.c_str());
        if (coin(rng, 0.3)) adj();
        noun();
      } else {
        closed(lex_.appr, "APPR");
        np();
      }
    };
    switch (pick(rng, 4)) {
      case 0:
        np();
        verb();
        if (coin(rng, 0.5)) closed(lex_.adv, "ADV");
        pp();
        break;
      case 1:
        closed(lex_.pper, "PPER");
        verb();
        np();
        if (coin(rng, 0.5)) {
          closed(lex_.kon, "KON");
          closed(lex_.pper, "PPER");
          verb();
          closed(lex_.adv, "ADV");
        }
        break;
      case 2:
        np();
        closed(lex_.kon, "KON");
        np();
        verb();
        pp();
        break;
      default:
        closed(lex_.adv, "ADV");
        verb();
        closed(lex_.pper, "PPER");
        np();
        if (coin(rng, 0.5)) pp();
        break;
    }
    return s;
  }

 private:
  const Lexicon& lex_;
};

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string spelling_variant(std::string w, std::mt19937_64& rng) {
  const char last = w.back();
  const std::string vowels = "aeiouy";
  if (vowels.find(last) == std::string::npos && coin(rng, 0.5)) return w + last;
  if (w.find("ii") != std::string::npos) {
    replace_all(w, "ii", "y");
    return w;
  }
  return w + "h";
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

Sentence to_dialect(const Sentence& s, std::size_t region, const SyntheticConfig& config, std::mt19937_64& rng) {
  Sentence d = s;
  for (auto& w : d.words) {
    w = dialect_word(w, region, config.rule_coverage);
    if (coin(rng, config.spelling_variation)) w = spelling_variant(w, rng);
  }
  return d;
}

TaggedSentence tagged(const Sentence& s) { return {s.words, s.tags}; }

TokenTaggedCorpus tagged_corpus(const std::vector<Sentence>& sentences) {
  TokenTaggedCorpus c;
  std::set<std::string> tags;
  for (const auto& s : sentences) {
    c.sentences.push_back(tagged(s));
    tags.insert(s.tags.begin(), s.tags.end());
  }
  c.masked_tags = {kSyntheticMaskedTag};
  for (const auto& t : tags)
    if (t != kSyntheticMaskedTag) c.inventory.push_back(t);
  return c;
}

std::string region_label(std::size_t r) { return "R" + std::to_string(r); }

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

std::string dialect_word(const std::string& word, std::size_t region, double coverage) {
  // FNV-1a over (rule, word): each rule reaches a fixed subset of the word forms.
  auto applies = [&](std::uint64_t rule) {
    if (coverage >= 1.0) return true;
    std::uint64_t h = 1469598103934665603ull ^ (rule * 0x9e3779b97f4a7c15ull);
    for (unsigned char c : word) h = (h ^ c) * 1099511628211ull;
    h ^= h >> 29;
    return static_cast<double>(h >> 11) * 0x1.0p-53 < coverage;
  };
  std::string w = word;
  if (applies(0)) {
    if (ends_with(w, "en") && w.size() > 3) w.erase(w.size() - 1);
    else if (ends_with(w, "er") && w.size() > 3) w.replace(w.size() - 2, 2, "r");
    else if (ends_with(w, "t")) w.back() = 'd';
  }
  if (applies(1)) {
    // Vowel shifts apply simultaneously; placeholders stop one rewrite feeding another.
    replace_all(w, "ei", "\x01");
    replace_all(w, "au", "\x02");
    replace_all(w, "ie", "\x03");
    replace_all(w, "\x01", "ii");
    replace_all(w, "\x02", "uu");
    replace_all(w, "\x03", "ia");
  }
  if (applies(2)) replace_all(w, "sch", "sh");
  if (!applies(3 + region % 4)) return w;
  switch (region % 4) {
    case 0:
      replace_all(w, "k", "gg");
      break;
    case 1:
      replace_all(w, "e", "\xc3\xa4");  // ä
      break;
    case 2:
      replace_all(w, "o", "oa");
      break;
    default:
      if (!w.empty() && w.front() == 's') w.insert(0, "t");
      replace_all(w, "l", "u");
      break;
  }
  return w;
}

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  ADAPTLAB_REQUIRE(config.regions >= 1, "synthetic data needs at least one region");
  ADAPTLAB_REQUIRE(config.retrieval_sets <= config.regions, "more retrieval sets than regions");
  const Lexicon lex = make_lexicon(config.seed);
  const SentenceGenerator generate(lex);
  SyntheticData data;
  std::unordered_set<std::string> seen;  // source surfaces of every emitted sentence

  // Draws sentences whose source surface has not been emitted before.
  auto fresh = [&](std::mt19937_64& rng) {
    for (std::size_t attempt = 0; attempt < 10000; ++attempt) {
      Sentence s = generate(rng);
      if (seen.insert(join(s.words)).second) return s;
    }
    throw DataError("synthetic generator ran out of distinct sentences");
  };

  auto rng = stream(config.seed, 2);
  for (std::size_t i = 0; i < config.source_sentences; ++i) data.source_corpus.push_back(join(fresh(rng).words));

  rng = stream(config.seed, 3);
  for (std::size_t i = 0; i < config.dialect_sentences; ++i) {
    const Sentence s = fresh(rng);
    data.dialect_corpus.push_back(join(to_dialect(s, i % config.regions, config, rng).words));
  }

  rng = stream(config.seed, 4);
  std::vector<Sentence> pos_train, pos_valid, pos_test;
  for (std::size_t i = 0; i < config.pos_train; ++i) pos_train.push_back(fresh(rng));
  for (std::size_t i = 0; i < config.pos_valid; ++i) pos_valid.push_back(fresh(rng));
  for (std::size_t i = 0; i < config.pos_test; ++i)
    pos_test.push_back(to_dialect(fresh(rng), i % config.regions, config, rng));
  data.pos_train = tagged_corpus(pos_train);
  data.pos_valid = tagged_corpus(pos_valid);
  data.pos_test = tagged_corpus(pos_test);

  rng = stream(config.seed, 5);
  auto gdi = [&](std::size_t n) {
    LabeledSentenceCorpus c;
    for (std::size_t r = 0; r < config.regions; ++r) c.inventory.push_back(region_label(r));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = pick(rng, config.regions);
      c.items.push_back({join(to_dialect(fresh(rng), r, config, rng).words), region_label(r)});
    }
    return c;
  };
  data.gdi_train = gdi(config.gdi_train);
  data.gdi_valid = gdi(config.gdi_valid);
  data.gdi_test = gdi(config.gdi_test);

  rng = stream(config.seed, 6);
  for (std::size_t set = 0; set < config.retrieval_sets; ++set) {
    RetrievalTask task;
    for (std::size_t i = 0; i < config.retrieval_pairs; ++i) {
      const Sentence s = fresh(rng);
      task.queries.push_back(join(s.words));
      task.candidates.push_back(join(to_dialect(s, set, config, rng).words));
    }
    data.retrieval_names.push_back("src-" + region_label(set));
    data.retrieval.push_back(std::move(task));
  }
  return data;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "pos");
  std::filesystem::create_directories(dir / "gdi");
  std::filesystem::create_directories(dir / "retrieval");
  write_lines(dir / "source.txt", data.source_corpus);
  write_lines(dir / "dialect.txt", data.dialect_corpus);
  auto token_file = [&](const std::string& name, const TokenTaggedCorpus& c) {
    std::ofstream out(dir / "pos" / name);
    write_token_task(out, c);
  };
  token_file("train.tsv", data.pos_train);
  token_file("valid.tsv", data.pos_valid);
  token_file("test.tsv", data.pos_test);
  auto seq_file = [&](const std::string& name, const LabeledSentenceCorpus& c) {
    std::ofstream out(dir / "gdi" / name);
    write_sequence_task(out, c);
  };
  seq_file("train.tsv", data.gdi_train);
  seq_file("valid.tsv", data.gdi_valid);
  seq_file("test.tsv", data.gdi_test);
  for (std::size_t i = 0; i < data.retrieval.size(); ++i) {
    write_lines(dir / "retrieval" / (data.retrieval_names[i] + ".src.txt"), data.retrieval[i].queries);
    write_lines(dir / "retrieval" / (data.retrieval_names[i] + ".tgt.txt"), data.retrieval[i].candidates);
  }
}

}  // namespace adaptlab
