#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adaptlab/downstream.hpp"
#include "adaptlab/retrieval.hpp"

namespace adaptlab {

/// Sizes of every split the generator emits.
struct SyntheticConfig {
  std::uint64_t seed = 1;
  std::size_t source_sentences = 2000;   // source-language pretraining text
  std::size_t dialect_sentences = 2000;  // dialect text for continued pretraining
  std::size_t pos_train = 600, pos_valid = 100, pos_test = 300;
  std::size_t gdi_train = 600, gdi_valid = 150, gdi_test = 300;
  std::size_t retrieval_pairs = 200;  // per retrieval test set
  std::size_t regions = 4;            // dialect regions (GDI classes)
  std::size_t retrieval_sets = 2;     // one per region, starting at region 0
  double spelling_variation = 0.15;   // per-token probability of a spelling variant
  double rule_coverage = 1.0;         // fraction of word forms each sound rule reaches
};

struct SyntheticData {
  std::vector<std::string> source_corpus;
  std::vector<std::string> dialect_corpus;
  TokenTaggedCorpus pos_train, pos_valid;  // source language
  TokenTaggedCorpus pos_test;              // dialect, all regions
  LabeledSentenceCorpus gdi_train, gdi_valid, gdi_test;
  std::vector<std::string> retrieval_names;
  std::vector<RetrievalTask> retrieval;  // queries: source, candidates: dialect
};

/// The tag masked at evaluation time, a fused preposition-article class.
inline const std::string kSyntheticMaskedTag = "APPRART";

/// Templated sentences over a seeded lexicon. The dialect of region k applies
/// shared suffix changes and vowel shifts, a region-specific rewrite, and
/// seeded spelling variation per token. Every held-out sentence (POS test,
/// GDI, retrieval) is absent from both pretraining corpora.
SyntheticData generate_synthetic(const SyntheticConfig& config);

/// Deterministic dialect form of one source word (no spelling variation).
/// Each rule reaches a fixed hash-selected `coverage` fraction of word forms.
std::string dialect_word(const std::string& word, std::size_t region, double coverage = 1.0);

/// Writes the fixed file layout below `dir`:
/// source.txt, dialect.txt, pos/{train,valid,test}.tsv, gdi/{train,valid,test}.tsv,
/// retrieval/<name>.{src,tgt}.txt.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace adaptlab
