#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "adaptlab/encoder.hpp"
#include "adaptlab/tensor.hpp"
#include "adaptlab/tokenizers.hpp"

namespace adaptlab {

struct RepresentationOptions {
  bool include_embeddings = false;  // also average the embedding-layer output
  std::size_t max_length = 64;
};

/// Per-token vectors averaged over the transformer layers. Subword models
/// drop [CLS]/[SEP]; char models use every downsampled position. Throws
/// DataError when the sentence has no tokens.
Tensor sentence_representation(const EncoderModel& model, const SubwordVocab* vocab, std::string_view sentence,
                               std::string_view language, const RepresentationOptions& options = {});

/// Greedy cosine matching: F1 of the mean best-match similarities in both
/// directions. A zero vector has cosine 0 with everything.
double greedy_match_score(const Tensor& query, const Tensor& candidate);

struct RetrievalTask {
  std::vector<std::string> queries;
  std::vector<std::string> candidates;  // candidates[i] is the translation of queries[i]
};

/// Reads two line-aligned UTF-8 files.
RetrievalTask read_retrieval_task(const std::filesystem::path& queries, const std::filesystem::path& candidates);

struct RetrievalResult {
  std::vector<std::size_t> predicted;
  double accuracy = 0.0;
};

/// Score of query i against candidate j; larger is better.
using PairScorer = std::function<double(std::size_t query, std::size_t candidate)>;

/// Argmax over all candidates per query, lowest index on ties.
RetrievalResult retrieve_top1(std::size_t num_queries, std::size_t num_candidates, const PairScorer& scorer);

/// Greedy-match retrieval with representations of queries and candidates
/// computed once each.
RetrievalResult retrieve_with_encoder(const EncoderModel& model, const SubwordVocab* vocab, const RetrievalTask& task,
                                      std::string_view query_language, std::string_view candidate_language,
                                      const RepresentationOptions& options = {});

/// Character n-gram F-beta in [0, 100], averaged over n = 1..max_n after
/// removing whitespace. Orders with no hypothesis n-grams are skipped;
/// precision and recall are each averaged before combining.
double chrf(std::string_view hypothesis, std::string_view reference, int max_n = 6, double beta = 2.0);

/// Ranks candidates by chrf against each query.
RetrievalResult retrieve_with_chrf(const RetrievalTask& task, int max_n = 6, double beta = 2.0);

}  // namespace adaptlab
