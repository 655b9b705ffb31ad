#include "adaptlab/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "adaptlab/error.hpp"

namespace adaptlab {

namespace {

// Rows scaled to unit length; zero rows stay zero.
std::vector<std::vector<double>> unit_rows(const Tensor& t) {
  ADAPTLAB_REQUIRE(t.defined() && t.rank() == 2, "representation must be a matrix");
  std::vector<std::vector<double>> rows(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double norm = 0.0;
    for (std::size_t c = 0; c < t.cols(); ++c) norm += t.at(r, c) * t.at(r, c);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (std::size_t c = 0; c < t.cols(); ++c) rows[r][c] = t.at(r, c) / norm;
  }
  return rows;
}

double greedy_unit(const std::vector<std::vector<double>>& q, const std::vector<std::vector<double>>& c) {
  ADAPTLAB_REQUIRE(!q.empty() && !c.empty(), "greedy matching needs non-empty representations");
  ADAPTLAB_REQUIRE(q.front().size() == c.front().size(), "representation widths differ");
  std::vector<double> best_c(c.size(), -std::numeric_limits<double>::infinity());
  double recall = 0.0;
  for (const auto& qv : q) {
    double best_q = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < qv.size(); ++k) dot += qv[k] * c[j][k];
      best_q = std::max(best_q, dot);
      best_c[j] = std::max(best_c[j], dot);
    }
    recall += best_q;
  }
  recall /= static_cast<double>(q.size());
  double precision = 0.0;
  for (double v : best_c) precision += v;
  precision /= static_cast<double>(c.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// Code points of `text` with whitespace removed, each as its UTF-8 bytes.
std::vector<std::string> characters(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    const auto byte = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (byte >= 0xF0) len = 4;
    else if (byte >= 0xE0) len = 3;
    else if (byte >= 0xC0) len = 2;
    len = std::min(len, text.size() - i);
    const bool space = len == 1 && (byte == ' ' || (byte >= '\t' && byte <= '\r'));
    if (!space) out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::map<std::string, std::size_t> ngrams(const std::vector<std::string>& chars, std::size_t n) {
  std::map<std::string, std::size_t> out;
  for (std::size_t i = 0; i + n <= chars.size(); ++i) {
    std::string g;
    for (std::size_t k = i; k < i + n; ++k) g += chars[k];
    ++out[g];
  }
  return out;
}

}  // namespace

Tensor sentence_representation(const EncoderModel& model, const SubwordVocab* vocab, std::string_view sentence,
                               std::string_view language, const RepresentationOptions& options) {
  NoGradGuard no_grad;
  const Segmentation seg = segment_for_model(model.config(), vocab, sentence, options.max_length);
  if (seg.size() <= 2) throw DataError("sentence has no tokens: '" + std::string(sentence) + "'");
  const EncoderOutput out = model.encode(seg.token_ids, language, false);
  std::vector<Tensor> parts = out.layers;
  if (options.include_embeddings) parts.push_back(out.embeddings);
  const std::size_t rows = parts.front().rows(), w = parts.front().cols();
  std::vector<std::size_t> keep;
  const bool chars = is_char_variant(model.config().variant);
  for (std::size_t r = 0; r < rows; ++r)
    if (chars || !is_special_id(seg.token_ids[r])) keep.push_back(r);
  std::vector<double> data(keep.size() * w, 0.0);
  for (const Tensor& layer : parts)
    for (std::size_t i = 0; i < keep.size(); ++i)
      for (std::size_t c = 0; c < w; ++c) data[i * w + c] += layer.at(keep[i], c);
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (double& x : data) x *= inv;
  return Tensor::matrix(keep.size(), w, std::move(data));
}

double greedy_match_score(const Tensor& query, const Tensor& candidate) {
  return greedy_unit(unit_rows(query), unit_rows(candidate));
}

RetrievalTask read_retrieval_task(const std::filesystem::path& queries, const std::filesystem::path& candidates) {
  RetrievalTask task{read_lines(queries), read_lines(candidates)};
  if (task.queries.size() != task.candidates.size())
    throw DataError("retrieval files are not line-aligned: " + std::to_string(task.queries.size()) + " vs " +
                    std::to_string(task.candidates.size()) + " lines");
  if (task.queries.empty()) throw DataError("retrieval task is empty");
  return task;
}

RetrievalResult retrieve_top1(std::size_t num_queries, std::size_t num_candidates, const PairScorer& scorer) {
  ADAPTLAB_REQUIRE(num_queries == num_candidates, "retrieval needs one candidate per query");
  RetrievalResult result;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < num_queries; ++i) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < num_candidates; ++j) {
      const double s = scorer(i, j);
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    result.predicted.push_back(best);
    correct += best == i;
  }
  result.accuracy = num_queries ? static_cast<double>(correct) / static_cast<double>(num_queries) : 0.0;
  return result;
}

RetrievalResult retrieve_with_encoder(const EncoderModel& model, const SubwordVocab* vocab, const RetrievalTask& task,
                                      std::string_view query_language, std::string_view candidate_language,
                                      const RepresentationOptions& options) {
  std::vector<std::vector<std::vector<double>>> q, c;
  for (const auto& s : task.queries)
    q.push_back(unit_rows(sentence_representation(model, vocab, s, query_language, options)));
  for (const auto& s : task.candidates)
    c.push_back(unit_rows(sentence_representation(model, vocab, s, candidate_language, options)));
  return retrieve_top1(q.size(), c.size(), [&](std::size_t i, std::size_t j) { return greedy_unit(q[i], c[j]); });
}

double chrf(std::string_view hypothesis, std::string_view reference, int max_n, double beta) {
  ADAPTLAB_REQUIRE(max_n >= 1, "chrf needs max_n >= 1");
  const auto hyp = characters(hypothesis), ref = characters(reference);
  if (ref.empty()) throw DataError("chrf reference is empty");
  double p_sum = 0.0, r_sum = 0.0;
  std::size_t levels = 0;
  for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n) {
    if (hyp.size() < n) break;
    const auto h = ngrams(hyp, n), r = ngrams(ref, n);
    std::size_t matches = 0, h_total = 0, r_total = 0;
    for (const auto& [g, count] : h) {
      h_total += count;
      auto it = r.find(g);
      if (it != r.end()) matches += std::min(count, it->second);
    }
    for (const auto& [g, count] : r) r_total += count;
    p_sum += static_cast<double>(matches) / static_cast<double>(h_total);
    r_sum += r_total ? static_cast<double>(matches) / static_cast<double>(r_total) : 0.0;
    ++levels;
  }
  if (levels == 0) return 0.0;
  const double p = p_sum / static_cast<double>(levels), r = r_sum / static_cast<double>(levels);
  const double b2 = beta * beta;
  if (p == 0.0 && r == 0.0) return 0.0;
  return 100.0 * (1.0 + b2) * p * r / (b2 * p + r);
}

RetrievalResult retrieve_with_chrf(const RetrievalTask& task, int max_n, double beta) {
  return retrieve_top1(task.queries.size(), task.candidates.size(), [&](std::size_t i, std::size_t j) {
    return chrf(task.candidates[j], task.queries[i], max_n, beta);
  });
}

}  // namespace adaptlab
