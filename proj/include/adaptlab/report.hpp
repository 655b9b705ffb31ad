#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace adaptlab {

/// Mean of {pos, gdi, mean(retrieval)}; the retrieval test sets count as one
/// task. Full precision; display with format_one_decimal.
double macro_average(double pos, double gdi, std::span<const double> retrieval);

/// 100 * candidate / reference.
double relative_performance(double candidate_macro, double reference_macro);

/// 100 * (with / without - 1).
double improvement_ratio(double with_cpt_macro, double without_cpt_macro);

/// Half-up rounding to `decimals` places, tolerant of binary representation
/// error (80.85 rounds to 80.9).
double round_half_up(double value, int decimals = 1);
std::string format_one_decimal(double value);

struct TaskScore {
  std::vector<double> per_seed;  // 0-100 scale
  double mean = 0.0;
  double stddev = 0.0;
};

struct RetrievalScore {
  std::string name;
  double accuracy = 0.0;  // 0-100 scale
};

/// Scores of one experiment on the 0-100 scale. `macro_avg` is present only
/// when every task was evaluated.
struct EvaluationReport {
  std::optional<TaskScore> pos;
  std::optional<TaskScore> gdi;
  std::vector<RetrievalScore> retrieval;
  std::optional<double> macro_avg;
  std::optional<double> relative;  // percentage of a reference report's macro_avg
  nlohmann::json details = nlohmann::json::object();  // stage records (pretraining, per-seed runs)

  /// Recomputes macro_avg from the stored task scores.
  void update_macro();
  /// True when every stored aggregate equals its recomputation from raw values.
  bool self_consistent() const;
};

double improvement_ratio(const EvaluationReport& with_cpt, const EvaluationReport& without_cpt);

nlohmann::json report_to_json(const EvaluationReport& r);
EvaluationReport report_from_json(const nlohmann::json& j);

/// Human-readable table row: POS, GDI, each retrieval set, Macro-Avg.
std::string format_report_row(const std::string& label, const EvaluationReport& r);

}  // namespace adaptlab
