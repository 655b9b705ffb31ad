#include "adaptlab/report.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "adaptlab/downstream.hpp"
#include "adaptlab/error.hpp"

namespace adaptlab {

namespace {

nlohmann::json task_to_json(const TaskScore& t) {
  return {{"per_seed", t.per_seed}, {"mean", t.mean}, {"std", t.stddev}};
}

TaskScore task_from_json(const nlohmann::json& j) {
  TaskScore t;
  t.per_seed = j.at("per_seed").get<std::vector<double>>();
  t.mean = j.at("mean").get<double>();
  t.stddev = j.at("std").get<double>();
  return t;
}

bool task_consistent(const TaskScore& t) {
  if (t.per_seed.empty()) return false;
  const SampleStats s = sample_stats(t.per_seed);
  return s.mean == t.mean && s.stddev == t.stddev;
}

}  // namespace

double macro_average(double pos, double gdi, std::span<const double> retrieval) {
  if (retrieval.empty()) throw DataError("macro-average needs at least one retrieval score");
  const double r = std::accumulate(retrieval.begin(), retrieval.end(), 0.0) / static_cast<double>(retrieval.size());
  return (pos + gdi + r) / 3.0;
}

double relative_performance(double candidate_macro, double reference_macro) {
  ADAPTLAB_REQUIRE(reference_macro > 0.0, "reference macro-average must be positive");
  return 100.0 * candidate_macro / reference_macro;
}

double improvement_ratio(double with_cpt_macro, double without_cpt_macro) {
  ADAPTLAB_REQUIRE(without_cpt_macro > 0.0, "reference macro-average must be positive");
  return 100.0 * (with_cpt_macro / without_cpt_macro - 1.0);
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double x = value * scale;
  return std::floor(x + 0.5 + 1e-9 * std::max(1.0, std::abs(x))) / scale;
}

std::string format_one_decimal(double value) {
  char buf[64];
  const double r = round_half_up(value, 1);
  std::snprintf(buf, sizeof buf, "%.1f", r == 0.0 ? 0.0 : r);
  return buf;
}

void EvaluationReport::update_macro() {
  macro_avg.reset();
  if (!pos || !gdi || retrieval.empty()) return;
  std::vector<double> r;
  for (const auto& s : retrieval) r.push_back(s.accuracy);
  macro_avg = macro_average(pos->mean, gdi->mean, r);
}

bool EvaluationReport::self_consistent() const {
  if (pos && !task_consistent(*pos)) return false;
  if (gdi && !task_consistent(*gdi)) return false;
  EvaluationReport copy = *this;
  copy.update_macro();
  return copy.macro_avg == macro_avg;
}

double improvement_ratio(const EvaluationReport& with_cpt, const EvaluationReport& without_cpt) {
  ADAPTLAB_REQUIRE(with_cpt.macro_avg && without_cpt.macro_avg, "improvement ratio needs complete reports");
  return improvement_ratio(*with_cpt.macro_avg, *without_cpt.macro_avg);
}

nlohmann::json report_to_json(const EvaluationReport& r) {
  nlohmann::json j = nlohmann::json::object();
  j["pos"] = r.pos ? task_to_json(*r.pos) : nlohmann::json(nullptr);
  j["gdi"] = r.gdi ? task_to_json(*r.gdi) : nlohmann::json(nullptr);
  j["retrieval"] = nlohmann::json::array();
  for (const auto& s : r.retrieval) j["retrieval"].push_back({{"name", s.name}, {"accuracy", s.accuracy}});
  j["macro_avg"] = r.macro_avg ? nlohmann::json(*r.macro_avg) : nlohmann::json(nullptr);
  j["relative"] = r.relative ? nlohmann::json(*r.relative) : nlohmann::json(nullptr);
  nlohmann::json display = nlohmann::json::object();
  if (r.pos) display["pos"] = format_one_decimal(r.pos->mean) + " +- " + format_one_decimal(r.pos->stddev);
  if (r.gdi) display["gdi"] = format_one_decimal(r.gdi->mean) + " +- " + format_one_decimal(r.gdi->stddev);
  for (const auto& s : r.retrieval) display["retrieval." + s.name] = format_one_decimal(s.accuracy);
  if (r.macro_avg) display["macro_avg"] = format_one_decimal(*r.macro_avg);
  if (r.relative) display["relative"] = format_one_decimal(*r.relative) + "%";
  j["display"] = display;
  j["details"] = r.details;
  return j;
}

EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  if (j.contains("pos") && !j["pos"].is_null()) r.pos = task_from_json(j["pos"]);
  if (j.contains("gdi") && !j["gdi"].is_null()) r.gdi = task_from_json(j["gdi"]);
  if (j.contains("retrieval"))
    for (const auto& s : j["retrieval"]) r.retrieval.push_back({s.at("name"), s.at("accuracy")});
  if (j.contains("macro_avg") && !j["macro_avg"].is_null()) r.macro_avg = j["macro_avg"].get<double>();
  if (j.contains("relative") && !j["relative"].is_null()) r.relative = j["relative"].get<double>();
  if (j.contains("details")) r.details = j["details"];
  return r;
}

std::string format_report_row(const std::string& label, const EvaluationReport& r) {
  auto cell = [](const std::optional<TaskScore>& t) {
    return t ? format_one_decimal(t->mean) + " +- " + format_one_decimal(t->stddev) : std::string("-");
  };
  std::string row = label + " | POS " + cell(r.pos) + " | GDI " + cell(r.gdi);
  for (const auto& s : r.retrieval) row += " | " + s.name + " " + format_one_decimal(s.accuracy);
  row += " | Macro-Avg. " + (r.macro_avg ? format_one_decimal(*r.macro_avg) : std::string("-"));
  if (r.relative) row += " (" + format_one_decimal(*r.relative) + "%)";
  return row;
}

}  // namespace adaptlab
