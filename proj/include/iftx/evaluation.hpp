#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iftx/rollout.hpp"
#include "json.hpp"

namespace iftx {

struct EvalRecord {
  std::array<std::optional<int>, 4> predictions;
  Recipe gold;
  std::size_t asks = 0;
  std::vector<std::pair<std::string, std::string>> transcript;
};

EvalRecord record_of(const EpisodeOutcome& outcome);

std::size_t correct_components(const EvalRecord& r);

// Missing predictions count as wrong. All three return nullopt on an empty set.
std::optional<double> cf_accuracy(std::span<const EvalRecord> records);
std::optional<double> overall_accuracy(std::span<const EvalRecord> records);
std::optional<double> avg_asks(std::span<const EvalRecord> records);

struct SplitMetrics {
  std::size_t n = 0;
  std::optional<double> cf_accuracy, overall_accuracy, avg_asks;
};

SplitMetrics split_metrics(std::span<const EvalRecord> records);

struct MeanStd {
  std::optional<double> mean, stddev;
};

// Sample standard deviation (n - 1); a single value has stddev 0.
MeanStd mean_std(std::span<const double> xs);

struct SplitSummary {
  std::size_t n = 0;
  MeanStd cf_accuracy, overall_accuracy, avg_asks;
  std::vector<SplitMetrics> runs;
};

// Splits reported by run_eval: "ci", "vi12", "vi34", "vague", "all".
const std::vector<std::string>& split_names();

struct EvalReport {
  std::string agent;
  std::size_t runs = 0;
  std::uint64_t seed = 0;
  std::map<std::string, SplitSummary> splits;
  std::vector<EvalRecord> records;  // first run
};

struct EvalOptions {
  std::size_t runs = 10;
  std::uint64_t seed = 1;
  std::size_t max_questions_per_subtask = 5;
  bool keep_records = true;
};

// Greedy episodes over every example, repeated with fresh simulator streams.
EvalReport run_eval(const std::string& agent, const Environment& env, const Controller& controller,
                    std::span<const LabeledExample> examples, const AnswerProvider& answers,
                    const EvalOptions& options = {});

nlohmann::json report_to_json(const EvalReport& report);
// Columns: split, n, C+F Acc, Overall Acc, #Asks (mean ± std).
std::string report_table(const EvalReport& report);

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // two-sided
};

// Welch's unpaired two-sample t-test; needs at least two values per sample.
TTest welch_t_test(std::span<const double> a, std::span<const double> b);

// Fraction of high-level choices that land on an already completed subtask.
double mask_violation_rate(std::span<const EpisodeOutcome> outcomes);

}  // namespace iftx
