#include "iftx/evaluation.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace iftx {

EvalRecord record_of(const EpisodeOutcome& outcome) {
  EvalRecord r;
  r.predictions = outcome.predictions;
  r.gold = outcome.gold;
  r.asks = outcome.trace.asks();
  r.transcript = outcome.transcript;
  return r;
}

std::size_t correct_components(const EvalRecord& r) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < 4; ++i)
    if (r.predictions[i] && *r.predictions[i] == r.gold.component(i)) ++c;
  return c;
}

std::optional<double> cf_accuracy(std::span<const EvalRecord> records) {
  if (records.empty()) return std::nullopt;
  std::size_t full = 0;
  for (const auto& r : records)
    if (correct_components(r) == 4) ++full;
  return static_cast<double>(full) / static_cast<double>(records.size());
}

std::optional<double> overall_accuracy(std::span<const EvalRecord> records) {
  if (records.empty()) return std::nullopt;
  std::size_t c = 0;
  for (const auto& r : records) c += correct_components(r);
  return static_cast<double>(c) / (4.0 * static_cast<double>(records.size()));
}

std::optional<double> avg_asks(std::span<const EvalRecord> records) {
  if (records.empty()) return std::nullopt;
  std::size_t a = 0;
  for (const auto& r : records) a += r.asks;
  return static_cast<double>(a) / static_cast<double>(records.size());
}

SplitMetrics split_metrics(std::span<const EvalRecord> records) {
  return {records.size(), cf_accuracy(records), overall_accuracy(records), avg_asks(records)};
}

MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) return {};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return {m, sd};
}

const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names = {"ci", "vi12", "vi34", "vague", "all"};
  return names;
}

namespace {

MeanStd over_runs(const std::vector<SplitMetrics>& runs, std::optional<double> SplitMetrics::*field) {
  std::vector<double> xs;
  for (const auto& r : runs)
    if (r.*field) xs.push_back(*(r.*field));
  return mean_std(xs);
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json mean_std_json(const MeanStd& m) { return {{"mean", opt(m.mean)}, {"std", opt(m.stddev)}}; }

}  // namespace

EvalReport run_eval(const std::string& agent, const Environment& env, const Controller& controller,
                    std::span<const LabeledExample> examples, const AnswerProvider& answers,
                    const EvalOptions& options) {
  if (options.runs == 0) throw ValidationError("at least one evaluation run is required");
  const auto split = split_test_set(examples);
  std::map<std::string, std::vector<std::size_t>> members{
      {"ci", split.ci}, {"vi12", split.vi12}, {"vi34", split.vi34}, {"vague", split.vague()}};
  members["all"].resize(examples.size());
  for (std::size_t k = 0; k < examples.size(); ++k) members["all"][k] = k;

  EvalReport report;
  report.agent = agent;
  report.runs = options.runs;
  report.seed = options.seed;
  EpisodeOptions eopts;
  eopts.max_questions_per_subtask = options.max_questions_per_subtask;
  for (std::size_t run = 0; run < options.runs; ++run) {
    const auto outs =
        rollout_parallel(env, controller, examples, answers, Rng::derive(options.seed, run).next(), eopts);
    std::vector<EvalRecord> records;
    records.reserve(outs.size());
    for (const auto& o : outs) records.push_back(record_of(o));
    for (const auto& name : split_names()) {
      std::vector<EvalRecord> subset;
      for (auto k : members[name]) subset.push_back(records[k]);
      report.splits[name].n = subset.size();
      report.splits[name].runs.push_back(split_metrics(subset));
    }
    if (run == 0 && options.keep_records) report.records = std::move(records);
  }
  for (auto& [name, s] : report.splits) {
    s.cf_accuracy = over_runs(s.runs, &SplitMetrics::cf_accuracy);
    s.overall_accuracy = over_runs(s.runs, &SplitMetrics::overall_accuracy);
    s.avg_asks = over_runs(s.runs, &SplitMetrics::avg_asks);
  }
  return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["agent"] = report.agent;
  j["runs"] = report.runs;
  j["seed"] = report.seed;
  for (const auto& name : split_names()) {
    const auto it = report.splits.find(name);
    if (it == report.splits.end()) continue;
    const auto& s = it->second;
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : s.runs)
      runs.push_back({{"cf_accuracy", opt(r.cf_accuracy)},
                      {"overall_accuracy", opt(r.overall_accuracy)},
                      {"avg_asks", opt(r.avg_asks)}});
    j["splits"][name] = {{"n", s.n},
                         {"cf_accuracy", mean_std_json(s.cf_accuracy)},
                         {"overall_accuracy", mean_std_json(s.overall_accuracy)},
                         {"avg_asks", mean_std_json(s.avg_asks)},
                         {"per_run", runs}};
  }
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : report.records) {
    nlohmann::json p = nlohmann::json::array();
    for (const auto& v : r.predictions) p.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    nlohmann::json t = nlohmann::json::array();
    for (const auto& [who, text] : r.transcript) t.push_back({{"speaker", who}, {"text", text}});
    recs.push_back({{"predictions", p},
                    {"gold", {r.gold.tc, r.gold.tf, r.gold.ac, r.gold.af}},
                    {"asks", r.asks},
                    {"transcript", t}});
  }
  j["records"] = recs;
  return j;
}

std::string report_table(const EvalReport& report) {
  auto cell = [](const MeanStd& m) {
    if (!m.mean) return std::string("undefined");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f ± %.3f", *m.mean, *m.stddev);
    return std::string(buf);
  };
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %6s  %-17s  %-17s  %-17s\n", "split", "n", "C+F Acc", "Overall Acc", "#Asks");
  os << "agent: " << report.agent << " (" << report.runs << " runs)\n" << line;
  for (const auto& name : split_names()) {
    const auto it = report.splits.find(name);
    if (it == report.splits.end()) continue;
    const auto& s = it->second;
    std::snprintf(line, sizeof line, "%-6s %6zu  %-17s  %-17s  %-17s\n", name.c_str(), s.n,
                  cell(s.cf_accuracy).c_str(), cell(s.overall_accuracy).c_str(), cell(s.avg_asks).c_str());
    os << line;
  }
  return os.str();
}

TTest welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("t-test needs at least two values per sample");
  const auto ma = mean_std(a), mb = mean_std(b);
  const double va = *ma.stddev * *ma.stddev / static_cast<double>(a.size());
  const double vb = *mb.stddev * *mb.stddev / static_cast<double>(b.size());
  TTest out;
  const double diff = *ma.mean - *mb.mean;
  if (va + vb == 0.0) {
    out.t = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    out.df = static_cast<double>(a.size() + b.size() - 2);
    out.p_value = diff == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t = diff / std::sqrt(va + vb);
  out.df = (va + vb) * (va + vb) /
           (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  boost::math::students_t dist(out.df);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  return out;
}

double mask_violation_rate(std::span<const EpisodeOutcome> outcomes) {
  std::size_t total = 0, noop = 0;
  for (const auto& o : outcomes)
    for (const auto& opt : o.trace.options) {
      ++total;
      if (opt.noop) ++noop;
    }
  return total ? static_cast<double>(noop) / static_cast<double>(total) : 0.0;
}

}  // namespace iftx
