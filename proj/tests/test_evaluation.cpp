#include <cmath>

#include "doctest.h"
#include "support.hpp"

using namespace iftx;
using namespace iftx::testing;

namespace {

EvalRecord rec(std::array<std::optional<int>, 4> p, Recipe gold, std::size_t asks) {
  EvalRecord r;
  r.predictions = p;
  r.gold = gold;
  r.asks = asks;
  return r;
}

}  // namespace

TEST_CASE("split metrics on a hand-built set") {
  const Recipe g{1, 2, 3, 4};
  std::vector<EvalRecord> rs = {
      rec({1, 2, 3, 4}, g, 0),                        // 4 correct
      rec({1, 2, 3, 5}, g, 2),                        // 3 correct
      rec({1, std::nullopt, 3, std::nullopt}, g, 1),  // 2 correct, missing count as wrong
      rec({0, 0, 0, 0}, g, 5),                        // 0 correct
  };
  CHECK(correct_components(rs[2]) == 2);
  const auto m = split_metrics(rs);
  CHECK(m.n == 4);
  CHECK(*m.cf_accuracy == doctest::Approx(1.0 / 4.0));
  CHECK(*m.overall_accuracy == doctest::Approx(9.0 / 16.0));
  CHECK(*m.avg_asks == doctest::Approx(8.0 / 4.0));
}

TEST_CASE("an empty split has undefined metrics") {
  const std::vector<EvalRecord> none;
  const auto m = split_metrics(none);
  CHECK(m.n == 0);
  CHECK_FALSE(m.cf_accuracy.has_value());
  CHECK_FALSE(m.overall_accuracy.has_value());
  CHECK_FALSE(m.avg_asks.has_value());
  CHECK_FALSE(mean_std({}).mean.has_value());
}

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> xs = {2, 4, 4, 4, 5, 5, 7, 9};
  const auto m = mean_std(xs);
  CHECK(*m.mean == doctest::Approx(5.0));
  // Sum of squared deviations is 32 over n - 1 = 7.
  CHECK(*m.stddev == doctest::Approx(std::sqrt(32.0 / 7.0)));
  const std::vector<double> one = {0.3};
  CHECK(*mean_std(one).stddev == 0.0);
}

TEST_CASE("Welch t-test matches reference values") {
  const std::vector<double> a = {1, 2, 3, 4, 5}, b = {2, 4, 6, 8, 10};
  const auto r = welch_t_test(a, b);
  CHECK(r.t == doctest::Approx(-1.8973665961010275).epsilon(1e-12));
  CHECK(r.df == doctest::Approx(5.882352941176471).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(0.10753119493062718).epsilon(1e-9));

  const std::vector<double> c = {0.91, 0.93, 0.92, 0.95, 0.94}, d = {0.88, 0.9, 0.87, 0.91, 0.89};
  const auto s = welch_t_test(c, d);
  CHECK(s.t == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(s.df == doctest::Approx(8.0).epsilon(1e-9));
  CHECK(s.p_value == doctest::Approx(0.003949772803445286).epsilon(1e-9));

  const std::vector<double> flat = {1, 1, 1};
  CHECK(welch_t_test(flat, flat).p_value == 1.0);
  const std::vector<double> single = {1};
  CHECK_THROWS_AS(welch_t_test(single, flat), ValidationError);
}

TEST_CASE("run_eval aggregates per-run split metrics") {
  auto w = make_world(120, 80);
  auto net = tiny_policy(*w, 3);
  Environment env(w->ontology(), RewardConfig{});
  UserSimulator user(w->ontology(), w->bank);
  HrlController ctrl(net, w->ontology(), w->vocab);
  EvalOptions eo;
  eo.runs = 10;
  eo.seed = 5;
  const auto rep = run_eval("hrl", env, ctrl, w->synth.test, user, eo);
  CHECK(rep.runs == 10);
  REQUIRE(rep.records.size() == w->synth.test.size());

  const auto split = split_test_set(w->synth.test);
  CHECK(rep.splits.at("ci").n == split.ci.size());
  CHECK(rep.splits.at("vague").n == split.vague().size());
  CHECK(rep.splits.at("all").n == w->synth.test.size());

  for (const auto& name : split_names()) {
    const auto& s = rep.splits.at(name);
    REQUIRE(s.runs.size() == 10);
    if (s.n == 0) {
      CHECK_FALSE(s.cf_accuracy.mean.has_value());
      continue;
    }
    double sum = 0.0;
    for (const auto& r : s.runs) sum += *r.avg_asks;
    CHECK(*s.avg_asks.mean == doctest::Approx(sum / 10.0));
  }

  // The first run's records reproduce its "all" metrics.
  const auto first = split_metrics(rep.records);
  CHECK(first.cf_accuracy == rep.splits.at("all").runs[0].cf_accuracy);
  CHECK(first.avg_asks == rep.splits.at("all").runs[0].avg_asks);

  // Greedy episodes with the same seed repeat exactly.
  const auto again = run_eval("hrl", env, ctrl, w->synth.test, user, eo);
  CHECK(report_to_json(again) == report_to_json(rep));

  eo.runs = 0;
  CHECK_THROWS_AS(run_eval("hrl", env, ctrl, w->synth.test, user, eo), ValidationError);
}

TEST_CASE("report table and JSON render undefined splits") {
  EvalReport rep;
  rep.agent = "lam";
  rep.runs = 2;
  rep.splits["ci"].n = 0;
  rep.splits["all"].n = 3;
  rep.splits["all"].cf_accuracy = {0.5, 0.1};
  rep.splits["all"].overall_accuracy = {0.75, 0.0};
  rep.splits["all"].avg_asks = {0.0, 0.0};
  const auto table = report_table(rep);
  CHECK(table.find("undefined") != std::string::npos);
  CHECK(table.find("0.500 ± 0.100") != std::string::npos);
  const auto j = report_to_json(rep);
  CHECK(j["splits"]["ci"]["cf_accuracy"]["mean"].is_null());
  CHECK(j["splits"]["all"]["overall_accuracy"]["mean"] == 0.75);
}
