#include <algorithm>

#include "doctest.h"
#include "support.hpp"

using namespace iftx;
using namespace iftx::testing;

namespace {

struct LamFixture {
  std::unique_ptr<World> w = make_world(120, 40);
  LamNet lam = LamNet::create(tiny_dims(w->vocab.size()), value_counts(w->ontology()), 11);
};

double top_probability(const LamNet& net, const Vocabulary& vocab, SubtaskId g, const Tokens& text) {
  Tape t(net.store);
  const auto d = lam_distribution(t, net, g, vocab.encode(text));
  return *std::max_element(d.probs.begin(), d.probs.end());
}

}  // namespace

TEST_CASE("agent names round-trip") {
  for (auto k : {AgentKind::Lam, AgentKind::LamRule, AgentKind::LamSup, AgentKind::HrlFixedOrder, AgentKind::Hrl})
    CHECK(parse_agent(agent_name(k)) == k);
  CHECK(agent_name(AgentKind::HrlFixedOrder) == "hrl-fixed");
  CHECK_THROWS_AS(parse_agent("gpt"), ValidationError);
  CHECK_FALSE(is_interactive(AgentKind::Lam));
  CHECK(is_interactive(AgentKind::LamSup));
}

TEST_CASE("LAM never asks and predicts the per-subtask argmax") {
  LamFixture f;
  Environment env(f.w->ontology(), RewardConfig{});
  UserSimulator user(f.w->ontology(), f.w->bank);
  LamController ctrl(f.lam, f.w->ontology(), f.w->vocab);
  const auto out = rollout_serial(env, ctrl, f.w->synth.test, user, 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    CHECK(out[k].trace.asks() == 0);
    const auto r = lam_predict(f.lam, f.w->vocab, f.w->ontology(), f.w->synth.test[k].description);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[k].predictions[i] == r.component(i));
  }
}

TEST_CASE("LAM-rule asks exactly when the top probability is below the threshold") {
  LamFixture f;
  const auto& o = f.w->ontology();
  for (std::size_t k = 0; k < 20; ++k) {
    ParseState s;
    s.description = f.w->synth.test[k].description;
    for (auto g : kAllSubtasks) {
      const double p = top_probability(f.lam, f.w->vocab, g, s.description);
      for (double th : {0.05, 0.2, 0.5, 0.9, 1.0}) {
        const auto a = lam_rule_step(f.lam, f.w->vocab, o, g, s, th, true);
        CHECK(a.ask == (p < th));
      }
      // Probability equal to the threshold does not ask.
      CHECK_FALSE(lam_rule_step(f.lam, f.w->vocab, o, g, s, p, true).ask);
      CHECK_FALSE(lam_rule_step(f.lam, f.w->vocab, o, g, s, 1.0, false).ask);
    }
  }
  CHECK_THROWS_AS(lam_rule_step(f.lam, f.w->vocab, o, SubtaskId::TriggerChannel, ParseState{}, 0.0, true),
                  ValidationError);
  CHECK_THROWS_AS(LamRuleController(f.lam, o, f.w->vocab, 1.5), ValidationError);
}

TEST_CASE("LAM-rule re-encodes the description with the subtask's answers appended") {
  ParseState s;
  s.description = {"a", "b"};
  s.answers[2] = {"c", "d"};
  CHECK(lam_rule_text(s, SubtaskId::ActionChannel) == Tokens{"a", "b", "c", "d"});
  CHECK(lam_rule_text(s, SubtaskId::TriggerChannel) == Tokens{"a", "b"});
}

TEST_CASE("LAM-rule question counts grow with the threshold and respect the cap") {
  LamFixture f;
  Environment env(f.w->ontology(), RewardConfig{});
  UserSimulator user(f.w->ontology(), f.w->bank);
  std::size_t never = 0, always = 0;
  {
    LamRuleController c(f.lam, f.w->ontology(), f.w->vocab, 1e-9);
    for (const auto& o : rollout_serial(env, c, f.w->synth.test, user, 1)) never += o.trace.asks();
  }
  {
    LamRuleController c(f.lam, f.w->ontology(), f.w->vocab, 1.0);
    EpisodeOptions eo;
    eo.max_questions_per_subtask = 2;
    for (const auto& o : rollout_serial(env, c, f.w->synth.test, user, 1, eo)) {
      always += o.trace.asks();
      for (const auto& opt : o.trace.options) CHECK(opt.length() == 3);
    }
  }
  CHECK(never == 0);
  CHECK(always == 2 * 4 * f.w->synth.test.size());
}

TEST_CASE("baseline option presets") {
  CHECK(lam_sup_options().order == OrderMode::Fixed);
  CHECK_FALSE(lam_sup_options().use_cache);
  CHECK(fixed_order_options().order == OrderMode::Fixed);
  CHECK(fixed_order_options().use_cache);
  CHECK(HrlOptions{}.order == OrderMode::Learned);
}
