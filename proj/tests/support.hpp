#pragma once

// Shared fixtures and oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "iftx/baselines.hpp"
#include "iftx/bundle.hpp"
#include "iftx/evaluation.hpp"
#include "iftx/policies.hpp"
#include "iftx/trainer.hpp"
#include "iftx/synthetic.hpp"

namespace iftx::testing {

// Tiny dimensions keep finite differences fast.
inline ModelDims tiny_dims(std::size_t vocab) {
  ModelDims d;
  d.vocab = vocab;
  d.embed = 6;
  d.attention = 5;
  d.hidden = 4;
  d.low_state = 7;
  d.high_state = 6;
  return d;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values) v = rng.uniform(-scale, scale);
  return t;
}

// Reduces any value to a scalar through a fixed random projection, so every
// output entry influences the loss with its own weight.
inline Var project(Tape& tape, Var x, Rng& rng) {
  const auto n = tape.value(x).size();
  Var flat = tape.reshape(x, {n});
  Var w = tape.constant(random_tensor({1, n}, rng));
  return tape.sum(tape.affine(w, flat));
}

struct FdResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

// Central differences over every scalar of every parameter (or a sample of
// at most `max_per_param` entries per parameter).
inline FdResult finite_difference_check(ParamStore& store, const std::function<Var(Tape&)>& graph,
                                        std::size_t max_per_param = 1000000, double step = 1e-4,
                                        std::uint64_t seed = 99) {
  Gradients analytic(store);
  {
    Tape tape(store);
    tape.backward(graph(tape), analytic);
  }
  auto eval = [&] {
    Tape tape(store);
    return tape.scalar(graph(tape));
  };
  Rng rng(seed);
  FdResult r;
  for (ParamId id = 0; id < store.size(); ++id) {
    auto& vals = store.value(id).values;
    std::vector<std::size_t> idx(vals.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    if (idx.size() > max_per_param) {
      rng.shuffle(idx);
      idx.resize(max_per_param);
    }
    for (auto k : idx) {
      const double orig = vals[k];
      vals[k] = orig + step;
      const double fp = eval();
      vals[k] = orig - step;
      const double fm = eval();
      vals[k] = orig;
      const double num = (fp - fm) / (2.0 * step);
      const double e = rel_error(analytic[id][k], num);
      ++r.checked;
      if (e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst = store.name(id) + "[" + std::to_string(k) + "]";
      }
    }
  }
  return r;
}

// Uniform random decisions; subtasks are drawn among open ones unless
// `include_done` lets it revisit completed subtasks. A non-negative
// `ask_prob` asks with that probability whenever asking is allowed.
class RandomController final : public Controller {
 public:
  RandomController(const ParamStore& store, const Ontology& ontology, bool include_done = false,
                   double ask_prob = -1.0)
      : store_(&store), ontology_(&ontology), include_done_(include_done), ask_prob_(ask_prob) {}

  const ParamStore& store() const override { return *store_; }
  void begin_episode(EpisodeContext&, ParseState&) const override {}

  SubtaskChoice choose_subtask(EpisodeContext& ctx, const ParseState& state) const override {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < 4; ++i)
      if (include_done_ || !state.done[i]) open.push_back(i);
    return {subtask_at(open[ctx.rng.index(open.size())]), Var{}};
  }

  ActionChoice choose_action(EpisodeContext& ctx, ParseState& state, SubtaskId g) const override {
    const auto i = index_of(g);
    const auto n = ontology_->values(i).size();
    const bool can_ask = state.answer_count[i] < ctx.opts.max_questions_per_subtask;
    if (ask_prob_ >= 0.0) {
      if (can_ask && ctx.rng.uniform(0.0, 1.0) < ask_prob_) return {AgentAction::ask_user(), Var{}};
      return {action_at(*ontology_, g, ctx.rng.index(n)), Var{}};
    }
    const auto k = ctx.rng.index(can_ask ? n + 1 : n);
    return {action_at(*ontology_, g, k), Var{}};
  }

  int forced_prediction(EpisodeContext& ctx, ParseState&, SubtaskId g) const override {
    const auto& vals = ontology_->values(index_of(g));
    return vals[ctx.rng.index(vals.size())];
  }

 private:
  const ParamStore* store_;
  const Ontology* ontology_;
  bool include_done_;
  double ask_prob_;
};

// Hand-written ontology: three channels, three triggers, two actions.
inline Ontology fixture_ontology() {
  std::vector<Channel> ch = {{0, "gmail"}, {1, "weather"}, {2, "sms"}};
  std::vector<FunctionDef> fn = {
      {0, 0, Role::Trigger, "new email", tokenize("this trigger fires when you get a new email")},
      {1, 1, Role::Trigger, "rain tomorrow", tokenize("this trigger fires when rain is forecast")},
      {2, 2, Role::Action, "send sms", tokenize("this action will send you an sms")},
      {3, 0, Role::Action, "send email", tokenize("this action will send an email")},
      {4, 2, Role::Trigger, "new sms", {}},
  };
  return Ontology(std::move(ch), std::move(fn));
}

// Small generated world with its answer bank and vocabulary.
struct World {
  SyntheticWorld synth;
  AnswerBank bank;
  Vocabulary vocab;

  const Ontology& ontology() const { return synth.ontology; }
};

inline std::unique_ptr<World> make_world(std::size_t train = 200, std::size_t test = 60, std::uint64_t seed = 7) {
  auto w = std::make_unique<World>();
  SyntheticConfig cfg;
  cfg.train = train;
  cfg.test = test;
  cfg.seed = seed;
  w->synth = generate_synthetic(cfg);
  Rng rng(seed);
  w->bank = build_answer_bank(w->synth.ontology, w->synth.train, w->synth.paraphrases, rng).bank;
  w->vocab = build_vocabulary(w->synth.train, simulator_texts(w->synth.ontology, w->bank), 1);
  return w;
}

inline PolicyNet tiny_policy(const World& w, std::uint64_t seed = 1) {
  return PolicyNet::create(tiny_dims(w.vocab.size()), value_counts(w.ontology()), seed);
}

// Exact comparison of two episode outcomes through their serialised form.
inline bool same_outcome(const EpisodeOutcome& a, const EpisodeOutcome& b) {
  return a.trace.audit_log() == b.trace.audit_log() && a.predictions == b.predictions && a.gold == b.gold &&
         a.transcript == b.transcript;
}

inline Dataset world_dataset(const World& w) {
  Dataset d;
  d.ontology = w.synth.ontology;
  d.train = w.synth.train;
  d.test = w.synth.test;
  d.paraphrases = w.synth.paraphrases;
  d.bank = w.bank;
  return d;
}

// A small bundle with every agent, built once per process.
inline const ModelBundle& small_bundle() {
  static const ModelBundle b = [] {
    auto w = make_world(150, 40, 3);
    const auto data = world_dataset(*w);
    PretrainConfig pc;
    pc.dims = tiny_dims(0);
    pc.lam = {3, 1.0};
    pc.sup = {2, 0.2};
    auto out = pretrain_bundle(data, pc);
    TrainConfig tc;
    tc.episodes = 128;
    tc.batch = 32;
    tc.validation_every = 2;
    tc.validation_size = 20;
    train_agent(out, data, AgentKind::Hrl, tc);
    train_agent(out, data, AgentKind::HrlFixedOrder, tc);
    return out;
  }();
  return b;
}

}  // namespace iftx::testing
