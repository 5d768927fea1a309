#include "iftx/rollout.hpp"

#include <exception>

namespace iftx {

namespace {

void write_cache(EpisodeContext& ctx, ParseState& state, std::size_t i, const Tensor& value) {
  if (ctx.frozen_cache) {
    if (ctx.frozen_pos >= ctx.frozen_cache->size()) throw ContractViolation("frozen cache exhausted");
    state.cache[i] = (*ctx.frozen_cache)[ctx.frozen_pos++];
  } else {
    state.cache[i] = value;
  }
  if (ctx.log_cache) ctx.cache_log.push_back(state.cache[i]);
}

}  // namespace

HrlController::HrlController(const PolicyNet& net, const Ontology& ontology, const Vocabulary& vocab,
                             HrlOptions options)
    : net_(&net), ontology_(&ontology), vocab_(&vocab), options_(options) {
  auto counts = value_counts(ontology);
  for (std::size_t i = 0; i < 4; ++i)
    if (net.low[i].num_values != counts[i]) throw DimensionError("policy does not match the ontology value sets");
  if (net.dims.vocab != vocab.size()) throw DimensionError("policy does not match the vocabulary");
}

void HrlController::begin_episode(EpisodeContext& ctx, ParseState& state) const {
  auto& tape = ctx.tape;
  const auto ids = vocab_->encode(state.description);
  for (std::size_t i = 0; i < 4; ++i) {
    auto enc = encode_description(tape, net_->low[i].desc, ids);
    ctx.description[i] = enc.v;
    ctx.empty_description = enc.empty_input;
  }
  if (!options_.use_cache) return;
  // Every slot starts from its own encoding with the other slots at zero.
  const StateCache zero{};
  Var no_answer = tape.constant(Tensor({net_->dims.semantic()}, 0.0));
  for (std::size_t i = 0; i < 4; ++i) {
    Var v_i = combine(tape, *ctx.description[i], no_answer, net_->w_d[i]);
    write_cache(ctx, state, i, tape.value(low_level_state(tape, net_->low[i].comb, i, v_i, zero, net_->dims)));
  }
}

std::size_t decide(EpisodeContext& ctx, const std::vector<double>& probs, bool high_level) {
  if (ctx.scripted) {
    auto& list = high_level ? ctx.script_high : ctx.script_low;
    auto& pos = high_level ? ctx.script_high_pos : ctx.script_low_pos;
    if (pos >= list.size()) throw ContractViolation("replay script exhausted");
    const auto k = list[pos++];
    if (k >= probs.size() || probs[k] <= 0.0) throw ContractViolation("replay script picks an impossible action");
    return k;
  }
  return ctx.opts.sample ? sample_index(probs, ctx.rng) : greedy_index(probs);
}

SubtaskId next_in_order(const ParseState& state) {
  for (std::size_t i = 0; i < 4; ++i)
    if (!state.done[i]) return subtask_at(i);
  throw ContractViolation("next_in_order: every subtask is complete");
}

SubtaskChoice HrlController::choose_subtask(EpisodeContext& ctx, const ParseState& state) const {
  if (options_.order == OrderMode::Fixed) return {next_in_order(state), Var{}};
  auto dist = high_distribution(ctx.tape, *net_, state, options_.use_mask);
  const auto k = decide(ctx, dist.probs, true);
  Var lp = ctx.opts.record ? log_prob(ctx.tape, dist, k) : Var{};
  return {subtask_at(k), lp};
}

ActionChoice HrlController::choose_action(EpisodeContext& ctx, ParseState& state, SubtaskId g) const {
  const auto i = index_of(g);
  const bool block = state.answer_count[i] >= ctx.opts.max_questions_per_subtask;
  auto out = low_distribution(ctx.tape, *net_, g, *ctx.description[i], *vocab_, state, block);
  const auto k = decide(ctx, out.dist.probs, false);
  Var lp = ctx.opts.record ? log_prob(ctx.tape, out.dist, k) : Var{};
  if (options_.use_cache) write_cache(ctx, state, i, ctx.tape.value(out.state));
  return {action_at(*ontology_, g, k), lp};
}

int HrlController::forced_prediction(EpisodeContext& ctx, ParseState& state, SubtaskId g) const {
  const auto i = index_of(g);
  auto out = low_distribution(ctx.tape, *net_, g, *ctx.description[i], *vocab_, state, true);
  if (options_.use_cache) write_cache(ctx, state, i, ctx.tape.value(out.state));
  return action_at(*ontology_, g, greedy_index(out.dist.probs)).value;
}

EpisodeRunner::EpisodeRunner(const Environment& env, const Controller& controller, Tokens description,
                             std::optional<Recipe> gold, Rng rng, EpisodeOptions options)
    : env_(&env),
      ctrl_(&controller),
      gold_(std::move(gold)),
      ctx_(controller.store(), std::move(rng), options),
      state_(env.reset(description)) {}

Event EpisodeRunner::advance() {
  if (state_.awaiting_answer) throw ConflictError("a question is waiting for an answer");
  if (completed_) return Event{};
  if (!started_) {
    ctrl_->begin_episode(ctx_, state_);
    started_ = true;
  }
  const Recipe* gold = gold_ ? &*gold_ : nullptr;
  for (;;) {
    if (!state_.active) {
      if (env_->episode_terminated(state_)) {
        completed_ = true;
        return Event{};
      }
      auto choice = ctrl_->choose_subtask(ctx_, state_);
      high_terms_.push_back(choice.log_prob);
      low_terms_.emplace_back();
      if (state_.done[index_of(choice.subtask)]) {
        env_->noop_option(state_, choice.subtask, trace_);
        continue;
      }
      env_->begin_option(state_, choice.subtask, trace_);
    }
    const auto g = *state_.active;
    if (!env_->option_terminated(state_, g)) {
      auto choice = ctrl_->choose_action(ctx_, state_, g);
      env_->step(state_, choice.action, gold, trace_);
      low_terms_.back().push_back(choice.log_prob);
      if (choice.action.ask) return Event{EventKind::Question, g, question(g)};
      continue;
    }
    if (!state_.predictions[index_of(g)])
      env_->force_predict(state_, ctrl_->forced_prediction(ctx_, state_, g), gold, trace_);
    env_->close_option(trace_, state_);
  }
}

void EpisodeRunner::answer(Tokens tokens) {
  if (completed_) throw ConflictError("the episode is already complete");
  if (!state_.awaiting_answer) throw ConflictError("no question is pending");
  env_->receive_answer(state_, std::move(tokens), trace_);
}

EpisodeOutcome outcome_of(const EpisodeRunner& runner, const Tokens& description) {
  EpisodeOutcome out;
  out.trace = runner.trace();
  out.predictions = runner.state().predictions;
  if (runner.gold()) out.gold = *runner.gold();
  out.transcript.emplace_back("user", join(description));
  for (const auto& o : out.trace.options)
    for (const auto& s : o.steps)
      if (s.action.ask) {
        out.transcript.emplace_back("agent", question(o.subtask));
        out.transcript.emplace_back("user", join(s.answer));
      }
  return out;
}

EpisodeOutcome simulate_episode(const Environment& env, const Controller& controller, const LabeledExample& example,
                                const AnswerProvider& answers, Rng policy_rng, Rng answer_rng,
                                const EpisodeOptions& options) {
  EpisodeRunner runner(env, controller, example.description, example.gold, std::move(policy_rng), options);
  for (auto ev = runner.advance(); ev.kind == EventKind::Question; ev = runner.advance())
    runner.answer(answers.answer(ev.subtask, example.gold, answer_rng));
  auto out = outcome_of(runner, example.description);
  out.empty_description = runner.context().empty_description;
  return out;
}

Rng policy_stream(std::uint64_t seed, std::uint64_t episode) { return Rng::derive(seed, 2 * episode); }
Rng answer_stream(std::uint64_t seed, std::uint64_t episode) { return Rng::derive(seed, 2 * episode + 1); }

std::vector<EpisodeOutcome> rollout_serial(const Environment& env, const Controller& controller,
                                           std::span<const LabeledExample> examples, const AnswerProvider& answers,
                                           std::uint64_t seed, const EpisodeOptions& options) {
  std::vector<EpisodeOutcome> out;
  out.reserve(examples.size());
  for (std::size_t k = 0; k < examples.size(); ++k)
    out.push_back(simulate_episode(env, controller, examples[k], answers, policy_stream(seed, k),
                                   answer_stream(seed, k), options));
  return out;
}

std::vector<EpisodeOutcome> rollout_parallel(const Environment& env, const Controller& controller,
                                             std::span<const LabeledExample> examples, const AnswerProvider& answers,
                                             std::uint64_t seed, const EpisodeOptions& options) {
  std::vector<EpisodeOutcome> out(examples.size());
  std::exception_ptr error;
  const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    try {
      const auto u = static_cast<std::size_t>(k);
      out[u] = simulate_episode(env, controller, examples[u], answers, policy_stream(seed, u), answer_stream(seed, u),
                                options);
    } catch (...) {
#pragma omp critical(iftx_rollout_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace iftx
