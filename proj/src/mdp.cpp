#include "iftx/mdp.hpp"

#include <sstream>

namespace iftx {

using nlohmann::json;

void RewardConfig::validate() const {
  if (!(beta >= 0.0 && beta < 1.0)) throw ValidationError("beta must lie in [0, 1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in [0, 1]");
}

std::size_t OptionRecord::length() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.forced ? 0 : 1;
  return n;
}

double EpisodeTrace::total_reward() const {
  double r = 0.0;
  for (const auto& o : options) r += o.high_reward;
  return r;
}

std::size_t EpisodeTrace::asks() const {
  std::size_t n = 0;
  for (const auto& o : options)
    for (const auto& s : o.steps) n += s.action.ask ? 1 : 0;
  return n;
}

json option_to_json(const OptionRecord& o) {
  json steps = json::array();
  for (const auto& s : o.steps) {
    json j = {{"action", s.action.ask ? json("ask") : json(s.action.value)}, {"reward", s.reward}};
    if (s.forced) j["forced"] = true;
    if (s.action.ask) j["answer"] = join(s.answer);
    steps.push_back(std::move(j));
  }
  json j = {{"subtask", std::string(short_name(o.subtask))},
            {"start_step", o.start_step},
            {"length", o.length()},
            {"steps", std::move(steps)},
            {"high_reward", o.high_reward}};
  if (o.noop) j["noop"] = true;
  return j;
}

std::string EpisodeTrace::audit_log() const {
  std::ostringstream os;
  for (const auto& o : options) os << option_to_json(o).dump() << '\n';
  return os.str();
}

Environment::Environment(const Ontology& ontology, RewardConfig rewards, TurnLimits limits)
    : ontology_(&ontology), rewards_(rewards), limits_(limits) {
  rewards_.validate();
  if (limits_.max_local_turn == 0 || limits_.max_global_turn == 0)
    throw ValidationError("turn limits must be positive");
}

ParseState Environment::reset(const Tokens& description) const {
  ParseState s;
  s.description = description;
  return s;
}

void Environment::check_action(SubtaskId subtask, const AgentAction& action) const {
  if (action.ask) return;
  if (ontology_->value_index(index_of(subtask), action.value) < 0)
    throw ContractViolation("value " + std::to_string(action.value) + " is not a legal " +
                            std::string(short_name(subtask)) + " prediction");
}

double Environment::low_reward(SubtaskId subtask, const AgentAction& action, const Recipe& gold) const {
  check_action(subtask, action);
  if (action.ask) return -rewards_.beta;
  return action.value == gold.component(index_of(subtask)) ? rewards_.correct_reward : rewards_.wrong_reward;
}

void Environment::begin_option(ParseState& state, SubtaskId subtask, EpisodeTrace& trace) const {
  if (episode_terminated(state)) throw ContractViolation("begin_option: episode already terminated");
  if (state.active) throw ContractViolation("begin_option: another option is still active");
  if (state.done[index_of(subtask)])
    throw ContractViolation("begin_option: subtask " + std::string(short_name(subtask)) + " already completed");
  state.active = subtask;
  state.local_turn = 1;
  trace.options.push_back(OptionRecord{subtask, trace.steps, {}, 0.0, false});
}

void Environment::noop_option(ParseState& state, SubtaskId subtask, EpisodeTrace& trace) const {
  if (episode_terminated(state)) throw ContractViolation("noop_option: episode already terminated");
  if (state.active) throw ContractViolation("noop_option: another option is still active");
  if (!state.done[index_of(subtask)]) throw ContractViolation("noop_option: subtask is still open");
  trace.options.push_back(OptionRecord{subtask, trace.steps, {}, 0.0, true});
  ++state.global_turn;
}

double Environment::step(ParseState& state, const AgentAction& action, const Recipe* gold, EpisodeTrace& trace) const {
  if (!state.active) throw ContractViolation("step: no active option");
  const auto g = *state.active;
  if (option_terminated(state, g)) throw ContractViolation("step: option already terminated");
  if (state.awaiting_answer) throw ContractViolation("step: previous question has not been answered");
  check_action(g, action);
  const double r = gold ? low_reward(g, action, *gold) : 0.0;
  trace.options.back().steps.push_back(StepRecord{action, r, false, {}});
  ++trace.steps;
  if (action.ask) {
    ++state.local_turn;
    state.awaiting_answer = true;
  } else {
    state.predictions[index_of(g)] = action.value;
  }
  return r;
}

void Environment::receive_answer(ParseState& state, Tokens answer, EpisodeTrace& trace) const {
  if (!state.active) throw ContractViolation("receive_answer: no active option");
  if (!state.awaiting_answer) throw ContractViolation("receive_answer: no question pending");
  auto& steps = trace.options.back().steps;
  const auto i = index_of(*state.active);
  state.awaiting_answer = false;
  auto& d = state.answers[i];
  d.insert(d.end(), answer.begin(), answer.end());
  ++state.answer_count[i];
  steps.back().answer = std::move(answer);
}

double Environment::step(ParseState& state, const AgentAction& action, const Recipe& gold,
                         const AnswerProvider& answers, Rng& rng, EpisodeTrace& trace) const {
  const auto g = state.active;
  double r = step(state, action, &gold, trace);
  if (action.ask) receive_answer(state, answers.answer(*g, gold, rng), trace);
  return r;
}

double Environment::force_predict(ParseState& state, int value, const Recipe* gold, EpisodeTrace& trace) const {
  if (!state.active) throw ContractViolation("force_predict: no active option");
  const auto g = *state.active;
  if (state.awaiting_answer) throw ContractViolation("force_predict: question still pending");
  if (state.predictions[index_of(g)] || state.local_turn <= limits_.max_local_turn)
    throw ContractViolation("force_predict: question budget not exhausted");
  const auto action = AgentAction::predict(value);
  check_action(g, action);
  const double r = gold ? low_reward(g, action, *gold) : 0.0;
  trace.options.back().steps.push_back(StepRecord{action, r, true, {}});
  ++trace.steps;
  state.predictions[index_of(g)] = value;
  return r;
}

bool Environment::option_terminated(const ParseState& state, SubtaskId subtask) const {
  return state.predictions[index_of(subtask)].has_value() || state.local_turn > limits_.max_local_turn;
}

bool Environment::episode_terminated(const ParseState& state) const {
  bool all = true;
  for (bool b : state.done) all = all && b;
  return all || state.global_turn > limits_.max_global_turn;
}

double Environment::close_option(EpisodeTrace& trace, ParseState& state) const {
  if (!state.active) throw ContractViolation("close_option: no active option");
  const auto g = *state.active;
  if (!state.predictions[index_of(g)]) throw ContractViolation("close_option: option has no prediction yet");
  if (state.awaiting_answer) throw ContractViolation("close_option: question still pending");
  auto& opt = trace.options.back();
  double rh = 0.0;
  for (const auto& s : opt.steps) rh += s.reward;
  opt.high_reward = rh;
  state.done[index_of(g)] = true;
  state.active.reset();
  ++state.global_turn;
  return rh;
}

}  // namespace iftx
