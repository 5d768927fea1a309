#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "iftx/encoders.hpp"
#include "iftx/ontology.hpp"
#include "iftx/simulator.hpp"
#include "iftx/subtask.hpp"
#include "json.hpp"

namespace iftx {

struct RewardConfig {
  double beta = 0.3;
  double gamma = 0.99;
  double correct_reward = 1.0;
  double wrong_reward = -1.0;

  void validate() const;
};

struct TurnLimits {
  std::size_t max_local_turn = 5;
  std::size_t max_global_turn = 4;
};

// Predict carries a component value id (channel id or function id).
struct AgentAction {
  bool ask = false;
  int value = -1;

  static AgentAction predict(int value) { return {false, value}; }
  static AgentAction ask_user() { return {true, -1}; }
  friend bool operator==(const AgentAction&, const AgentAction&) = default;
};

struct ParseState {
  Tokens description;
  std::array<bool, 4> done{};
  // d_i: every answer received for the subtask, concatenated in order.
  std::array<Tokens, 4> answers;
  std::array<std::size_t, 4> answer_count{};
  std::array<std::optional<int>, 4> predictions;
  std::size_t global_turn = 1;
  std::size_t local_turn = 1;
  std::optional<SubtaskId> active;
  bool awaiting_answer = false;
  StateCache cache;
};

struct StepRecord {
  AgentAction action;
  double reward = 0.0;
  // Budget-exhaustion prediction: not a policy step and not counted in N.
  bool forced = false;
  Tokens answer;
};

struct OptionRecord {
  SubtaskId subtask = SubtaskId::TriggerChannel;
  std::size_t start_step = 0;
  std::vector<StepRecord> steps;
  double high_reward = 0.0;
  // Chosen while already complete (only reachable with the action mask off).
  bool noop = false;

  std::size_t length() const;  // N: policy steps, forced step excluded
};

struct EpisodeTrace {
  std::vector<OptionRecord> options;
  std::size_t steps = 0;  // primitive steps so far, forced steps included

  double total_reward() const;
  std::size_t asks() const;
  // One JSON object per option, newline separated.
  std::string audit_log() const;
};

nlohmann::json option_to_json(const OptionRecord& option);

// The options-over-MDP environment; shared read-only across episodes.
class Environment {
 public:
  Environment(const Ontology& ontology, RewardConfig rewards, TurnLimits limits = {});

  const Ontology& ontology() const { return *ontology_; }
  const RewardConfig& rewards() const { return rewards_; }
  const TurnLimits& limits() const { return limits_; }

  ParseState reset(const Tokens& description) const;

  // Throws ContractViolation for a value outside V_g.
  void check_action(SubtaskId subtask, const AgentAction& action) const;
  double low_reward(SubtaskId subtask, const AgentAction& action, const Recipe& gold) const;

  // Starts an option on an open subtask.
  void begin_option(ParseState& state, SubtaskId subtask, EpisodeTrace& trace) const;
  // Records a completed subtask chosen again: an empty option with r^h = 0.
  void noop_option(ParseState& state, SubtaskId subtask, EpisodeTrace& trace) const;

  // Applies a policy action to the active option. AskUser leaves the state
  // waiting for receive_answer. Without gold the reward is recorded as 0.
  double step(ParseState& state, const AgentAction& action, const Recipe* gold, EpisodeTrace& trace) const;
  void receive_answer(ParseState& state, Tokens answer, EpisodeTrace& trace) const;
  // step + answer retrieval in one call.
  double step(ParseState& state, const AgentAction& action, const Recipe& gold, const AnswerProvider& answers,
              Rng& rng, EpisodeTrace& trace) const;
  // Budget-exhaustion prediction at the end of an option.
  double force_predict(ParseState& state, int value, const Recipe* gold, EpisodeTrace& trace) const;

  bool option_terminated(const ParseState& state, SubtaskId subtask) const;
  bool episode_terminated(const ParseState& state) const;
  // Closes the active option: sets b_i, advances the global turn, returns r^h.
  double close_option(EpisodeTrace& trace, ParseState& state) const;

 private:
  const Ontology* ontology_;
  RewardConfig rewards_;
  TurnLimits limits_;
};

}  // namespace iftx
