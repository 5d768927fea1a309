#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iftx/mdp.hpp"
#include "iftx/policies.hpp"
#include "iftx/simulator.hpp"

namespace iftx {

struct EpisodeOptions {
  bool sample = false;  // sample actions (training) instead of greedy
  bool record = false;  // keep log-probability terms for gradients
  std::size_t max_questions_per_subtask = 5;
};

// Per-episode scratch owned by the runner: the tape, the sampling stream and
// cached description encodings.
struct EpisodeContext {
  EpisodeContext(const ParamStore& store, Rng rng, EpisodeOptions opts)
      : tape(store), rng(std::move(rng)), opts(opts) {}

  Tape tape;
  Rng rng;
  EpisodeOptions opts;
  std::array<std::optional<Var>, 4> description;
  bool empty_description = false;

  // Replay mode: decisions are taken from these index lists in order instead
  // of being sampled or chosen greedily.
  bool scripted = false;
  std::vector<std::size_t> script_high, script_low;
  std::size_t script_high_pos = 0, script_low_pos = 0;

  // Every state-cache write, in order, when log_cache is set. With
  // frozen_cache the writes take these recorded values instead, which holds
  // the cache fixed while parameters are perturbed.
  bool log_cache = false;
  std::vector<Tensor> cache_log;
  const std::vector<Tensor>* frozen_cache = nullptr;
  std::size_t frozen_pos = 0;
};

// Next index for a policy decision: scripted, sampled or greedy.
std::size_t decide(EpisodeContext& ctx, const std::vector<double>& probs, bool high_level);

struct SubtaskChoice {
  SubtaskId subtask;
  Var log_prob;  // invalid when nothing was sampled from a policy
};

struct ActionChoice {
  AgentAction action;
  Var log_prob;
};

// Decision maker plugged into the episode runner. Implementations are
// read-only and may be shared by concurrent episodes.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual const ParamStore& store() const = 0;
  virtual void begin_episode(EpisodeContext& ctx, ParseState& state) const = 0;
  virtual SubtaskChoice choose_subtask(EpisodeContext& ctx, const ParseState& state) const = 0;
  virtual ActionChoice choose_action(EpisodeContext& ctx, ParseState& state, SubtaskId g) const = 0;
  // Value predicted when the question budget ran out.
  virtual int forced_prediction(EpisodeContext& ctx, ParseState& state, SubtaskId g) const = 0;
};

enum class OrderMode { Learned, Fixed };

struct HrlOptions {
  OrderMode order = OrderMode::Learned;
  bool use_mask = true;
  bool use_cache = true;
};

// Learned (or fixed-order) high level over the four low-level policies.
class HrlController final : public Controller {
 public:
  HrlController(const PolicyNet& net, const Ontology& ontology, const Vocabulary& vocab, HrlOptions options = {});

  const ParamStore& store() const override { return net_->store; }
  void begin_episode(EpisodeContext& ctx, ParseState& state) const override;
  SubtaskChoice choose_subtask(EpisodeContext& ctx, const ParseState& state) const override;
  ActionChoice choose_action(EpisodeContext& ctx, ParseState& state, SubtaskId g) const override;
  int forced_prediction(EpisodeContext& ctx, ParseState& state, SubtaskId g) const override;

  const PolicyNet& net() const { return *net_; }
  const HrlOptions& options() const { return options_; }

 private:
  const PolicyNet* net_;
  const Ontology* ontology_;
  const Vocabulary* vocab_;
  HrlOptions options_;
};

// First open subtask in st1..st4 order.
SubtaskId next_in_order(const ParseState& state);

enum class EventKind { Question, Completed };

struct Event {
  EventKind kind = EventKind::Completed;
  SubtaskId subtask = SubtaskId::TriggerChannel;
  std::string question;
};

// Resumable episode: advance() runs until the agent asks a question or the
// episode ends; answer() supplies the pending answer.
class EpisodeRunner {
 public:
  EpisodeRunner(const Environment& env, const Controller& controller, Tokens description,
                std::optional<Recipe> gold, Rng rng, EpisodeOptions options = {});

  Event advance();
  void answer(Tokens tokens);

  bool completed() const { return completed_; }
  bool awaiting_answer() const { return state_.awaiting_answer; }
  const ParseState& state() const { return state_; }
  const EpisodeTrace& trace() const { return trace_; }
  EpisodeContext& context() { return ctx_; }
  const std::optional<Recipe>& gold() const { return gold_; }
  // Per option: the high-level log-prob term (may be invalid) and one term
  // per policy step.
  const std::vector<Var>& high_terms() const { return high_terms_; }
  const std::vector<std::vector<Var>>& low_terms() const { return low_terms_; }

 private:
  const Environment* env_;
  const Controller* ctrl_;
  std::optional<Recipe> gold_;
  EpisodeContext ctx_;
  ParseState state_;
  EpisodeTrace trace_;
  std::vector<Var> high_terms_;
  std::vector<std::vector<Var>> low_terms_;
  bool started_ = false;
  bool completed_ = false;
};

struct EpisodeOutcome {
  EpisodeTrace trace;
  std::array<std::optional<int>, 4> predictions;
  Recipe gold;
  bool empty_description = false;
  // (speaker, text) pairs; the first entry is the user's description.
  std::vector<std::pair<std::string, std::string>> transcript;
};

EpisodeOutcome outcome_of(const EpisodeRunner& runner, const Tokens& description);

// Runs one episode to completion against a simulated user.
EpisodeOutcome simulate_episode(const Environment& env, const Controller& controller, const LabeledExample& example,
                                const AnswerProvider& answers, Rng policy_rng, Rng answer_rng,
                                const EpisodeOptions& options = {});

// Episode k of a batch uses streams derived from (seed, k), so results do not
// depend on how episodes are distributed over threads.
Rng policy_stream(std::uint64_t seed, std::uint64_t episode);
Rng answer_stream(std::uint64_t seed, std::uint64_t episode);

// Reference implementation: one episode after another.
std::vector<EpisodeOutcome> rollout_serial(const Environment& env, const Controller& controller,
                                           std::span<const LabeledExample> examples, const AnswerProvider& answers,
                                           std::uint64_t seed, const EpisodeOptions& options = {});
// OpenMP version; bit-identical to rollout_serial.
std::vector<EpisodeOutcome> rollout_parallel(const Environment& env, const Controller& controller,
                                             std::span<const LabeledExample> examples, const AnswerProvider& answers,
                                             std::uint64_t seed, const EpisodeOptions& options = {});

}  // namespace iftx
