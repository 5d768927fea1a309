#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iftx/baselines.hpp"
#include "iftx/rollout.hpp"
#include "json.hpp"

namespace iftx {

struct SupervisedExample {
  Tokens description;
  Tokens answers;      // d_i; empty for the first tuple
  std::size_t target;  // index into A_g; |V_g| is AskUser
};

using SupervisedData = std::array<std::vector<SupervisedExample>, 4>;

// Runs the LAM-rule agent over the corpus. A subtask it predicts without
// asking yields <I, {}, gold>; otherwise <I, {}, AskUser> and <I, d_i, gold>
// where d_i holds every answer it received for that subtask.
SupervisedData collect_supervised_data(std::span<const LabeledExample> corpus, const LamRuleController& lam_rule,
                                       const Environment& env, const AnswerProvider& answers, std::uint64_t seed);

struct SupervisedConfig {
  std::size_t epochs = 10;
  double learning_rate = 0.05;
  std::size_t batch = 32;
  double clip_norm = 5.0;  // <= 0 disables
  std::uint64_t seed = 1;
  // Fixed partition of every batch; results are independent of thread count.
  std::size_t shards = 8;
};

// Mean cross-entropy per epoch (averaged over the four subtasks).
// Policies are trained as LAM-sup runs them: empty state cache.
std::vector<double> pretrain_supervised(const SupervisedData& data, PolicyNet& net, const Vocabulary& vocab,
                                        const SupervisedConfig& config);

// Cross-entropy training of the four non-interactive classifiers.
std::vector<double> train_lam(std::span<const LabeledExample> corpus, LamNet& net, const Ontology& ontology,
                              const Vocabulary& vocab, const SupervisedConfig& config);

// Per-option return: u_n = Σ_{m ≥ n} γ^(m - n) r^h_m. With per_step set the
// exponent counts primitive steps between option starts instead.
std::vector<double> returns_high(const EpisodeTrace& trace, double gamma, bool per_step = false);
// Per-step return inside one option over all its steps (forced one included).
std::vector<double> returns_low(const OptionRecord& option, double gamma);

struct TrainConfig {
  std::size_t episodes = 0;
  double learning_rate = 0.01;
  RewardConfig rewards;
  std::size_t batch = 64;
  // Validation every this many updates (one update = one batch).
  std::size_t validation_every = 2000;
  std::size_t validation_size = 1000;
  std::uint64_t seed = 1;
  bool use_mask = true;
  OrderMode order = OrderMode::Learned;
  bool train_high = true;
  bool train_low = true;
  bool moving_average_baseline = false;
  double baseline_decay = 0.95;
  bool per_step_high_discount = false;
  double clip_norm = 5.0;  // <= 0 disables
  std::size_t shards = 8;
  std::size_t log_every = 10;  // updates per metrics record
};

struct MetricsRecord {
  std::size_t episode = 0;
  double mean_rh = 0.0;
  double mean_asks = 0.0;
  std::optional<double> val_reward;
};

nlohmann::json metrics_to_json(const MetricsRecord& m);

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  std::vector<double> episode_rewards;  // total r^h of every training episode
  double best_validation = 0.0;
  std::size_t best_update = 0;
  std::size_t updates = 0;
  bool diverged = false;
  std::string divergence_message;
};

// Hierarchical REINFORCE. The net ends holding the parameters with the best
// mean validation reward (the initial parameters count as a candidate).
TrainResult train_hrl(const TrainConfig& config, std::span<const LabeledExample> train,
                      std::span<const LabeledExample> validation, const AnswerProvider& answers, PolicyNet& net,
                      const Ontology& ontology, const Vocabulary& vocab,
                      const std::function<void(const MetricsRecord&)>& on_metrics = {});

// Mean total reward of greedy episodes.
double validation_reward(const Environment& env, const Controller& controller,
                         std::span<const LabeledExample> examples, const AnswerProvider& answers,
                         std::uint64_t seed, std::size_t max_questions_per_subtask = 5);

// Σ u · log π over a frozen trace, rebuilt by replaying the recorded
// decisions and answers; returns are computed from the recorded rewards.
// With a sink the analytic gradient is accumulated into it. Cached states
// are written to cache_log when given, and read from frozen_cache instead of
// being recomputed when that is given.
double replay_surrogate(const PolicyNet& net, const Ontology& ontology, const Vocabulary& vocab,
                        const Environment& env, const HrlOptions& options, const Tokens& description,
                        const EpisodeTrace& trace, bool include_high, bool include_low, bool per_step_high = false,
                        Gradients* sink = nullptr, std::vector<Tensor>* cache_log = nullptr,
                        const std::vector<Tensor>* frozen_cache = nullptr);

struct ContractReport {
  bool ok = true;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<std::string> failing_groups;
};

// Compares the analytic gradient of the replayed surrogate with central
// differences on sampled entries of every parameter group ("st1/desc",
// "high/out", ...). Cached states enter the policy as constants, so the
// perturbed replays reuse the cache of the unperturbed one.
ContractReport gradient_contract_check(PolicyNet& net, const Ontology& ontology, const Vocabulary& vocab,
                                       const Environment& env, const HrlOptions& options,
                                       const Tokens& description, const EpisodeTrace& trace,
                                       std::size_t samples_per_group, Rng& rng, double step = 1e-4,
                                       double tolerance = 1e-4);

std::string param_group(const std::string& name);

}  // namespace iftx
