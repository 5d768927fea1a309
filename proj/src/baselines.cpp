#include "iftx/baselines.hpp"

#include <array>

namespace iftx {

namespace {
constexpr std::array<std::string_view, 5> kAgentNames = {"lam", "lam-rule", "lam-sup", "hrl-fixed", "hrl"};
}

std::string_view agent_name(AgentKind kind) { return kAgentNames[static_cast<std::size_t>(kind)]; }

AgentKind parse_agent(std::string_view name) {
  for (std::size_t k = 0; k < kAgentNames.size(); ++k)
    if (kAgentNames[k] == name) return static_cast<AgentKind>(k);
  throw ValidationError("unknown agent '" + std::string(name) + "' (expected lam, lam-rule, lam-sup, hrl-fixed, hrl)");
}

bool is_interactive(AgentKind kind) { return kind != AgentKind::Lam; }

Recipe lam_predict(const LamNet& net, const Vocabulary& vocab, const Ontology& ontology, const Tokens& description) {
  Tape tape(net.store);
  const auto ids = vocab.encode(description);
  Recipe r;
  for (std::size_t i = 0; i < 4; ++i) {
    auto d = lam_distribution(tape, net, subtask_at(i), ids);
    r.component(i) = ontology.values(i)[greedy_index(d.probs)];
  }
  return r;
}

LamController::LamController(const LamNet& net, const Ontology& ontology, const Vocabulary& vocab)
    : net_(&net), ontology_(&ontology), vocab_(&vocab) {}

SubtaskChoice LamController::choose_subtask(EpisodeContext&, const ParseState& state) const {
  return {next_in_order(state), Var{}};
}

ActionChoice LamController::choose_action(EpisodeContext& ctx, ParseState& state, SubtaskId g) const {
  return {AgentAction::predict(forced_prediction(ctx, state, g)), Var{}};
}

int LamController::forced_prediction(EpisodeContext& ctx, ParseState& state, SubtaskId g) const {
  auto d = lam_distribution(ctx.tape, *net_, g, vocab_->encode(state.description));
  return ontology_->values(index_of(g))[greedy_index(d.probs)];
}

Tokens lam_rule_text(const ParseState& state, SubtaskId g) {
  Tokens t = state.description;
  const auto& a = state.answers[index_of(g)];
  t.insert(t.end(), a.begin(), a.end());
  return t;
}

AgentAction lam_rule_step(const LamNet& net, const Vocabulary& vocab, const Ontology& ontology, SubtaskId g,
                          const ParseState& state, double threshold, bool allow_ask) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("LAM-rule threshold must lie in (0, 1]");
  Tape tape(net.store);
  auto d = lam_distribution(tape, net, g, vocab.encode(lam_rule_text(state, g)));
  const auto k = greedy_index(d.probs);
  if (allow_ask && d.probs[k] < threshold) return AgentAction::ask_user();
  return AgentAction::predict(ontology.values(index_of(g))[k]);
}

LamRuleController::LamRuleController(const LamNet& net, const Ontology& ontology, const Vocabulary& vocab,
                                     double threshold)
    : net_(&net), ontology_(&ontology), vocab_(&vocab), threshold_(threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("LAM-rule threshold must lie in (0, 1]");
}

SubtaskChoice LamRuleController::choose_subtask(EpisodeContext&, const ParseState& state) const {
  return {next_in_order(state), Var{}};
}

ActionChoice LamRuleController::choose_action(EpisodeContext& ctx, ParseState& state, SubtaskId g) const {
  const bool allow = state.answer_count[index_of(g)] < ctx.opts.max_questions_per_subtask;
  return {lam_rule_step(*net_, *vocab_, *ontology_, g, state, threshold_, allow), Var{}};
}

int LamRuleController::forced_prediction(EpisodeContext&, ParseState& state, SubtaskId g) const {
  return lam_rule_step(*net_, *vocab_, *ontology_, g, state, threshold_, false).value;
}

HrlOptions lam_sup_options() { return {OrderMode::Fixed, true, false}; }
HrlOptions fixed_order_options() { return {OrderMode::Fixed, true, true}; }

}  // namespace iftx
