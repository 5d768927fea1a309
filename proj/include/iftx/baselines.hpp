#pragma once

#include <string>
#include <string_view>

#include "iftx/rollout.hpp"

namespace iftx {

enum class AgentKind { Lam, LamRule, LamSup, HrlFixedOrder, Hrl };

// CLI/API names: lam, lam-rule, lam-sup, hrl-fixed, hrl.
std::string_view agent_name(AgentKind kind);
AgentKind parse_agent(std::string_view name);
bool is_interactive(AgentKind kind);

// Independent argmax per subtask from the description alone.
Recipe lam_predict(const LamNet& net, const Vocabulary& vocab, const Ontology& ontology, const Tokens& description);

// Non-interactive LAM as a controller; never asks.
class LamController final : public Controller {
 public:
  LamController(const LamNet& net, const Ontology& ontology, const Vocabulary& vocab);

  const ParamStore& store() const override { return net_->store; }
  void begin_episode(EpisodeContext&, ParseState&) const override {}
  SubtaskChoice choose_subtask(EpisodeContext& ctx, const ParseState& state) const override;
  ActionChoice choose_action(EpisodeContext& ctx, ParseState& state, SubtaskId g) const override;
  int forced_prediction(EpisodeContext& ctx, ParseState& state, SubtaskId g) const override;

 private:
  const LamNet* net_;
  const Ontology* ontology_;
  const Vocabulary* vocab_;
};

// Asks while the LAM's top class probability on the description text (with
// the subtask's answers appended) is below the threshold.
AgentAction lam_rule_step(const LamNet& net, const Vocabulary& vocab, const Ontology& ontology, SubtaskId g,
                          const ParseState& state, double threshold, bool allow_ask);

class LamRuleController final : public Controller {
 public:
  LamRuleController(const LamNet& net, const Ontology& ontology, const Vocabulary& vocab, double threshold = 0.85);

  const ParamStore& store() const override { return net_->store; }
  void begin_episode(EpisodeContext&, ParseState&) const override {}
  SubtaskChoice choose_subtask(EpisodeContext& ctx, const ParseState& state) const override;
  ActionChoice choose_action(EpisodeContext& ctx, ParseState& state, SubtaskId g) const override;
  int forced_prediction(EpisodeContext& ctx, ParseState& state, SubtaskId g) const override;

  double threshold() const { return threshold_; }

 private:
  const LamNet* net_;
  const Ontology* ontology_;
  const Vocabulary* vocab_;
  double threshold_;
};

// Text the LAM-rule agent re-encodes: description followed by the answers.
Tokens lam_rule_text(const ParseState& state, SubtaskId g);

// LAM-sup: supervised low-level policies, fixed order, no state cache.
HrlOptions lam_sup_options();
// HRL-fixedOrder: st1-st2-st3-st4 over the cached low-level policies.
HrlOptions fixed_order_options();

}  // namespace iftx
