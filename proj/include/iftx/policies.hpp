#pragma once

#include <array>
#include <span>
#include <vector>

#include "iftx/encoders.hpp"
#include "iftx/mdp.hpp"
#include "iftx/ontology.hpp"

namespace iftx {

// Low-level network for one subtask: its own description and answer
// encoders, W_ci, and the output layer over V_g plus AskUser.
struct SubtaskNet {
  DescriptionEncoder desc;
  AnswerEncoder ans;
  Combiner comb;
  ParamId w_out, b_out;
  std::size_t num_values = 0;  // |V_g|; the output has num_values + 1 entries
};

struct HighNet {
  Combiner comb;  // W_c
  ParamId w_out, b_out;
};

std::array<std::size_t, 4> value_counts(const Ontology& ontology);

// Parameter names: "st<k>/desc/*", "st<k>/ans/*", "st<k>/comb/*",
// "st<k>/out/*" for k = 1..4 and "high/comb/*", "high/out/*".
class PolicyNet {
 public:
  static PolicyNet create(const ModelDims& dims, const std::array<std::size_t, 4>& counts, std::uint64_t seed);
  static PolicyNet bind(ParamStore store, const ModelDims& dims);

  ParamStore store;
  ModelDims dims;
  std::array<SubtaskNet, 4> low;
  HighNet high;
  std::array<double, 4> w_d = {0.5, 0.5, 0.5, 0.5};

 private:
  void bind_ids();
};

// Non-interactive classifiers: one description encoder plus a softmax head
// over V_g per subtask. Names: "st<k>/desc/*", "st<k>/head/*".
class LamNet {
 public:
  static LamNet create(const ModelDims& dims, const std::array<std::size_t, 4>& counts, std::uint64_t seed);
  static LamNet bind(ParamStore store, const ModelDims& dims);

  ParamStore store;
  ModelDims dims;
  std::array<DescriptionEncoder, 4> enc;
  std::array<ParamId, 4> w_head{};
  std::array<ParamId, 4> b_head{};

 private:
  void bind_ids();
};

std::string subtask_prefix(SubtaskId s);

// Copies the trained LAM description encoders into the policy's encoders.
void copy_description_encoders(const LamNet& from, PolicyNet& to);

// Index layout: 0..|V_g|-1 are component values in ontology order, the last
// index is AskUser.
AgentAction action_at(const Ontology& ontology, SubtaskId subtask, std::size_t index);
std::size_t index_of_action(const Ontology& ontology, SubtaskId subtask, const AgentAction& action);

struct Distribution {
  Var logits;
  std::vector<double> probs;
  std::vector<bool> mask;  // true = blocked
};

// Completed subtasks are masked when use_mask is set.
Distribution high_distribution(Tape& tape, const PolicyNet& net, const ParseState& state, bool use_mask);

struct LowOutput {
  Distribution dist;
  Var state;  // s^l_i
};

// Recomputes v_d, v_i and s^l_i from the current answers for subtask g.
LowOutput low_distribution(Tape& tape, const PolicyNet& net, SubtaskId g, Var v_I, const Vocabulary& vocab,
                           const ParseState& state, bool block_ask);

// Distribution over V_g only.
Distribution lam_distribution(Tape& tape, const LamNet& net, SubtaskId g, std::span<const int> ids);

Var log_prob(Tape& tape, const Distribution& dist, std::size_t index);

// Inverse-CDF draw. Entries with probability 0 are never returned.
std::size_t sample_index(const std::vector<double>& probs, Rng& rng);
// Argmax with lowest-index tie-break.
std::size_t greedy_index(const std::vector<double>& probs);

}  // namespace iftx
