#include "iftx/policies.hpp"

namespace iftx {

std::array<std::size_t, 4> value_counts(const Ontology& ontology) {
  std::array<std::size_t, 4> c{};
  for (std::size_t i = 0; i < 4; ++i) c[i] = ontology.values(i).size();
  return c;
}

std::string subtask_prefix(SubtaskId s) { return "st" + std::to_string(index_of(s) + 1) + "/"; }

PolicyNet PolicyNet::create(const ModelDims& dims, const std::array<std::size_t, 4>& counts, std::uint64_t seed) {
  PolicyNet net;
  net.dims = dims;
  Rng rng(seed);
  for (std::size_t i = 0; i < 4; ++i) {
    if (counts[i] == 0) throw ValidationError("subtask " + std::to_string(i + 1) + " has no values");
    const auto p = subtask_prefix(subtask_at(i));
    DescriptionEncoder::create(net.store, p + "desc/", dims, rng);
    AnswerEncoder::create(net.store, p + "ans/", dims, rng);
    create_low_combiner(net.store, p + "comb/", dims, i, rng);
    net.store.add(p + "out/w", xavier(counts[i] + 1, dims.low_state, rng));
    net.store.add(p + "out/b", Tensor({counts[i] + 1}, 0.0));
  }
  create_high_combiner(net.store, "high/comb/", dims, rng);
  net.store.add("high/out/w", xavier(4, dims.high_state, rng));
  net.store.add("high/out/b", Tensor({4}, 0.0));
  net.bind_ids();
  return net;
}

PolicyNet PolicyNet::bind(ParamStore store, const ModelDims& dims) {
  PolicyNet net;
  net.store = std::move(store);
  net.dims = dims;
  net.bind_ids();
  return net;
}

void PolicyNet::bind_ids() {
  for (std::size_t i = 0; i < 4; ++i) {
    const auto p = subtask_prefix(subtask_at(i));
    auto& l = low[i];
    l.desc = DescriptionEncoder::bind(store, p + "desc/");
    l.ans = AnswerEncoder::bind(store, p + "ans/");
    l.comb = bind_combiner(store, p + "comb/");
    l.w_out = store.id(p + "out/w");
    l.b_out = store.id(p + "out/b");
    const auto& w = store.value(l.w_out);
    if (w.rank() != 2 || w.shape[0] < 2 || w.shape[1] != dims.low_state)
      throw DimensionError("policy output layer " + p + "out/w has shape " + shape_string(w.shape));
    l.num_values = w.shape[0] - 1;
    if (store.value(l.desc.emb).shape != std::vector<std::size_t>{dims.vocab, dims.embed})
      throw DimensionError("policy embedding table does not match the model dimensions");
  }
  high.comb = bind_combiner(store, "high/comb/");
  high.w_out = store.id("high/out/w");
  high.b_out = store.id("high/out/b");
}

LamNet LamNet::create(const ModelDims& dims, const std::array<std::size_t, 4>& counts, std::uint64_t seed) {
  LamNet net;
  net.dims = dims;
  Rng rng(seed);
  for (std::size_t i = 0; i < 4; ++i) {
    if (counts[i] == 0) throw ValidationError("subtask " + std::to_string(i + 1) + " has no values");
    const auto p = subtask_prefix(subtask_at(i));
    DescriptionEncoder::create(net.store, p + "desc/", dims, rng);
    net.store.add(p + "head/w", xavier(counts[i], dims.semantic(), rng));
    net.store.add(p + "head/b", Tensor({counts[i]}, 0.0));
  }
  net.bind_ids();
  return net;
}

LamNet LamNet::bind(ParamStore store, const ModelDims& dims) {
  LamNet net;
  net.store = std::move(store);
  net.dims = dims;
  net.bind_ids();
  return net;
}

void LamNet::bind_ids() {
  for (std::size_t i = 0; i < 4; ++i) {
    const auto p = subtask_prefix(subtask_at(i));
    enc[i] = DescriptionEncoder::bind(store, p + "desc/");
    w_head[i] = store.id(p + "head/w");
    b_head[i] = store.id(p + "head/b");
    if (store.value(enc[i].emb).shape != std::vector<std::size_t>{dims.vocab, dims.embed})
      throw DimensionError("LAM embedding table does not match the model dimensions");
  }
}

void copy_description_encoders(const LamNet& from, PolicyNet& to) {
  if (!(from.dims == to.dims)) throw DimensionError("copy_description_encoders: model dimensions differ");
  for (std::size_t i = 0; i < 4; ++i) {
    const auto p = subtask_prefix(subtask_at(i)) + "desc/";
    for (ParamId k = 0; k < from.store.size(); ++k) {
      const auto& name = from.store.name(k);
      if (name.rfind(p, 0) != 0) continue;
      auto& dst = to.store.value(to.store.id(name));
      if (dst.shape != from.store.value(k).shape) throw DimensionError("copy_description_encoders: " + name);
      dst = from.store.value(k);
    }
  }
}

AgentAction action_at(const Ontology& ontology, SubtaskId subtask, std::size_t index) {
  const auto& vals = ontology.values(index_of(subtask));
  if (index == vals.size()) return AgentAction::ask_user();
  if (index > vals.size()) throw ContractViolation("action index out of range");
  return AgentAction::predict(vals[index]);
}

std::size_t index_of_action(const Ontology& ontology, SubtaskId subtask, const AgentAction& action) {
  const auto& vals = ontology.values(index_of(subtask));
  if (action.ask) return vals.size();
  int k = ontology.value_index(index_of(subtask), action.value);
  if (k < 0) throw ContractViolation("value not in the subtask's value set");
  return static_cast<std::size_t>(k);
}

namespace {

Distribution finish(Tape& tape, Var logits, std::vector<bool> mask) {
  Distribution d;
  d.logits = logits;
  d.probs = tape.value(tape.softmax(logits, mask)).values;
  d.mask = std::move(mask);
  return d;
}

}  // namespace

Distribution high_distribution(Tape& tape, const PolicyNet& net, const ParseState& state, bool use_mask) {
  Var sh = high_level_state(tape, net.high.comb, state.cache, state.done, net.dims);
  Var logits = tape.affine(tape.param(net.high.w_out), sh, tape.param(net.high.b_out));
  std::vector<bool> mask(4, false);
  if (use_mask) {
    for (std::size_t j = 0; j < 4; ++j) mask[j] = state.done[j];
    if (state.done[0] && state.done[1] && state.done[2] && state.done[3])
      throw ContractViolation("high_distribution: every subtask is complete");
  }
  return finish(tape, logits, std::move(mask));
}

LowOutput low_distribution(Tape& tape, const PolicyNet& net, SubtaskId g, Var v_I, const Vocabulary& vocab,
                           const ParseState& state, bool block_ask) {
  const auto i = index_of(g);
  const auto& sn = net.low[i];
  const auto ids = vocab.encode(state.answers[i]);
  Var v_d = encode_answer(tape, sn.ans, sn.desc.emb, ids, net.dims).v;
  Var v_i = combine(tape, v_I, v_d, net.w_d[i]);
  LowOutput out;
  out.state = low_level_state(tape, sn.comb, i, v_i, state.cache, net.dims);
  Var logits = tape.affine(tape.param(sn.w_out), out.state, tape.param(sn.b_out));
  std::vector<bool> mask(sn.num_values + 1, false);
  mask.back() = block_ask;
  out.dist = finish(tape, logits, std::move(mask));
  return out;
}

Distribution lam_distribution(Tape& tape, const LamNet& net, SubtaskId g, std::span<const int> ids) {
  const auto i = index_of(g);
  Var v = encode_description(tape, net.enc[i], ids).v;
  Var logits = tape.affine(tape.param(net.w_head[i]), v, tape.param(net.b_head[i]));
  return finish(tape, logits, {});
}

Var log_prob(Tape& tape, const Distribution& dist, std::size_t index) {
  return tape.log_softmax_pick(dist.logits, index, dist.mask);
}

std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
  if (probs.empty()) throw ContractViolation("sample_index: empty distribution");
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = probs.size();
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0.0) continue;
    acc += probs[k];
    last = k;
    if (u < acc) return k;
  }
  if (last == probs.size()) throw ContractViolation("sample_index: distribution has no mass");
  return last;
}

std::size_t greedy_index(const std::vector<double>& probs) {
  if (probs.empty()) throw ContractViolation("greedy_index: empty distribution");
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k)
    if (probs[k] > probs[best]) best = k;
  return best;
}

}  // namespace iftx
