#include "iftx/encoders.hpp"

#include <cmath>

#include "iftx/ontology.hpp"

namespace iftx {

nlohmann::json ModelDims::to_json() const {
  return {{"vocab", vocab},   {"embed", embed},         {"attention", attention},
          {"hidden", hidden}, {"low_state", low_state}, {"high_state", high_state}};
}

ModelDims ModelDims::from_json(const nlohmann::json& j) {
  ModelDims d;
  d.vocab = j.at("vocab").get<std::size_t>();
  d.embed = j.at("embed").get<std::size_t>();
  d.attention = j.at("attention").get<std::size_t>();
  d.hidden = j.at("hidden").get<std::size_t>();
  d.low_state = j.at("low_state").get<std::size_t>();
  d.high_state = j.at("high_state").get<std::size_t>();
  return d;
}

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (auto& v : t.values) v = rng.uniform(-a, a);
  return t;
}

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, double a, Rng& rng) {
  Tensor t({rows, cols});
  for (auto& v : t.values) v = rng.uniform(-a, a);
  return t;
}

Tensor zeros(std::size_t n) { return Tensor({n}, 0.0); }

}  // namespace

DescriptionEncoder DescriptionEncoder::create(ParamStore& s, const std::string& p, const ModelDims& d, Rng& rng) {
  if (d.vocab < 2) throw ValidationError("description encoder needs a vocabulary");
  const auto K = d.attention, E = d.embed;
  DescriptionEncoder e{};
  e.emb = s.add(p + "emb", uniform_matrix(d.vocab, E, 0.25, rng));
  e.w_lat = s.add(p + "w_lat", xavier(K, E, rng));
  e.b_lat = s.add(p + "b_lat", zeros(K));
  e.u_lat = s.add(p + "u_lat", xavier(1, K, rng));
  e.w_act = s.add(p + "w_act", xavier(K, E, rng));
  e.w_ctx = s.add(p + "w_ctx", xavier(K, E, rng));
  e.w_pos = s.add(p + "w_pos", xavier(K, 2, rng));
  e.b_act = s.add(p + "b_act", zeros(K));
  e.u_act = s.add(p + "u_act", xavier(1, K, rng));
  e.w_out = s.add(p + "w_out", xavier(d.semantic(), E, rng));
  e.b_out = s.add(p + "b_out", zeros(d.semantic()));
  return e;
}

DescriptionEncoder DescriptionEncoder::bind(const ParamStore& s, const std::string& p) {
  return {s.id(p + "emb"),   s.id(p + "w_lat"), s.id(p + "b_lat"), s.id(p + "u_lat"),
          s.id(p + "w_act"), s.id(p + "w_ctx"), s.id(p + "w_pos"), s.id(p + "b_act"),
          s.id(p + "u_act"), s.id(p + "w_out"), s.id(p + "b_out")};
}

DescriptionEncoding encode_description(Tape& tape, const DescriptionEncoder& enc, std::span<const int> ids) {
  static const int kUnkId[] = {Vocabulary::kUnk};
  DescriptionEncoding out;
  if (ids.empty()) {
    ids = kUnkId;
    out.empty_input = true;
  }
  const std::size_t T = ids.size();
  Var E = tape.embedding(tape.param(enc.emb), ids);

  Var h_lat = tape.tanh(tape.affine(tape.param(enc.w_lat), E, tape.param(enc.b_lat)));
  Var a = tape.softmax(tape.affine(tape.param(enc.u_lat), h_lat));
  Var l = tape.attention_sum(a, E);

  // Latent mass strictly before / after each position.
  Tensor before({T, T}, 0.0), after({T, T}, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < T; ++k) {
      if (k < t) before.at(t, k) = 1.0;
      if (k > t) after.at(t, k) = 1.0;
    }
  Var pb = tape.reshape(tape.affine(tape.constant(std::move(before)), a), {T, 1});
  Var pa = tape.reshape(tape.affine(tape.constant(std::move(after)), a), {T, 1});
  const Var pos_parts[] = {pb, pa};
  Var pos = tape.concat(pos_parts);

  Var pre = tape.affine(tape.param(enc.w_act), E, tape.param(enc.b_act));
  pre = tape.add(pre, tape.affine(tape.param(enc.w_pos), pos));
  pre = tape.add(pre, tape.affine(tape.param(enc.w_ctx), l));
  Var w = tape.softmax(tape.affine(tape.param(enc.u_act), tape.tanh(pre)));
  Var z = tape.attention_sum(w, E);

  out.v = tape.tanh(tape.affine(tape.param(enc.w_out), z, tape.param(enc.b_out)));
  out.latent_weights = a;
  out.active_weights = w;
  return out;
}

AnswerEncoder AnswerEncoder::create(ParamStore& s, const std::string& p, const ModelDims& d, Rng& rng) {
  const auto H = d.hidden, E = d.embed;
  AnswerEncoder e{};
  e.w_f = s.add(p + "w_f", xavier(3 * H, E, rng));
  e.u_f = s.add(p + "u_f", xavier(3 * H, H, rng));
  e.b_f = s.add(p + "b_f", zeros(3 * H));
  e.w_b = s.add(p + "w_b", xavier(3 * H, E, rng));
  e.u_b = s.add(p + "u_b", xavier(3 * H, H, rng));
  e.b_b = s.add(p + "b_b", zeros(3 * H));
  e.c = s.add(p + "c", xavier(1, 2 * H, rng));
  return e;
}

AnswerEncoder AnswerEncoder::bind(const ParamStore& s, const std::string& p) {
  return {s.id(p + "w_f"), s.id(p + "u_f"), s.id(p + "b_f"), s.id(p + "w_b"),
          s.id(p + "u_b"), s.id(p + "b_b"), s.id(p + "c")};
}

AnswerEncoding encode_answer(Tape& tape, const AnswerEncoder& enc, ParamId embedding, std::span<const int> ids,
                             const ModelDims& dims) {
  AnswerEncoding out;
  const std::size_t H = dims.hidden;
  if (ids.empty()) {
    out.v = tape.constant(Tensor({2 * H}, 0.0));
    return out;
  }
  const std::size_t T = ids.size();
  Var table = tape.param(embedding);
  std::vector<Var> x;
  x.reserve(T);
  for (std::size_t t = 0; t < T; ++t) x.push_back(tape.reshape(tape.embedding(table, ids.subspan(t, 1)), {dims.embed}));

  Var wf = tape.param(enc.w_f), uf = tape.param(enc.u_f), bf = tape.param(enc.b_f);
  Var wb = tape.param(enc.w_b), ub = tape.param(enc.u_b), bb = tape.param(enc.b_b);
  std::vector<Var> fwd(T), bwd(T);
  Var h = tape.constant(Tensor({H}, 0.0));
  for (std::size_t t = 0; t < T; ++t) fwd[t] = h = tape.gru_step(x[t], h, wf, uf, bf);
  h = tape.constant(Tensor({H}, 0.0));
  for (std::size_t t = T; t-- > 0;) bwd[t] = h = tape.gru_step(x[t], h, wb, ub, bb);

  std::vector<Var> rows;
  rows.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Var pair[] = {fwd[t], bwd[t]};
    rows.push_back(tape.concat(pair));
  }
  Var R = tape.stack(rows);
  out.weights = tape.softmax(tape.affine(tape.param(enc.c), R));
  out.v = tape.attention_sum(out.weights, R);
  return out;
}

Var combine(Tape& tape, Var v_I, Var v_d, double w_d) {
  if (tape.value(v_I).shape != tape.value(v_d).shape)
    throw DimensionError("combine: v_I " + shape_string(tape.value(v_I).shape) + " vs v_d " +
                         shape_string(tape.value(v_d).shape));
  if (w_d < 0.0 || w_d > 1.0) throw ValidationError("combine: w_d must lie in [0, 1]");
  return tape.add(tape.scale(v_I, 1.0 - w_d), tape.scale(v_d, w_d));
}

Combiner create_low_combiner(ParamStore& s, const std::string& p, const ModelDims& d, std::size_t slot, Rng& rng) {
  const std::size_t S = d.low_state, D = d.semantic();
  Tensor w = xavier(S, 3 * S + D, rng);
  // Column layout follows the slot order; only the v_i block is random.
  std::size_t off = 0;
  for (std::size_t j = 0; j < 4; ++j) {
    const std::size_t width = j == slot ? D : S;
    if (j != slot)
      for (std::size_t r = 0; r < S; ++r)
        for (std::size_t c = 0; c < width; ++c) w.at(r, off + c) = 0.0;
    off += width;
  }
  return {s.add(p + "w", std::move(w)), s.add(p + "b", zeros(S))};
}

Combiner create_high_combiner(ParamStore& s, const std::string& p, const ModelDims& d, Rng& rng) {
  return {s.add(p + "w", xavier(d.high_state, 4 * (d.low_state + 1), rng)), s.add(p + "b", zeros(d.high_state))};
}

Combiner bind_combiner(const ParamStore& s, const std::string& p) { return {s.id(p + "w"), s.id(p + "b")}; }

Var low_level_state(Tape& tape, const Combiner& comb, std::size_t slot, Var v_i, const StateCache& cache,
                    const ModelDims& dims) {
  if (slot >= 4) throw DimensionError("low_level_state: slot out of range");
  std::vector<Var> parts;
  for (std::size_t j = 0; j < 4; ++j) {
    if (j == slot) {
      parts.push_back(v_i);
    } else if (cache[j].size() == 0) {
      parts.push_back(tape.constant(Tensor({dims.low_state}, 0.0)));
    } else {
      if (cache[j].size() != dims.low_state) throw DimensionError("low_level_state: cache slot has wrong size");
      parts.push_back(tape.constant(cache[j]));
    }
  }
  return tape.tanh(tape.affine(tape.param(comb.w), tape.concat(parts), tape.param(comb.b)));
}

Var high_level_state(Tape& tape, const Combiner& comb, const StateCache& cache, const std::array<bool, 4>& done,
                     const ModelDims& dims) {
  const std::size_t S = dims.low_state;
  Tensor in({4 * (S + 1)}, 0.0);
  for (std::size_t j = 0; j < 4; ++j) {
    if (cache[j].size() != 0) {
      if (cache[j].size() != S) throw DimensionError("high_level_state: cache slot has wrong size");
      std::copy(cache[j].values.begin(), cache[j].values.end(),
                in.values.begin() + static_cast<std::ptrdiff_t>(j * (S + 1)));
    }
    in[j * (S + 1) + S] = done[j] ? 1.0 : 0.0;
  }
  return tape.tanh(tape.affine(tape.param(comb.w), tape.constant(std::move(in)), tape.param(comb.b)));
}

}  // namespace iftx
