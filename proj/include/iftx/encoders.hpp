#pragma once

#include <array>
#include <span>
#include <string>

#include "iftx/diff.hpp"
#include "json.hpp"

namespace iftx {

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t embed = 50;
  std::size_t attention = 50;  // hidden width of both attention scorers
  std::size_t hidden = 50;     // recurrent hidden size; v_I and v_d have 2 × hidden
  std::size_t low_state = 64;
  std::size_t high_state = 64;

  std::size_t semantic() const { return 2 * hidden; }
  nlohmann::json to_json() const;
  static ModelDims from_json(const nlohmann::json& j);
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng);

// Two-stage attention over description tokens. Latent scores pick structural
// keywords; the active scorer sees each token, the latent summary and how much
// latent mass lies before and after the token, and its weights average the
// token embeddings that are then projected to v_I.
struct DescriptionEncoder {
  ParamId emb, w_lat, b_lat, u_lat, w_act, w_ctx, w_pos, b_act, u_act, w_out, b_out;

  static DescriptionEncoder create(ParamStore& store, const std::string& prefix, const ModelDims& dims, Rng& rng);
  static DescriptionEncoder bind(const ParamStore& store, const std::string& prefix);
};

struct DescriptionEncoding {
  Var v;               // v_I
  Var latent_weights;  // [T]
  Var active_weights;  // [T]
  bool empty_input = false;
};

// An empty id sequence is encoded as the single UNK token.
DescriptionEncoding encode_description(Tape& tape, const DescriptionEncoder& enc, std::span<const int> ids);

// Bidirectional GRU over answer tokens with a trained attention context c.
struct AnswerEncoder {
  ParamId w_f, u_f, b_f, w_b, u_b, b_b, c;

  static AnswerEncoder create(ParamStore& store, const std::string& prefix, const ModelDims& dims, Rng& rng);
  static AnswerEncoder bind(const ParamStore& store, const std::string& prefix);
};

struct AnswerEncoding {
  Var v;        // v_d
  Var weights;  // [T]; invalid when the answer is empty
};

// Uses `embedding` as the word table. Empty answers give the zero vector.
AnswerEncoding encode_answer(Tape& tape, const AnswerEncoder& enc, ParamId embedding, std::span<const int> ids,
                             const ModelDims& dims);

// v_i = (1 - w_d) v_I + w_d v_d
Var combine(Tape& tape, Var v_I, Var v_d, double w_d);

struct Combiner {
  ParamId w, b;
};

// W_ci over [s_1; ...; v_i; ...; s_4]. Columns reading the other subtasks'
// slots start at zero so an encoder trained without the cache keeps its
// behavior until training moves them.
Combiner create_low_combiner(ParamStore& store, const std::string& prefix, const ModelDims& dims, std::size_t slot,
                             Rng& rng);
Combiner create_high_combiner(ParamStore& store, const std::string& prefix, const ModelDims& dims, Rng& rng);
Combiner bind_combiner(const ParamStore& store, const std::string& prefix);

// Low-level state cache; empty tensors read as zero vectors.
using StateCache = std::array<Tensor, 4>;

// tanh(W_ci [cache_1; ...; v_i; ...; cache_4] + b). Cache slots enter as
// constants, so gradients stay within subtask i.
Var low_level_state(Tape& tape, const Combiner& comb, std::size_t slot, Var v_i, const StateCache& cache,
                    const ModelDims& dims);

// tanh(W_c [s_1; b_1; ...; s_4; b_4] + b).
Var high_level_state(Tape& tape, const Combiner& comb, const StateCache& cache, const std::array<bool, 4>& done,
                     const ModelDims& dims);

}  // namespace iftx
