#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "iftx/common.hpp"

namespace iftx {

// Dense row-major tensor of doubles. Only rank 1 and rank 2 are used by the
// primitives, but the container itself accepts any rank.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  bool all_finite() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

using ParamId = std::size_t;

class ParamStore;

// Gradient accumulators aligned with a ParamStore's parameters.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& store);

  // Mutable access marks the entry as touched; zero() only clears touched
  // entries, which keeps per-batch resets cheap for sparse updates.
  Tensor& operator[](ParamId id) {
    touched_[id] = 1;
    return grads_[id];
  }
  const Tensor& operator[](ParamId id) const { return grads_[id]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void add(const Gradients& other);
  void scale(double s);
  double global_norm() const;
  bool all_finite() const;
  bool is_zero() const;

 private:
  std::vector<Tensor> grads_;
  std::vector<char> touched_;
};

class ParamStore {
 public:
  ParamId add(const std::string& name, Tensor value);
  ParamId id(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor& value(ParamId id) { return values_[id]; }
  const Tensor& value(ParamId id) const { return values_[id]; }
  const std::string& name(ParamId id) const { return names_[id]; }
  std::size_t size() const { return values_.size(); }
  std::size_t num_scalars() const;
  bool all_finite() const;

  Gradients& grads() { return grads_; }
  const Gradients& grads() const { return grads_; }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, ParamId> index_;
  Gradients grads_;
};

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
// creation order is a valid reverse topological order. Parameter leaves read
// directly from the store and backward writes their gradients into a caller
// supplied sink, which lets parallel workers keep private accumulators.
class Tape {
 public:
  explicit Tape(const ParamStore& store);

  Var param(ParamId id);
  Var constant(Tensor value);

  // W x (+ b). x is a vector [n] or a row matrix [T, n]; rows are mapped
  // independently to give [T, m].
  Var affine(Var W, Var x);
  Var affine(Var W, Var x, Var b);
  Var tanh(Var x);
  // Masked entries get probability exactly 0 (mask[i] == true means blocked).
  // Accepts [n] or [n, 1]; the result is [n].
  Var softmax(Var x, const std::vector<bool>& mask = {});
  // log softmax(x)[index] as a scalar, with the same masking rule.
  Var log_softmax_pick(Var x, std::size_t index, const std::vector<bool>& mask = {});
  Var pick(Var x, std::size_t index);
  // Same shapes elementwise, or a vector b broadcast over the rows of a.
  Var add(Var a, Var b);
  Var scale(Var x, double s);
  Var sum(Var x);
  // Concatenation along the last axis (vectors, or matrices with equal rows).
  Var concat(std::span<const Var> parts);
  // Equal-length vectors become the rows of a matrix.
  Var stack(std::span<const Var> rows);
  Var reshape(Var x, std::vector<std::size_t> shape);
  // Rows of table [V, E] selected by ids, giving [T, E].
  Var embedding(Var table, std::span<const int> ids);
  // One gated-recurrent step with stacked update/reset/candidate blocks:
  // W [3H, n], U [3H, H], b [3H].
  Var gru_step(Var x, Var h, Var W, Var U, Var b);
  // Σ_t weights[t] · rows[t]; weights [T] (or [T,1]), rows [T, n].
  Var attention_sum(Var weights, Var rows);

  const Tensor& value(Var v) const;
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Accumulates d loss / d param into sink. One backward pass per tape.
  void backward(Var loss, Gradients& sink);

 private:
  enum class Op {
    Param, Constant, Affine, Tanh, Softmax, LogSoftmaxPick, Pick, Add, Scale, Sum, Concat, Stack, Reshape,
    Embedding, GruStep, AttentionSum
  };
  struct Node {
    Op op;
    Tensor value;
    std::vector<int> in;
    std::vector<int> ints;
    std::vector<double> aux;
    std::vector<bool> mask;
    double scalar = 0.0;
    ParamId param = 0;
  };

  Var push(Node node);
  const Node& node(Var v, const char* op) const;
  const Tensor& val(int id) const;
  double* grad_of(int id, std::vector<std::vector<double>>& grads, Gradients& sink) const;

  const ParamStore* store_;
  std::vector<Node> nodes_;
  std::unordered_map<ParamId, int> param_nodes_;
  bool consumed_ = false;
};

// Σ weights[k] · xs[k], built from primitives.
Var weighted_sum(Tape& tape, std::span<const Var> xs, std::span<const double> weights);

// param += lr · grad, then zeroes the accumulators. Throws NumericError and
// leaves parameters untouched if any gradient entry is non-finite.
void sgd_ascent_update(ParamStore& store, double learning_rate);

// Rescales so the global L2 norm is at most max_norm; returns the pre-clip norm.
double clip_global_norm(Gradients& grads, double max_norm);

}  // namespace iftx
