#include "iftx/diff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Core>

namespace iftx {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), values(shape_size(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (shape_size(shape) != values.size())
    throw DimensionError("tensor: shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
}

Tensor Tensor::vector(std::vector<double> v) {
  auto n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

bool Tensor::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

Gradients::Gradients(const ParamStore& store) {
  grads_.reserve(store.size());
  for (ParamId i = 0; i < store.size(); ++i) grads_.emplace_back(store.value(i).shape, 0.0);
  touched_.assign(grads_.size(), 0);
}

void Gradients::zero() {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (!touched_[i]) continue;
    std::fill(grads_[i].values.begin(), grads_[i].values.end(), 0.0);
    touched_[i] = 0;
  }
}

void Gradients::add(const Gradients& other) {
  if (other.grads_.size() != grads_.size()) throw DimensionError("gradients: merging mismatched accumulators");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (!other.touched_[i]) continue;
    touched_[i] = 1;
    auto& a = grads_[i].values;
    const auto& b = other.grads_[i].values;
    if (a.size() != b.size()) throw DimensionError("gradients: shape mismatch for parameter " + std::to_string(i));
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  }
}

void Gradients::scale(double s) {
  for (auto& g : grads_)
    for (auto& x : g.values) x *= s;
}

double Gradients::global_norm() const {
  double ss = 0.0;
  for (const auto& g : grads_)
    for (double x : g.values) ss += x * x;
  return std::sqrt(ss);
}

bool Gradients::all_finite() const {
  return std::all_of(grads_.begin(), grads_.end(), [](const Tensor& t) { return t.all_finite(); });
}

bool Gradients::is_zero() const {
  for (const auto& g : grads_)
    for (double x : g.values)
      if (x != 0.0) return false;
  return true;
}

ParamId ParamStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw ValidationError("duplicate parameter name " + name);
  ParamId id = values_.size();
  index_[name] = id;
  names_.push_back(name);
  values_.push_back(std::move(value));
  grads_ = Gradients(*this);
  return id;
}

ParamId ParamStore::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFoundError("unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

bool ParamStore::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](const Tensor& t) { return t.all_finite(); });
}

// ---------------------------------------------------------------------------

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool is_vector_like(const Tensor& t) { return t.rank() == 1 || (t.rank() == 2 && t.shape[1] == 1); }

std::vector<bool> check_mask(const char* op, const std::vector<bool>& mask, std::size_t n) {
  if (mask.empty()) return std::vector<bool>(n, false);
  if (mask.size() != n)
    throw DimensionError(std::string(op) + ": mask of size " + std::to_string(mask.size()) + " for " +
                         std::to_string(n) + " logits");
  if (std::all_of(mask.begin(), mask.end(), [](bool b) { return b; }))
    throw ContractViolation(std::string(op) + ": every entry is masked");
  return mask;
}

}  // namespace

Tape::Tape(const ParamStore& store) : store_(&store) { nodes_.reserve(256); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v, const char* op) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw StateError(std::string(op) + ": variable is not on this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::val(int id) const {
  const auto& n = nodes_[static_cast<std::size_t>(id)];
  return n.op == Op::Param ? store_->value(n.param) : n.value;
}

const Tensor& Tape::value(Var v) const {
  node(v, "value");
  return val(v.id);
}

double Tape::scalar(Var v) const {
  const auto& t = value(v);
  if (t.size() != 1) throw DimensionError("scalar: value has shape " + shape_string(t.shape));
  return t[0];
}

Var Tape::param(ParamId id) {
  if (id >= store_->size()) throw NotFoundError("param: unknown parameter id " + std::to_string(id));
  auto it = param_nodes_.find(id);
  if (it != param_nodes_.end()) return Var{it->second};
  Node n{Op::Param, {}, {}, {}, {}, {}, 0.0, id};
  Var v = push(std::move(n));
  param_nodes_[id] = v.id;
  return v;
}

Var Tape::constant(Tensor value) {
  Node n{Op::Constant, std::move(value), {}, {}, {}, {}, 0.0, 0};
  return push(std::move(n));
}

Var Tape::affine(Var W, Var x) { return affine(W, x, Var{}); }

Var Tape::affine(Var W, Var x, Var b) {
  node(W, "affine");
  node(x, "affine");
  const auto& w = val(W.id);
  const auto& xv = val(x.id);
  if (w.rank() != 2) throw DimensionError("affine: weight must be a matrix, got " + shape_string(w.shape));
  const std::size_t m = w.shape[0], n = w.shape[1];
  if (xv.cols() != n || xv.rank() > 2 || xv.rank() == 0)
    throw DimensionError("affine: weight " + shape_string(w.shape) + " cannot multiply " + shape_string(xv.shape));
  const double* bias = nullptr;
  if (b.valid()) {
    node(b, "affine");
    const auto& bv = val(b.id);
    if (bv.rank() != 1 || bv.size() != m)
      throw DimensionError("affine: bias " + shape_string(bv.shape) + " for output size " + std::to_string(m));
    bias = bv.values.data();
  }
  const std::size_t T = xv.rank() == 2 ? xv.shape[0] : 1;
  Tensor out(xv.rank() == 2 ? std::vector<std::size_t>{T, m} : std::vector<std::size_t>{m});
  CMatMap wm(w.values.data(), m, n);
  CMatMap xm(xv.values.data(), T, n);
  MatMap om(out.values.data(), T, m);
  om.noalias() = xm * wm.transpose();
  if (bias) om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias, m);
  Node nd{Op::Affine, std::move(out), {W.id, x.id, b.valid() ? b.id : -1}, {}, {}, {}, 0.0, 0};
  return push(std::move(nd));
}

Var Tape::tanh(Var x) {
  node(x, "tanh");
  Tensor out = val(x.id);
  for (auto& v : out.values) v = std::tanh(v);
  return push(Node{Op::Tanh, std::move(out), {x.id}, {}, {}, {}, 0.0, 0});
}

Var Tape::softmax(Var x, const std::vector<bool>& mask) {
  node(x, "softmax");
  const auto& xv = val(x.id);
  if (!is_vector_like(xv)) throw DimensionError("softmax: input must be a vector, got " + shape_string(xv.shape));
  const std::size_t n = xv.size();
  auto mk = check_mask("softmax", mask, n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (!mk[i]) mx = std::max(mx, xv[i]);
  Tensor out({n}, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (!mk[i]) z += (out[i] = std::exp(xv[i] - mx));
  if (!std::isfinite(z)) throw NumericError("softmax: non-finite logits");
  for (auto& v : out.values) v /= z;
  return push(Node{Op::Softmax, std::move(out), {x.id}, {}, {}, std::move(mk), 0.0, 0});
}

Var Tape::log_softmax_pick(Var x, std::size_t index, const std::vector<bool>& mask) {
  node(x, "log_softmax_pick");
  const auto& xv = val(x.id);
  if (!is_vector_like(xv))
    throw DimensionError("log_softmax_pick: input must be a vector, got " + shape_string(xv.shape));
  const std::size_t n = xv.size();
  if (index >= n) throw DimensionError("log_softmax_pick: index " + std::to_string(index) + " out of range");
  auto mk = check_mask("log_softmax_pick", mask, n);
  if (mk[index]) throw ContractViolation("log_softmax_pick: picked entry is masked");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (!mk[i]) mx = std::max(mx, xv[i]);
  std::vector<double> p(n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (!mk[i]) z += (p[i] = std::exp(xv[i] - mx));
  if (!std::isfinite(z)) throw NumericError("log_softmax_pick: non-finite logits");
  for (auto& v : p) v /= z;
  double lp = xv[index] - mx - std::log(z);
  return push(Node{Op::LogSoftmaxPick, Tensor({1}, lp), {x.id}, {static_cast<int>(index)}, std::move(p),
                   std::move(mk), 0.0, 0});
}

Var Tape::pick(Var x, std::size_t index) {
  node(x, "pick");
  const auto& xv = val(x.id);
  if (index >= xv.size()) throw DimensionError("pick: index " + std::to_string(index) + " out of range");
  return push(Node{Op::Pick, Tensor({1}, xv[index]), {x.id}, {static_cast<int>(index)}, {}, {}, 0.0, 0});
}

Var Tape::add(Var a, Var b) {
  node(a, "add");
  node(b, "add");
  const auto& av = val(a.id);
  const auto& bv = val(b.id);
  Tensor out = av;
  if (av.shape == bv.shape) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return push(Node{Op::Add, std::move(out), {a.id, b.id}, {0}, {}, {}, 0.0, 0});
  }
  if (av.rank() == 2 && bv.rank() == 1 && bv.size() == av.shape[1]) {
    const std::size_t c = av.shape[1];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % c];
    return push(Node{Op::Add, std::move(out), {a.id, b.id}, {1}, {}, {}, 0.0, 0});
  }
  throw DimensionError("add: shapes " + shape_string(av.shape) + " and " + shape_string(bv.shape) + " do not match");
}

Var Tape::scale(Var x, double s) {
  node(x, "scale");
  Tensor out = val(x.id);
  for (auto& v : out.values) v *= s;
  return push(Node{Op::Scale, std::move(out), {x.id}, {}, {}, {}, s, 0});
}

Var Tape::sum(Var x) {
  node(x, "sum");
  double s = 0.0;
  for (double v : val(x.id).values) s += v;
  return push(Node{Op::Sum, Tensor({1}, s), {x.id}, {}, {}, {}, 0.0, 0});
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  for (auto p : parts) node(p, "concat");
  const auto& first = val(parts[0].id);
  const std::size_t rank = first.rank();
  if (rank != 1 && rank != 2) throw DimensionError("concat: inputs must be vectors or matrices");
  const std::size_t rows = first.rows();
  std::vector<int> in, widths;
  std::size_t total = 0;
  for (auto p : parts) {
    const auto& t = val(p.id);
    if (t.rank() != rank || t.rows() != rows)
      throw DimensionError("concat: incompatible shapes " + shape_string(first.shape) + " and " +
                           shape_string(t.shape));
    in.push_back(p.id);
    widths.push_back(static_cast<int>(t.cols()));
    total += t.cols();
  }
  Tensor out(rank == 1 ? std::vector<std::size_t>{total} : std::vector<std::size_t>{rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& t = val(parts[k].id);
    const std::size_t w = t.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(t.values.data() + r * w, w, out.values.data() + r * total + off);
    off += w;
  }
  return push(Node{Op::Concat, std::move(out), std::move(in), std::move(widths), {}, {}, 0.0, 0});
}

Var Tape::stack(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack: no inputs");
  std::vector<int> in;
  const std::size_t n = value(rows[0]).size();
  Tensor out({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& t = value(rows[r]);
    if (t.rank() != 1 || t.size() != n) throw DimensionError("stack: rows must be vectors of equal length");
    std::copy(t.values.begin(), t.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(r * n));
    in.push_back(rows[r].id);
  }
  return push(Node{Op::Stack, std::move(out), std::move(in), {}, {}, {}, 0.0, 0});
}

Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
  node(x, "reshape");
  const auto& xv = val(x.id);
  if (shape_size(shape) != xv.size())
    throw DimensionError("reshape: " + shape_string(xv.shape) + " to " + shape_string(shape));
  return push(Node{Op::Reshape, Tensor(std::move(shape), xv.values), {x.id}, {}, {}, {}, 0.0, 0});
}

Var Tape::embedding(Var table, std::span<const int> ids) {
  node(table, "embedding");
  const auto& tv = val(table.id);
  if (tv.rank() != 2) throw DimensionError("embedding: table must be a matrix");
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  const std::size_t V = tv.shape[0], E = tv.shape[1];
  Tensor out({ids.size(), E});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= V)
      throw DimensionError("embedding: id " + std::to_string(ids[t]) + " outside table of " + std::to_string(V));
    std::copy_n(tv.values.data() + static_cast<std::size_t>(ids[t]) * E, E, out.values.data() + t * E);
  }
  return push(Node{Op::Embedding, std::move(out), {table.id}, std::vector<int>(ids.begin(), ids.end()), {}, {}, 0.0,
                   0});
}

Var Tape::gru_step(Var x, Var h, Var W, Var U, Var b) {
  for (auto v : {x, h, W, U, b}) node(v, "gru_step");
  const auto& xv = val(x.id);
  const auto& hv = val(h.id);
  const auto& w = val(W.id);
  const auto& u = val(U.id);
  const auto& bv = val(b.id);
  const std::size_t H = hv.size(), n = xv.size();
  if (xv.rank() != 1 || hv.rank() != 1 || w.rank() != 2 || u.rank() != 2 || w.shape[0] != 3 * H ||
      w.shape[1] != n || u.shape[0] != 3 * H || u.shape[1] != H || bv.size() != 3 * H)
    throw DimensionError("gru_step: x " + shape_string(xv.shape) + ", h " + shape_string(hv.shape) + ", W " +
                         shape_string(w.shape) + ", U " + shape_string(u.shape) + ", b " + shape_string(bv.shape));
  Eigen::VectorXd wx = CMatMap(w.values.data(), 3 * H, n) * CVecMap(xv.values.data(), n) +
                       CVecMap(bv.values.data(), 3 * H);
  Eigen::VectorXd uh = CMatMap(u.values.data(), 3 * H, H) * CVecMap(hv.values.data(), H);
  // aux holds z, r, n, (U_n h) for the backward pass.
  std::vector<double> aux(4 * H);
  Tensor out({H});
  for (std::size_t k = 0; k < H; ++k) {
    double z = sigmoid(wx[k] + uh[k]);
    double r = sigmoid(wx[H + k] + uh[H + k]);
    double c = std::tanh(wx[2 * H + k] + r * uh[2 * H + k]);
    aux[k] = z;
    aux[H + k] = r;
    aux[2 * H + k] = c;
    aux[3 * H + k] = uh[2 * H + k];
    out[k] = (1.0 - z) * c + z * hv[k];
  }
  return push(Node{Op::GruStep, std::move(out), {x.id, h.id, W.id, U.id, b.id}, {}, std::move(aux), {}, 0.0, 0});
}

Var Tape::attention_sum(Var weights, Var rows) {
  node(weights, "attention_sum");
  node(rows, "attention_sum");
  const auto& wv = val(weights.id);
  const auto& rv = val(rows.id);
  if (!is_vector_like(wv) || rv.rank() != 2 || rv.shape[0] != wv.size())
    throw DimensionError("attention_sum: weights " + shape_string(wv.shape) + " over rows " + shape_string(rv.shape));
  const std::size_t T = rv.shape[0], n = rv.shape[1];
  Tensor out({n}, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < n; ++j) out[j] += wv[t] * rv.values[t * n + j];
  return push(Node{Op::AttentionSum, std::move(out), {weights.id, rows.id}, {}, {}, {}, 0.0, 0});
}

double* Tape::grad_of(int id, std::vector<std::vector<double>>& grads, Gradients& sink) const {
  if (id < 0) return nullptr;
  const auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.op == Op::Param) return sink[n.param].values.data();
  auto& g = grads[static_cast<std::size_t>(id)];
  if (g.empty()) g.assign(n.value.size(), 0.0);
  return g.data();
}

void Tape::backward(Var loss, Gradients& sink) {
  if (nodes_.empty()) throw StateError("backward: nothing has been recorded on the tape");
  if (consumed_) throw StateError("backward: tape already differentiated");
  const auto& ln = node(loss, "backward");
  if (val(loss.id).size() != 1)
    throw DimensionError("backward: loss must be scalar, got " + shape_string(ln.value.shape));
  if (sink.size() != store_->size()) throw DimensionError("backward: gradient sink does not match the parameter store");
  consumed_ = true;

  std::vector<std::vector<double>> grads(nodes_.size());
  if (ln.op == Op::Param) {
    sink[ln.param][0] += 1.0;
    return;
  }
  grads[static_cast<std::size_t>(loss.id)].assign(1, 1.0);

  for (int id = loss.id; id >= 0; --id) {
    const auto& nd = nodes_[static_cast<std::size_t>(id)];
    if (nd.op == Op::Param || nd.op == Op::Constant) continue;
    const auto& gvec = grads[static_cast<std::size_t>(id)];
    if (gvec.empty()) continue;  // not reachable from the loss
    const double* g = gvec.data();
    const auto& out = nd.value;

    switch (nd.op) {
      case Op::Affine: {
        const auto& w = val(nd.in[0]);
        const auto& xv = val(nd.in[1]);
        const std::size_t m = w.shape[0], n = w.shape[1];
        const std::size_t T = xv.rank() == 2 ? xv.shape[0] : 1;
        double* gw = grad_of(nd.in[0], grads, sink);
        double* gx = grad_of(nd.in[1], grads, sink);
        double* gb = grad_of(nd.in[2], grads, sink);
        CMatMap gm(g, T, m);
        CMatMap xm(xv.values.data(), T, n);
        CMatMap wm(w.values.data(), m, n);
        MatMap(gw, m, n).noalias() += gm.transpose() * xm;
        MatMap(gx, T, n).noalias() += gm * wm;
        if (gb) VecMap(gb, m) += gm.colwise().sum().transpose();
        break;
      }
      case Op::Tanh: {
        double* gx = grad_of(nd.in[0], grads, sink);
        for (std::size_t i = 0; i < out.size(); ++i) gx[i] += g[i] * (1.0 - out[i] * out[i]);
        break;
      }
      case Op::Softmax: {
        double* gx = grad_of(nd.in[0], grads, sink);
        double dot = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) dot += g[i] * out[i];
        for (std::size_t i = 0; i < out.size(); ++i)
          if (!nd.mask[i]) gx[i] += out[i] * (g[i] - dot);
        break;
      }
      case Op::LogSoftmaxPick: {
        double* gx = grad_of(nd.in[0], grads, sink);
        const auto k = static_cast<std::size_t>(nd.ints[0]);
        for (std::size_t i = 0; i < nd.aux.size(); ++i)
          if (!nd.mask[i]) gx[i] -= g[0] * nd.aux[i];
        gx[k] += g[0];
        break;
      }
      case Op::Pick:
        grad_of(nd.in[0], grads, sink)[nd.ints[0]] += g[0];
        break;
      case Op::Add: {
        double* ga = grad_of(nd.in[0], grads, sink);
        double* gb = grad_of(nd.in[1], grads, sink);
        for (std::size_t i = 0; i < out.size(); ++i) ga[i] += g[i];
        if (nd.ints[0] == 0) {
          for (std::size_t i = 0; i < out.size(); ++i) gb[i] += g[i];
        } else {
          const std::size_t c = out.shape[1];
          for (std::size_t i = 0; i < out.size(); ++i) gb[i % c] += g[i];
        }
        break;
      }
      case Op::Scale: {
        double* gx = grad_of(nd.in[0], grads, sink);
        for (std::size_t i = 0; i < out.size(); ++i) gx[i] += nd.scalar * g[i];
        break;
      }
      case Op::Sum: {
        double* gx = grad_of(nd.in[0], grads, sink);
        const std::size_t n = val(nd.in[0]).size();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
        break;
      }
      case Op::Concat: {
        const std::size_t rows = out.rows(), total = out.cols();
        std::size_t off = 0;
        for (std::size_t k = 0; k < nd.in.size(); ++k) {
          double* gp = grad_of(nd.in[k], grads, sink);
          const auto w = static_cast<std::size_t>(nd.ints[k]);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += g[r * total + off + j];
          off += w;
        }
        break;
      }
      case Op::Stack: {
        const std::size_t n = out.shape[1];
        for (std::size_t r = 0; r < nd.in.size(); ++r) {
          double* gp = grad_of(nd.in[r], grads, sink);
          for (std::size_t j = 0; j < n; ++j) gp[j] += g[r * n + j];
        }
        break;
      }
      case Op::Reshape: {
        double* gx = grad_of(nd.in[0], grads, sink);
        for (std::size_t i = 0; i < out.size(); ++i) gx[i] += g[i];
        break;
      }
      case Op::Embedding: {
        double* gt = grad_of(nd.in[0], grads, sink);
        const std::size_t E = out.shape[1];
        for (std::size_t t = 0; t < nd.ints.size(); ++t) {
          double* row = gt + static_cast<std::size_t>(nd.ints[t]) * E;
          for (std::size_t j = 0; j < E; ++j) row[j] += g[t * E + j];
        }
        break;
      }
      case Op::GruStep: {
        const auto& xv = val(nd.in[0]);
        const auto& hv = val(nd.in[1]);
        const auto& w = val(nd.in[2]);
        const auto& u = val(nd.in[3]);
        const std::size_t H = hv.size(), n = xv.size();
        double* gx = grad_of(nd.in[0], grads, sink);
        double* gh = grad_of(nd.in[1], grads, sink);
        double* gw = grad_of(nd.in[2], grads, sink);
        double* gu = grad_of(nd.in[3], grads, sink);
        double* gb = grad_of(nd.in[4], grads, sink);
        std::vector<double> dx_pre(3 * H), dh_pre(3 * H);
        for (std::size_t k = 0; k < H; ++k) {
          const double z = nd.aux[k], r = nd.aux[H + k], c = nd.aux[2 * H + k], uhn = nd.aux[3 * H + k];
          const double gk = g[k];
          gh[k] += gk * z;
          const double dc = gk * (1.0 - z) * (1.0 - c * c);
          const double dz = gk * (hv[k] - c) * z * (1.0 - z);
          const double dr = dc * uhn * r * (1.0 - r);
          dx_pre[k] = dh_pre[k] = dz;
          dx_pre[H + k] = dh_pre[H + k] = dr;
          dx_pre[2 * H + k] = dc;
          dh_pre[2 * H + k] = dc * r;
        }
        CVecMap dx(dx_pre.data(), 3 * H), dh(dh_pre.data(), 3 * H);
        CVecMap xvec(xv.values.data(), n), hvec(hv.values.data(), H);
        VecMap(gb, 3 * H) += dx;
        MatMap(gw, 3 * H, n).noalias() += dx * xvec.transpose();
        VecMap(gx, n).noalias() += CMatMap(w.values.data(), 3 * H, n).transpose() * dx;
        MatMap(gu, 3 * H, H).noalias() += dh * hvec.transpose();
        VecMap(gh, H).noalias() += CMatMap(u.values.data(), 3 * H, H).transpose() * dh;
        break;
      }
      case Op::AttentionSum: {
        const auto& wv = val(nd.in[0]);
        const auto& rv = val(nd.in[1]);
        const std::size_t T = rv.shape[0], n = rv.shape[1];
        double* gw = grad_of(nd.in[0], grads, sink);
        double* gr = grad_of(nd.in[1], grads, sink);
        for (std::size_t t = 0; t < T; ++t) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            s += g[j] * rv.values[t * n + j];
            gr[t * n + j] += wv[t] * g[j];
          }
          gw[t] += s;
        }
        break;
      }
      case Op::Param:
      case Op::Constant:
        break;
    }
  }
}

Var weighted_sum(Tape& tape, std::span<const Var> xs, std::span<const double> weights) {
  if (xs.size() != weights.size()) throw DimensionError("weighted_sum: term and weight counts differ");
  if (xs.empty()) return tape.constant(Tensor({1}, 0.0));
  std::vector<Var> scaled;
  scaled.reserve(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) scaled.push_back(tape.scale(xs[k], weights[k]));
  return tape.sum(tape.concat(scaled));
}

void sgd_ascent_update(ParamStore& store, double learning_rate) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning rate must be a positive finite number");
  auto& grads = store.grads();
  for (ParamId i = 0; i < store.size(); ++i)
    if (!grads[i].all_finite()) throw NumericError("non-finite gradient for parameter " + store.name(i));
  for (ParamId i = 0; i < store.size(); ++i) {
    auto& p = store.value(i).values;
    const auto& g = grads[i].values;
    for (std::size_t k = 0; k < p.size(); ++k) p[k] += learning_rate * g[k];
  }
  grads.zero();
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double norm = grads.global_norm();
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

}  // namespace iftx
