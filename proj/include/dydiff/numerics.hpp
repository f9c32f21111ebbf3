#pragma once

// Dense 64-bit tensors and a tape-based reverse-mode differentiation core.
//
// Every model computation is expressed as a sequence of primitives recorded on
// a Tape. Tape::backward replays the recorded primitives in reverse order and
// accumulates d(loss)/d(value) into every Parameter that was bound as a leaf.
// Parameter gradients are never zeroed implicitly; call zero_grad() between
// optimizer steps.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dydiff {

using Index = std::size_t;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Inputs to exp and sigmoid are clamped to [-kExpClamp, kExpClamp].
inline constexpr double kExpClamp = 30.0;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Index rows, Index cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(Index rows, Index cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("tensor of shape " + shape_string() + " cannot hold " +
                       std::to_string(data_.size()) + " values");
    }
  }

  static Tensor zeros(Index rows, Index cols) { return Tensor(rows, cols); }

  static Tensor row_vector(std::initializer_list<double> values) {
    return Tensor(1, values.size(), std::vector<double>(values));
  }

  static Tensor row_vector(std::span<const double> values) {
    return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const Index r = rows.size();
    const Index c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
      values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(values));
  }

  static Tensor identity(Index n) {
    Tensor t(n, n);
    for (Index i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::vector<Index> shape() const { return {rows_, cols_}; }

  bool same_shape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::string shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

  double& operator()(Index r, Index c) { return data_[r * cols_ + c]; }
  double operator()(Index r, Index c) const { return data_[r * cols_ + c]; }
  double& operator[](Index i) { return data_[i]; }
  double operator[](Index i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(Index r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(Index r) const { return {data_.data() + r * cols_, cols_}; }

  MatrixMap matrix() { return MatrixMap(data_.data(), rows_, cols_); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), rows_, cols_); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& other) {
    if (!same_shape(other)) {
      throw ShapeError("cannot accumulate " + other.shape_string() + " into " + shape_string());
    }
    for (Index i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<double> data_;
};

inline Tensor from_matrix(const RowMatrix& m) {
  Tensor t(static_cast<Index>(m.rows()), static_cast<Index>(m.cols()));
  t.matrix() = m;
  return t;
}

// A named trainable value with its gradient accumulator.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value)
      : name_(std::move(name)), value_(std::move(value)), grad_(value_.rows(), value_.cols()) {}

  const std::string& name() const { return name_; }
  const Tensor& value() const { return value_; }
  Tensor& mutable_value() { return value_; }
  const Tensor& grad() const { return grad_; }
  Tensor& mutable_grad() { return grad_; }
  void zero_grad() { grad_.fill(0.0); }

  void set_value(Tensor v) {
    if (!v.same_shape(value_)) {
      throw ShapeError("parameter " + name_ + " has shape " + value_.shape_string() +
                       ", got " + v.shape_string());
    }
    value_ = std::move(v);
  }

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while its Tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double item() const {
    const Tensor& v = value();
    if (v.size() != 1) throw ShapeError("item() on non-scalar " + v.shape_string());
    return v[0];
  }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Called during backward with the node's own id; reads grad(id) and
  // accumulates into its inputs through accumulate().
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return Var(this, nodes_.size() - 1);
  }

  Var leaf(Parameter& p) {
    nodes_.push_back(Node{p.value(), {}, true, &p, {}});
    return Var(this, nodes_.size() - 1);
  }

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw std::logic_error("primitive mixes values from different tapes");
      needs = needs || nodes_[in.id_].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(fn) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }

  // Gradient buffer for an input node, or nullptr when no gradient is needed.
  Tensor* accumulator(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
      n.grad = Tensor(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return &n.grad;
  }

  void accumulate(std::size_t id, const Tensor& g) {
    if (Tensor* acc = accumulator(id)) *acc += g;
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return visits_; }

  // Propagates d(loss)/d(.) through the trace and adds the result to the
  // gradients of every bound Parameter.
  void backward(const Var& loss) {
    if (loss.tape_ != this) throw std::logic_error("loss recorded on a different tape");
    const Tensor& lv = nodes_[loss.id_].value;
    if (lv.size() != 1) throw ShapeError("backward requires a scalar loss, got " + lv.shape_string());
    for (Node& n : nodes_) {
      n.grad = Tensor();
      n.has_grad = false;
    }
    visits_ = 0;
    if (!nodes_[loss.id_].requires_grad) return;
    accumulator(loss.id_)->fill(1.0);
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad) continue;
      if (n.backward) {
        ++visits_;
        n.backward(*this, i);
      } else if (n.param != nullptr) {
        n.param->mutable_grad() += n.grad;
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
    bool has_grad = false;
  };
  std::deque<Node> nodes_;
  std::size_t visits_ = 0;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

inline double clamp_logit(double x) { return std::clamp(x, -kExpClamp, kExpClamp); }

inline double stable_sigmoid(double x) {
  x = clamp_logit(x);
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F>
Tensor map_values(const Tensor& in, F f) {
  Tensor out(in.rows(), in.cols());
  auto src = in.values();
  auto dst = out.values();
  for (Index i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise primitives

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto o = out.values();
  auto bv = b.value().values();
  for (Index i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    if (Tensor* gb = t.accumulator(ib)) {
      auto g = t.grad(self).values();
      auto dst = gb->values();
      for (Index i = 0; i < g.size(); ++i) dst[i] -= g[i];
    }
  });
}

inline Var hadamard(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "hadamard");
  Tensor out = a.value();
  auto o = out.values();
  auto bv = b.value().values();
  for (Index i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    auto g = t.grad(self).values();
    if (Tensor* ga = t.accumulator(ia)) {
      auto bv = t.value(ib).values();
      auto dst = ga->values();
      for (Index i = 0; i < g.size(); ++i) dst[i] += g[i] * bv[i];
    }
    if (Tensor* gb = t.accumulator(ib)) {
      auto av = t.value(ia).values();
      auto dst = gb->values();
      for (Index i = 0; i < g.size(); ++i) dst[i] += g[i] * av[i];
    }
  });
}

inline Var scale(const Var& a, double c) {
  Tensor out = detail::map_values(a.value(), [c](double x) { return c * x; });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, c](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      auto g = t.grad(self).values();
      auto dst = ga->values();
      for (Index i = 0; i < g.size(); ++i) dst[i] += c * g[i];
    }
  });
}

inline Var add_scalar(const Var& a, double c) {
  Tensor out = detail::map_values(a.value(), [c](double x) { return x + c; });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
  });
}

// 1 - a
inline Var one_minus(const Var& a) { return add_scalar(scale(a, -1.0), 1.0); }

inline Var sigmoid(const Var& a) {
  Tensor out = detail::map_values(a.value(), detail::stable_sigmoid);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      auto g = t.grad(self).values();
      auto y = t.value(self).values();
      auto x = t.value(ia).values();
      auto dst = ga->values();
      for (Index i = 0; i < g.size(); ++i) {
        if (std::abs(x[i]) <= kExpClamp) dst[i] += g[i] * y[i] * (1.0 - y[i]);
      }
    }
  });
}

inline Var tanh(const Var& a) {
  Tensor out = detail::map_values(a.value(), [](double x) { return std::tanh(x); });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      auto g = t.grad(self).values();
      auto y = t.value(self).values();
      auto dst = ga->values();
      for (Index i = 0; i < g.size(); ++i) dst[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

inline Var exp(const Var& a) {
  Tensor out = detail::map_values(a.value(), [](double x) { return std::exp(detail::clamp_logit(x)); });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      auto g = t.grad(self).values();
      auto y = t.value(self).values();
      auto x = t.value(ia).values();
      auto dst = ga->values();
      for (Index i = 0; i < g.size(); ++i) {
        if (std::abs(x[i]) <= kExpClamp) dst[i] += g[i] * y[i];
      }
    }
  });
}

inline Var log(const Var& a) {
  for (double x : a.value().values()) {
    if (!(x > 0.0)) throw std::domain_error("log of non-positive value");
  }
  Tensor out = detail::map_values(a.value(), [](double x) { return std::log(x); });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      auto g = t.grad(self).values();
      auto x = t.value(ia).values();
      auto dst = ga->values();
      for (Index i = 0; i < g.size(); ++i) dst[i] += g[i] / x[i];
    }
  });
}

// Clamps every element to [lo, hi]; the gradient is zero where clamping applied.
inline Var clamp(const Var& a, double lo, double hi) {
  Tensor out = detail::map_values(a.value(), [lo, hi](double x) { return std::clamp(x, lo, hi); });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, lo, hi](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      auto g = t.grad(self).values();
      auto x = t.value(ia).values();
      auto dst = ga->values();
      for (Index i = 0; i < g.size(); ++i) {
        if (x[i] >= lo && x[i] <= hi) dst[i] += g[i];
      }
    }
  });
}

enum class Elementwise { kSigmoid, kTanh, kExp, kHadamard, kAdd, kScale };

// Dispatches the named elementwise primitive. `factor` is used by kScale only.
inline Var elementwise(Elementwise kind, std::span<const Var> inputs, double factor = 1.0) {
  const bool binary = kind == Elementwise::kHadamard || kind == Elementwise::kAdd;
  if (inputs.size() != (binary ? 2u : 1u)) {
    throw std::invalid_argument("elementwise: wrong number of inputs");
  }
  switch (kind) {
    case Elementwise::kSigmoid: return sigmoid(inputs[0]);
    case Elementwise::kTanh: return tanh(inputs[0]);
    case Elementwise::kExp: return exp(inputs[0]);
    case Elementwise::kHadamard: return hadamard(inputs[0], inputs[1]);
    case Elementwise::kAdd: return add(inputs[0], inputs[1]);
    case Elementwise::kScale: return scale(inputs[0], factor);
  }
  throw std::invalid_argument("elementwise: unknown kind");
}

// ---------------------------------------------------------------------------
// Reductions and structural primitives

inline Var sum(const Var& a) {
  const auto v = a.value().values();
  Tensor out(1, 1, std::accumulate(v.begin(), v.end(), 0.0));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      const double g = t.grad(self)[0];
      for (double& x : ga->values()) x += g;
    }
  });
}

inline Var sum_squares(const Var& a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x * x;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor(1, 1, s), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      const double g = t.grad(self)[0];
      auto x = t.value(ia).values();
      auto dst = ga->values();
      for (Index i = 0; i < x.size(); ++i) dst[i] += 2.0 * g * x[i];
    }
  });
}

inline Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions disagree " + av.shape_string() + " x " +
                     bv.shape_string());
  }
  Tensor out(av.rows(), bv.cols());
  if (!out.empty() && av.cols() > 0) out.matrix().noalias() = av.matrix() * bv.matrix();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (Tensor* ga = t.accumulator(ia)) ga->matrix().noalias() += g.matrix() * t.value(ib).matrix().transpose();
    if (Tensor* gb = t.accumulator(ib)) gb->matrix().noalias() += t.value(ia).matrix().transpose() * g.matrix();
  });
}

// a * b^T
inline Var matmul_transposed(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_transposed: inner dimensions disagree " + av.shape_string() +
                     " x " + bv.shape_string() + "^T");
  }
  Tensor out(av.rows(), bv.rows());
  if (!out.empty() && av.cols() > 0) out.matrix().noalias() = av.matrix() * bv.matrix().transpose();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (Tensor* ga = t.accumulator(ia)) ga->matrix().noalias() += g.matrix() * t.value(ib).matrix();
    if (Tensor* gb = t.accumulator(ib)) gb->matrix().noalias() += g.matrix().transpose() * t.value(ia).matrix();
  });
}

inline Var transpose(const Var& a) {
  const Tensor& av = a.value();
  Tensor out(av.cols(), av.rows());
  out.matrix() = av.matrix().transpose();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) ga->matrix() += t.grad(self).matrix().transpose();
  });
}

// Adds a 1 x d row to every row of an n x d matrix.
inline Var add_row(const Var& a, const Var& row) {
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: cannot broadcast " + rv.shape_string() + " over " + av.shape_string());
  }
  Tensor out = av;
  out.matrix().rowwise() += rv.matrix().row(0);
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape().record(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    if (Tensor* gr = t.accumulator(ir)) gr->matrix().row(0) += t.grad(self).matrix().colwise().sum();
  });
}

namespace detail {

inline void softmax_row(std::span<const double> in, std::span<double> out) {
  const double m = *std::max_element(in.begin(), in.end());
  double z = 0.0;
  for (Index i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
}

// g_in = y * (g - <g, y>) over the first `width` entries of a row.
inline void softmax_row_backward(std::span<const double> y, std::span<const double> g,
                                 std::span<double> dst) {
  double dot = 0.0;
  for (Index i = 0; i < y.size(); ++i) dot += g[i] * y[i];
  for (Index i = 0; i < y.size(); ++i) dst[i] += y[i] * (g[i] - dot);
}

}  // namespace detail

// Softmax of every row independently, stabilized by subtracting the row max.
inline Var row_softmax(const Var& a) {
  const Tensor& av = a.value();
  if (av.cols() == 0) throw ShapeError("row_softmax: empty row");
  Tensor out(av.rows(), av.cols());
  for (Index r = 0; r < av.rows(); ++r) detail::softmax_row(av.row(r), out.row(r));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      const Tensor& y = t.value(self);
      const Tensor& g = t.grad(self);
      for (Index r = 0; r < y.rows(); ++r) detail::softmax_row_backward(y.row(r), g.row(r), ga->row(r));
    }
  });
}

// Row k of a square K x K matrix is normalized over columns 0..k only; entries
// above the diagonal are exactly zero and receive no gradient.
inline Var causal_softmax(const Var& a) {
  const Tensor& av = a.value();
  if (av.rows() != av.cols() || av.rows() == 0) {
    throw ShapeError("causal_softmax: needs a non-empty square matrix, got " + av.shape_string());
  }
  const Index k = av.rows();
  Tensor out(k, k);
  for (Index r = 0; r < k; ++r) detail::softmax_row(av.row(r).first(r + 1), out.row(r).first(r + 1));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      const Tensor& y = t.value(self);
      const Tensor& g = t.grad(self);
      for (Index r = 0; r < y.rows(); ++r) {
        detail::softmax_row_backward(y.row(r).first(r + 1), g.row(r).first(r + 1),
                                     ga->row(r).first(r + 1));
      }
    }
  });
}

inline Var gather_rows(const Var& a, std::vector<Index> rows) {
  const Tensor& av = a.value();
  Tensor out(rows.size(), av.cols());
  for (Index i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                       av.shape_string());
    }
    std::copy_n(av.row(rows[i]).begin(), av.cols(), out.row(i).begin());
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, rows = std::move(rows)](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      const Tensor& g = t.grad(self);
      for (Index i = 0; i < rows.size(); ++i) {
        auto src = g.row(i);
        auto dst = ga->row(rows[i]);
        for (Index c = 0; c < src.size(); ++c) dst[c] += src[c];
      }
    }
  });
}

inline Var concat_rows(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("concat_rows: column mismatch " + av.shape_string() + " vs " + bv.shape_string());
  }
  std::vector<double> values(av.values().begin(), av.values().end());
  values.insert(values.end(), bv.values().begin(), bv.values().end());
  Tensor out(av.rows() + bv.rows(), av.cols(), std::move(values));
  const std::size_t ia = a.id(), ib = b.id();
  const Index split = av.size();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, split](Tape& t, std::size_t self) {
    auto g = t.grad(self).values();
    if (Tensor* ga = t.accumulator(ia)) {
      auto dst = ga->values();
      for (Index i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
    if (Tensor* gb = t.accumulator(ib)) {
      auto dst = gb->values();
      for (Index i = 0; i < dst.size(); ++i) dst[i] += g[split + i];
    }
  });
}

inline Var slice_rows(const Var& a, Index begin, Index count) {
  const Tensor& av = a.value();
  if (begin + count > av.rows()) throw ShapeError("slice_rows: range exceeds " + av.shape_string());
  const Index c = av.cols();
  Tensor out(count, c, std::vector<double>(av.values().begin() + begin * c,
                                           av.values().begin() + (begin + count) * c));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, begin, c](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      auto g = t.grad(self).values();
      auto dst = ga->values();
      for (Index i = 0; i < g.size(); ++i) dst[begin * c + i] += g[i];
    }
  });
}

inline Var mean_rows(const Var& a) {
  const Tensor& av = a.value();
  if (av.rows() == 0) throw ShapeError("mean_rows: no rows");
  Tensor out(1, av.cols());
  out.matrix() = av.matrix().colwise().mean();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia)) {
      const double w = 1.0 / static_cast<double>(ga->rows());
      ga->matrix().rowwise() += w * t.grad(self).matrix().row(0);
    }
  });
}

// ---------------------------------------------------------------------------
// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Finite-difference verification

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t n_coords = 0;
  std::string worst;  // "<param>[i]" of the worst coordinate
  bool pass = false;
};

using TracedFn = std::function<Var(Tape&)>;

// Compares analytic gradients of `fn` w.r.t. `params` against central
// differences. The error of a coordinate is relative when either gradient
// magnitude is at least 1e-8 and absolute otherwise. Leaves the analytic
// gradients in the parameters.
inline GradCheckReport grad_check(const TracedFn& fn, std::span<Parameter* const> params,
                                  double h = 1e-5, double tol = 1e-6) {
  auto evaluate = [&fn]() {
    Tape tape;
    return fn(tape).item();
  };
  const double base = evaluate();
  const double again = evaluate();
  if (!(base == again) && !(std::isnan(base) && std::isnan(again))) {
    throw std::invalid_argument("grad_check: function is not deterministic");
  }

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = fn(tape);
    tape.backward(loss);
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    for (Index i = 0; i < p->value().size(); ++i) {
      const double orig = p->value()[i];
      p->mutable_value()[i] = orig + h;
      const double up = evaluate();
      p->mutable_value()[i] = orig - h;
      const double down = evaluate();
      p->mutable_value()[i] = orig;

      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad()[i];
      const double abs_err = std::abs(numeric - analytic);
      const double mag = std::max(std::abs(numeric), std::abs(analytic));
      const double err = mag < 1e-8 ? abs_err : abs_err / mag;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (report.n_coords == 0 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = p->name() + "[" + std::to_string(i) + "]";
      }
      ++report.n_coords;
    }
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

}  // namespace dydiff
