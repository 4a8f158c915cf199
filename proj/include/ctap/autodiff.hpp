#ifndef CTAP_AUTODIFF_HPP
#define CTAP_AUTODIFF_HPP

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// Every value on the tape is a 2-D matrix. Sequences are stored time-major
// (one frame per row). Operations are free functions taking and returning
// Var handles; the tape owns the values and the backward closures.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctap {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Matrix<Scalar>& value() const { return tape->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape->requires_grad(*this); }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Tape&)>;

  Var<Scalar> constant(Mat v) { return push(std::move(v), false, {}); }
  Var<Scalar> leaf(Mat v) { return push(std::move(v), true, {}); }

  // Records a computed value. The closure runs only if the node receives a
  // gradient during backward().
  Var<Scalar> push(Mat v, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(Var<Scalar> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<Scalar> v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient of the last backward() target w.r.t. v; empty if v received none.
  const Mat& grad(Var<Scalar> v) const { return nodes_.at(v.id).grad; }

  template <typename Expr>
  void accumulate(Var<Scalar> v, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  void backward(Var<Scalar> target) {
    if (value(target).size() != 1) {
      throw std::invalid_argument("backward target must be a scalar");
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[target.id].grad = Mat::Ones(1, 1);
    for (int i = target.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0 || !n.backward) continue;
      current_ = i;
      n.backward(*this);
    }
  }

  // Gradient flowing into the node whose closure is currently executing.
  const Mat& upstream() const { return nodes_[current_].grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
  int current_ = -1;
};

namespace ad {

template <typename Scalar>
inline bool any_grad(std::initializer_list<Var<Scalar>> vs) {
  for (const auto& v : vs) {
    if (v.requires_grad()) return true;
  }
  return false;
}

template <typename Scalar>
inline void check_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix<Scalar> out = a.value() * b.value();
  return a.tape->push(std::move(out), any_grad({a, b}), [a, b](Tape<Scalar>& t) {
    const auto& g = t.upstream();
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

// a * b^T
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix<Scalar> out = a.value() * b.value().transpose();
  return a.tape->push(std::move(out), any_grad({a, b}), [a, b](Tape<Scalar>& t) {
    const auto& g = t.upstream();
    if (a.requires_grad()) t.accumulate(a, g * b.value());
    if (b.requires_grad()) t.accumulate(b, g.transpose() * a.value());
  });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  check_same_shape(a, b, "add");
  Matrix<Scalar> out = a.value() + b.value();
  return a.tape->push(std::move(out), any_grad({a, b}), [a, b](Tape<Scalar>& t) {
    t.accumulate(a, t.upstream());
    t.accumulate(b, t.upstream());
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  check_same_shape(a, b, "sub");
  Matrix<Scalar> out = a.value() - b.value();
  return a.tape->push(std::move(out), any_grad({a, b}), [a, b](Tape<Scalar>& t) {
    t.accumulate(a, t.upstream());
    t.accumulate(b, -t.upstream());
  });
}

// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  check_same_shape(a, b, "mul");
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape->push(std::move(out), any_grad({a, b}), [a, b](Tape<Scalar>& t) {
    const auto& g = t.upstream();
    if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  Matrix<Scalar> out = a.value() * s;
  return a.tape->push(std::move(out), a.requires_grad(),
                      [a, s](Tape<Scalar>& t) { t.accumulate(a, t.upstream() * s); });
}

// s is a 1x1 Var; returns s * a.
template <typename Scalar>
Var<Scalar> scale_by(Var<Scalar> a, Var<Scalar> s) {
  if (s.value().size() != 1) throw std::invalid_argument("scale_by: scale must be 1x1");
  Matrix<Scalar> out = a.value() * s.value()(0, 0);
  return a.tape->push(std::move(out), any_grad({a, s}), [a, s](Tape<Scalar>& t) {
    const auto& g = t.upstream();
    if (a.requires_grad()) t.accumulate(a, g * s.value()(0, 0));
    if (s.requires_grad()) {
      Matrix<Scalar> gs(1, 1);
      gs(0, 0) = g.cwiseProduct(a.value()).sum();
      t.accumulate(s, gs);
    }
  });
}

// Adds a 1xC row to every row of a.
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: row must be 1 x cols(a)");
  }
  Matrix<Scalar> out = a.value().rowwise() + RowVector<Scalar>(row.value());
  return a.tape->push(std::move(out), any_grad({a, row}), [a, row](Tape<Scalar>& t) {
    const auto& g = t.upstream();
    t.accumulate(a, g);
    if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
  });
}

// Scales column j of every row by row(0, j).
template <typename Scalar>
Var<Scalar> mul_row(Var<Scalar> a, Var<Scalar> row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("mul_row: row must be 1 x cols(a)");
  }
  Matrix<Scalar> out = a.value().array().rowwise() * RowVector<Scalar>(row.value()).array();
  return a.tape->push(std::move(out), any_grad({a, row}), [a, row](Tape<Scalar>& t) {
    const auto& g = t.upstream();
    if (a.requires_grad()) {
      Matrix<Scalar> ga = g.array().rowwise() * RowVector<Scalar>(row.value()).array();
      t.accumulate(a, ga);
    }
    if (row.requires_grad()) t.accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
  });
}

namespace detail {

template <typename Scalar, typename F, typename DF>
Var<Scalar> unary(Var<Scalar> a, F f, DF df) {
  Matrix<Scalar> out = a.value().unaryExpr(f);
  return a.tape->push(std::move(out), a.requires_grad(), [a, df](Tape<Scalar>& t) {
    Matrix<Scalar> d = a.value().unaryExpr(df);
    t.accumulate(a, t.upstream().cwiseProduct(d));
  });
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  return detail::unary(
      a, [](Scalar x) { return x > Scalar(0) ? x : Scalar(0); },
      [](Scalar x) { return x > Scalar(0) ? Scalar(1) : Scalar(0); });
}

// Exact (erf-based) GELU.
template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a) {
  using std::erf;
  using std::exp;
  using std::sqrt;
  const Scalar inv_sqrt2 = Scalar(1) / sqrt(Scalar(2));
  const Scalar inv_sqrt2pi = Scalar(1) / sqrt(Scalar(2) * Scalar(M_PI));
  return detail::unary(
      a, [=](Scalar x) { return Scalar(0.5) * x * (Scalar(1) + erf(x * inv_sqrt2)); },
      [=](Scalar x) {
        return Scalar(0.5) * (Scalar(1) + erf(x * inv_sqrt2)) + x * inv_sqrt2pi * exp(Scalar(-0.5) * x * x);
      });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  return a.tape->push(out, a.requires_grad(), [a, out](Tape<Scalar>& t) {
    t.accumulate(a, t.upstream().cwiseProduct((Scalar(1) - out.array().square()).matrix()));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().unaryExpr([](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
  return a.tape->push(out, a.requires_grad(), [a, out](Tape<Scalar>& t) {
    t.accumulate(a, t.upstream().cwiseProduct((out.array() * (Scalar(1) - out.array())).matrix()));
  });
}

// log(1 + e^x), computed stably.
template <typename Scalar>
Var<Scalar> softplus(Var<Scalar> a) {
  return detail::unary(
      a,
      [](Scalar x) { return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
}

template <typename Scalar>
Var<Scalar> add_constant(Var<Scalar> a, Scalar c) {
  Matrix<Scalar> out = a.value().array() + c;
  return a.tape->push(std::move(out), a.requires_grad(),
                      [a](Tape<Scalar>& t) { t.accumulate(a, t.upstream()); });
}

// min(exp(a), max_value) for a 1x1 input; zero gradient while clamped.
template <typename Scalar>
Var<Scalar> exp_clamped(Var<Scalar> a, Scalar max_value) {
  const Scalar e = std::exp(a.value()(0, 0));
  const bool clamped = e > max_value;
  Matrix<Scalar> out(1, 1);
  out(0, 0) = clamped ? max_value : e;
  return a.tape->push(std::move(out), a.requires_grad(), [a, e, clamped](Tape<Scalar>& t) {
    if (clamped) return;
    t.accumulate(a, t.upstream() * e);
  });
}

// Per-row normalization to zero mean / unit variance. gamma and beta are
// optional 1xC rows (pass nullptr for a non-affine normalization).
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> a, const Var<Scalar>* gamma = nullptr, const Var<Scalar>* beta = nullptr,
                       Scalar eps = Scalar(1e-5)) {
  const Matrix<Scalar>& x = a.value();
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  Matrix<Scalar> xhat(n, c);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mean = x.row(i).mean();
    const Scalar var = (x.row(i).array() - mean).square().mean();
    inv_std(i) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  Matrix<Scalar> out = xhat;
  Var<Scalar> g = gamma ? *gamma : Var<Scalar>{};
  Var<Scalar> b = beta ? *beta : Var<Scalar>{};
  if (gamma) out = out.array().rowwise() * RowVector<Scalar>(g.value()).array();
  if (beta) out = out.rowwise() + RowVector<Scalar>(b.value());
  bool rg = a.requires_grad() || (gamma && g.requires_grad()) || (beta && b.requires_grad());
  const bool has_g = gamma != nullptr;
  const bool has_b = beta != nullptr;
  return a.tape->push(std::move(out), rg, [=](Tape<Scalar>& t) {
    const auto& dy = t.upstream();
    if (has_g && g.requires_grad()) t.accumulate(g, dy.cwiseProduct(xhat).colwise().sum());
    if (has_b && b.requires_grad()) t.accumulate(b, dy.colwise().sum());
    if (!a.requires_grad()) return;
    Matrix<Scalar> dxhat = dy;
    if (has_g) dxhat = dxhat.array().rowwise() * RowVector<Scalar>(g.value()).array();
    Matrix<Scalar> dx(dxhat.rows(), dxhat.cols());
    for (Eigen::Index i = 0; i < dx.rows(); ++i) {
      const Scalar m1 = dxhat.row(i).mean();
      const Scalar m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
      dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
    }
    t.accumulate(a, dx);
  });
}

// Row-wise softmax.
template <typename Scalar>
Var<Scalar> softmax_rows(Var<Scalar> a) {
  Matrix<Scalar> y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const Scalar m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  return a.tape->push(y, a.requires_grad(), [a, y](Tape<Scalar>& t) {
    const auto& dy = t.upstream();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = dy.cwiseProduct(y).rowwise().sum();
    Matrix<Scalar> dx = y.cwiseProduct((dy.colwise() - dots));
    t.accumulate(a, dx);
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  Matrix<Scalar> out = a.value().middleCols(start, count);
  return a.tape->push(std::move(out), a.requires_grad(), [a, start, count](Tape<Scalar>& t) {
    Matrix<Scalar> g = Matrix<Scalar>::Zero(a.rows(), a.cols());
    g.middleCols(start, count) = t.upstream();
    t.accumulate(a, g);
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Eigen::Index cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix<Scalar> out(parts.front().rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().tape->push(std::move(out), rg, [parts](Tape<Scalar>& t) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) t.accumulate(p, t.upstream().middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Eigen::Index rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
    rg = rg || p.requires_grad();
  }
  Matrix<Scalar> out(rows, parts.front().cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts.front().tape->push(std::move(out), rg, [parts](Tape<Scalar>& t) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) t.accumulate(p, t.upstream().middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

// out.row(i) = a.row(index[i]); backward scatters.
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::vector<Eigen::Index> index) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  return a.tape->push(std::move(out), a.requires_grad(), [a, index = std::move(index)](Tape<Scalar>& t) {
    Matrix<Scalar> g = Matrix<Scalar>::Zero(a.rows(), a.cols());
    const auto& up = t.upstream();
    for (std::size_t i = 0; i < index.size(); ++i) g.row(index[i]) += up.row(static_cast<Eigen::Index>(i));
    t.accumulate(a, g);
  });
}

// Weighted mean over rows: sum_t w_t a_t / sum_t w_t, as a 1xC row.
template <typename Scalar>
Var<Scalar> weighted_mean_rows(Var<Scalar> a, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& w) {
  if (w.size() != a.rows()) throw std::invalid_argument("weighted_mean_rows: weight length mismatch");
  const Scalar total = w.sum();
  if (!(total > Scalar(0))) throw std::invalid_argument("weighted_mean_rows: weights sum to zero");
  Matrix<Scalar> out = (w.transpose() * a.value()) / total;
  return a.tape->push(std::move(out), a.requires_grad(), [a, w, total](Tape<Scalar>& t) {
    t.accumulate(a, (w / total) * t.upstream());
  });
}

// One-dimensional convolution along time with "same" zero padding and stride 1.
// x: T x Cin; weight: (K * Cin) x Cout, tap-major (rows [k*Cin, (k+1)*Cin)
// hold tap k, which reads frame t + k - K/2); bias: 1 x Cout.
template <typename Scalar>
Var<Scalar> conv1d(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("conv1d: kernel must be odd");
  const Eigen::Index T = x.rows();
  const Eigen::Index cin = x.cols();
  if (weight.rows() != kernel * cin) throw std::invalid_argument("conv1d: weight/input channel mismatch");
  if (bias.rows() != 1 || bias.cols() != weight.cols()) throw std::invalid_argument("conv1d: bias shape");
  const int half = kernel / 2;
  Matrix<Scalar> cols = Matrix<Scalar>::Zero(T, kernel * cin);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - half;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(T, T - shift);
    if (hi > lo) cols.block(lo, k * cin, hi - lo, cin) = x.value().middleRows(lo + shift, hi - lo);
  }
  Matrix<Scalar> out = cols * weight.value();
  out.rowwise() += RowVector<Scalar>(bias.value());
  return x.tape->push(std::move(out), any_grad({x, weight, bias}),
                      [x, weight, bias, kernel, half, cols](Tape<Scalar>& t) {
                        const auto& g = t.upstream();
                        if (weight.requires_grad()) t.accumulate(weight, cols.transpose() * g);
                        if (bias.requires_grad()) t.accumulate(bias, g.colwise().sum());
                        if (!x.requires_grad()) return;
                        const Eigen::Index T = x.rows();
                        const Eigen::Index cin = x.cols();
                        Matrix<Scalar> dcols = g * weight.value().transpose();
                        Matrix<Scalar> dx = Matrix<Scalar>::Zero(T, cin);
                        for (int k = 0; k < kernel; ++k) {
                          const Eigen::Index shift = k - half;
                          const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
                          const Eigen::Index hi = std::min<Eigen::Index>(T, T - shift);
                          if (hi > lo) dx.middleRows(lo + shift, hi - lo) += dcols.block(lo, k * cin, hi - lo, cin);
                        }
                        t.accumulate(x, dx);
                      });
}

// Divides each row by its Euclidean norm (floored at eps).
template <typename Scalar>
Var<Scalar> l2_normalize_rows(Var<Scalar> a, Scalar eps = Scalar(1e-12)) {
  const Matrix<Scalar>& x = a.value();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms = x.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) norms(i) = std::max(norms(i), eps);
  Matrix<Scalar> y = norms.asDiagonal().inverse() * x;
  return a.tape->push(y, a.requires_grad(), [a, y, norms](Tape<Scalar>& t) {
    const auto& dy = t.upstream();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = dy.cwiseProduct(y).rowwise().sum();
    Matrix<Scalar> dx = norms.asDiagonal().inverse() * (dy - dots.asDiagonal() * y);
    t.accumulate(a, dx);
  });
}

// Sum of 1x1 terms.
template <typename Scalar>
Var<Scalar> sum_scalars(const std::vector<Var<Scalar>>& terms) {
  if (terms.empty()) throw std::invalid_argument("sum_scalars: empty");
  Matrix<Scalar> out = Matrix<Scalar>::Zero(1, 1);
  bool rg = false;
  for (const auto& v : terms) {
    if (v.value().size() != 1) throw std::invalid_argument("sum_scalars: terms must be 1x1");
    out(0, 0) += v.value()(0, 0);
    rg = rg || v.requires_grad();
  }
  return terms.front().tape->push(std::move(out), rg, [terms](Tape<Scalar>& t) {
    for (const auto& v : terms) t.accumulate(v, t.upstream());
  });
}

// Multiplies every element by a fixed mask (inverted dropout).
template <typename Scalar>
Var<Scalar> apply_mask(Var<Scalar> a, Matrix<Scalar> mask) {
  Matrix<Scalar> out = a.value().cwiseProduct(mask);
  return a.tape->push(std::move(out), a.requires_grad(), [a, mask = std::move(mask)](Tape<Scalar>& t) {
    t.accumulate(a, t.upstream().cwiseProduct(mask));
  });
}

}  // namespace ad
}  // namespace ctap

#endif  // CTAP_AUTODIFF_HPP
