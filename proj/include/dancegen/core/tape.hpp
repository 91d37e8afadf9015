#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
// A Tape owns a flat list of nodes; Var is a cheap handle into it.
// backward() walks the node list in reverse, accumulating gradients.

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dancegen/core/error.hpp"

namespace dancegen::ad {

using Mat = Eigen::MatrixXd;

class Tape;

struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  bool valid() const { return tape != nullptr && idx >= 0; }
};

class Tape {
 public:
  struct Node {
    Mat val;
    Mat grad;                       // lazily sized on first accumulation
    bool needs_grad = false;
    std::function<void(Tape&, const Node&)> back;  // empty for leaves
  };

  Var leaf(Mat value, bool needs_grad = false) {
    nodes_.push_back(Node{std::move(value), Mat(), needs_grad, nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(Mat value) { return leaf(std::move(value), false); }

  Node& node(const Var& v) { return nodes_[static_cast<std::size_t>(v.idx)]; }
  const Node& node(const Var& v) const {
    return nodes_[static_cast<std::size_t>(v.idx)];
  }

  const Mat& value(const Var& v) const { return node(v).val; }
  const Mat& grad(const Var& v) const { return node(v).grad; }

  void accumulate(const Var& v, const Mat& g) {
    Node& n = node(v);
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    n.grad += g;
  }

  // Records a new node. `needs_grad` is inherited from any parent.
  template <class Backward>
  Var record(Mat value, std::initializer_list<Var> parents, Backward back) {
    bool ng = false;
    for (const Var& p : parents) ng = ng || node(p).needs_grad;
    Node n;
    n.val = std::move(value);
    n.needs_grad = ng;
    if (ng) n.back = std::function<void(Tape&, const Node&)>(std::move(back));
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  // Backpropagates from a 1x1 scalar node.
  void backward(const Var& root) {
    Node& r = node(root);
    require_shape(r.val.rows() == 1 && r.val.cols() == 1,
                  "backward: root must be a 1x1 scalar");
    if (!r.needs_grad) return;
    r.grad = Mat::Ones(1, 1);
    for (int i = root.idx; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back && n.grad.size() != 0) n.back(*this, n);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::deque<Node> nodes_;
};

inline double scalar(const Var& v) { return v.tape->value(v)(0, 0); }

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

namespace detail {
inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  const Mat& x = a.tape->value(a);
  const Mat& y = b.tape->value(b);
  require_shape(x.rows() == y.rows() && x.cols() == y.cols(),
                std::string(op) + ": shape mismatch");
}
}  // namespace detail

inline Var add(Var a, Var b) {
  detail::check_same_shape(a, b, "add");
  Tape& t = *a.tape;
  return t.record(t.value(a) + t.value(b), {a, b},
                  [a, b](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, n.grad);
                    t.accumulate(b, n.grad);
                  });
}

inline Var sub(Var a, Var b) {
  detail::check_same_shape(a, b, "sub");
  Tape& t = *a.tape;
  return t.record(t.value(a) - t.value(b), {a, b},
                  [a, b](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, n.grad);
                    t.accumulate(b, -n.grad);
                  });
}

// Elementwise (Hadamard) product.
inline Var mul(Var a, Var b) {
  detail::check_same_shape(a, b, "mul");
  Tape& t = *a.tape;
  return t.record(t.value(a).cwiseProduct(t.value(b)), {a, b},
                  [a, b](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, n.grad.cwiseProduct(t.value(b)));
                    t.accumulate(b, n.grad.cwiseProduct(t.value(a)));
                  });
}

inline Var muls(Var a, double s) {
  Tape& t = *a.tape;
  return t.record(t.value(a) * s, {a}, [a, s](Tape& t, const Tape::Node& n) {
    t.accumulate(a, n.grad * s);
  });
}

inline Var adds(Var a, double s) {
  Tape& t = *a.tape;
  return t.record(Mat((t.value(a).array() + s).matrix()), {a},
                  [a](Tape& t, const Tape::Node& n) { t.accumulate(a, n.grad); });
}

inline Var neg(Var a) { return muls(a, -1.0); }

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  require_shape(t.value(a).cols() == t.value(b).rows(),
                "matmul: inner dimension mismatch");
  return t.record(t.value(a) * t.value(b), {a, b},
                  [a, b](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, n.grad * t.value(b).transpose());
                    t.accumulate(b, t.value(a).transpose() * n.grad);
                  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.record(t.value(a).transpose(), {a},
                  [a](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, n.grad.transpose());
                  });
}

inline Var cols(Var a, int j0, int n) {
  Tape& t = *a.tape;
  const Mat& x = t.value(a);
  require_shape(j0 >= 0 && j0 + n <= x.cols(), "cols: out of range");
  return t.record(x.middleCols(j0, n), {a},
                  [a, j0, n](Tape& t, const Tape::Node& nd) {
                    const Mat& x = t.value(a);
                    Mat g = Mat::Zero(x.rows(), x.cols());
                    g.middleCols(j0, n) = nd.grad;
                    t.accumulate(a, g);
                  });
}

inline Var rows(Var a, int i0, int n) {
  Tape& t = *a.tape;
  const Mat& x = t.value(a);
  require_shape(i0 >= 0 && i0 + n <= x.rows(), "rows: out of range");
  return t.record(x.middleRows(i0, n), {a},
                  [a, i0, n](Tape& t, const Tape::Node& nd) {
                    const Mat& x = t.value(a);
                    Mat g = Mat::Zero(x.rows(), x.cols());
                    g.middleRows(i0, n) = nd.grad;
                    t.accumulate(a, g);
                  });
}

inline Var hcat(Var a, Var b) {
  Tape& t = *a.tape;
  const Mat& x = t.value(a);
  const Mat& y = t.value(b);
  require_shape(x.rows() == y.rows(), "hcat: row mismatch");
  Mat out(x.rows(), x.cols() + y.cols());
  out << x, y;
  const int ca = static_cast<int>(x.cols());
  return t.record(std::move(out), {a, b},
                  [a, b, ca](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, n.grad.leftCols(ca));
                    t.accumulate(b, n.grad.rightCols(n.grad.cols() - ca));
                  });
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  Mat s(1, 1);
  s(0, 0) = t.value(a).sum();
  return t.record(std::move(s), {a}, [a](Tape& t, const Tape::Node& n) {
    const Mat& x = t.value(a);
    t.accumulate(a, Mat::Constant(x.rows(), x.cols(), n.grad(0, 0)));
  });
}

inline Var mean(Var a) {
  const Mat& x = a.tape->value(a);
  return muls(sum(a), 1.0 / static_cast<double>(x.size()));
}

// Row-wise sum -> F x 1.
inline Var rowsum(Var a) {
  Tape& t = *a.tape;
  return t.record(t.value(a).rowwise().sum(), {a},
                  [a](Tape& t, const Tape::Node& n) {
                    const Mat& x = t.value(a);
                    t.accumulate(a, n.grad * Mat::Ones(1, x.cols()));
                  });
}

// F x d broadcast-multiplied by an F x 1 column.
inline Var mulcol(Var a, Var c) {
  Tape& t = *a.tape;
  const Mat& x = t.value(a);
  const Mat& v = t.value(c);
  require_shape(v.cols() == 1 && v.rows() == x.rows(), "mulcol: need F x 1");
  return t.record(Mat((x.array().colwise() * v.col(0).array()).matrix()), {a, c},
                  [a, c](Tape& t, const Tape::Node& n) {
                    const Mat& x = t.value(a);
                    const Mat& v = t.value(c);
                    t.accumulate(a, (n.grad.array().colwise() * v.col(0).array()).matrix());
                    t.accumulate(c, n.grad.cwiseProduct(x).rowwise().sum());
                  });
}

// F x d broadcast-multiplied by a 1 x d row.
inline Var mulrow(Var a, Var r) {
  Tape& t = *a.tape;
  const Mat& x = t.value(a);
  const Mat& v = t.value(r);
  require_shape(v.rows() == 1 && v.cols() == x.cols(), "mulrow: need 1 x d");
  return t.record(Mat((x.array().rowwise() * v.row(0).array()).matrix()), {a, r},
                  [a, r](Tape& t, const Tape::Node& n) {
                    const Mat& x = t.value(a);
                    const Mat& v = t.value(r);
                    t.accumulate(a, (n.grad.array().rowwise() * v.row(0).array()).matrix());
                    t.accumulate(r, n.grad.cwiseProduct(x).colwise().sum());
                  });
}

// F x d plus a 1 x d row broadcast down the rows.
inline Var addrow(Var a, Var r) {
  Tape& t = *a.tape;
  const Mat& x = t.value(a);
  const Mat& v = t.value(r);
  require_shape(v.rows() == 1 && v.cols() == x.cols(), "addrow: need 1 x d");
  return t.record(Mat((x.array().rowwise() + v.row(0).array()).matrix()), {a, r},
                  [a, r](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, n.grad);
                    t.accumulate(r, n.grad.colwise().sum());
                  });
}

inline Var exp(Var a) {
  Tape& t = *a.tape;
  return t.record(Mat(t.value(a).array().exp().matrix()), {a},
                  [a](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, n.grad.cwiseProduct(n.val));
                  });
}

inline Var sqrt(Var a) {
  Tape& t = *a.tape;
  return t.record(Mat(t.value(a).array().sqrt().matrix()), {a},
                  [a](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, (n.grad.array() * 0.5 / n.val.array()).matrix());
                  });
}

// Elementwise reciprocal.
inline Var inv(Var a) {
  Tape& t = *a.tape;
  return t.record(t.value(a).cwiseInverse(), {a},
                  [a](Tape& t, const Tape::Node& n) {
                    t.accumulate(
                        a, (-n.grad.array() * n.val.array() * n.val.array())
                               .matrix());
                  });
}

// Exact (erf-based) GELU; smooth, so finite-difference friendly.
inline Var gelu(Var a) {
  Tape& t = *a.tape;
  const Mat& x = t.value(a);
  Mat phi = x.unaryExpr(
      [](double v) { return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)); });
  Mat out = x.cwiseProduct(phi);
  return t.record(std::move(out), {a}, [a, phi](Tape& t, const Tape::Node& n) {
    const Mat& x = t.value(a);
    const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Mat pdf = (-0.5 * x.array().square()).exp() * c;
    t.accumulate(a, n.grad.cwiseProduct(
                        (phi.array() + x.array() * pdf.array()).matrix()));
  });
}

// Row-wise softmax as a single primitive (stable via row max shift).
inline Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Mat& x = t.value(a);
  Mat shifted = x.array().colwise() - x.rowwise().maxCoeff().array();
  Mat e = shifted.array().exp();
  Mat y = e.array().colwise() / e.rowwise().sum().array();
  return t.record(std::move(y), {a}, [a](Tape& t, const Tape::Node& n) {
    // dx = y .* (g - rowsum(g .* y))
    Mat gy = n.grad.cwiseProduct(n.val);
    Eigen::VectorXd rs = gy.rowwise().sum();
    Mat shifted_g = (n.grad.array().colwise() - rs.array()).matrix();
    t.accumulate(a, n.val.cwiseProduct(shifted_g));
  });
}

// ---------------------------------------------------------------------------
// Composites
// ---------------------------------------------------------------------------

// x W + b with W: d_in x d_out, b: 1 x d_out.
inline Var affine(Var x, Var w, Var b) { return addrow(matmul(x, w), b); }

// Row-wise L2 norm guarded by eps inside the sqrt -> F x 1.
inline Var rownorm(Var x, double eps = 1e-16) {
  return sqrt(adds(rowsum(mul(x, x)), eps));
}

// Row-wise layer normalization with learned gain/bias (1 x d each).
inline Var layernorm_rows(Var x, Var gain, Var bias, double eps = 1e-6) {
  Tape& t = *x.tape;
  const int d = static_cast<int>(t.value(x).cols());
  Var mu = muls(rowsum(x), 1.0 / d);                       // F x 1
  Var xc = sub(x, mulcol(t.constant(Mat::Ones(t.value(x).rows(), d)), mu));
  Var var = muls(rowsum(mul(xc, xc)), 1.0 / d);            // F x 1
  Var rstd = inv(sqrt(adds(var, eps)));
  Var xn = mulcol(xc, rstd);
  return addrow(mulrow(xn, gain), bias);
}

inline Var mean_sq(Var x) { return mean(mul(x, x)); }

}  // namespace dancegen::ad
