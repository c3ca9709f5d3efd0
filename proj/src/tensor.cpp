// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include "conde/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace conde {

namespace {

thread_local Tape* g_active_tape = nullptr;

using Impl = detail::TensorImpl;

[[noreturn]] void shape_fail(std::string_view op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

bool needs_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Accumulation target for an input, or nullptr when it takes no gradient.
double* grad_target(const Tensor& t) {
  if (!t.requires_grad()) return nullptr;
  t.impl()->ensure_grad();
  return t.impl()->grad.data();
}

}  // namespace

Tensor make_result(Shape shape, std::vector<double> values) {
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->value = std::move(values);
  return Tensor(std::move(impl));
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  Tensor t = make_result(std::move(shape), std::vector<double>(n, v));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  Tensor t = make_result(std::move(shape), std::move(values));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from({n}, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): not a matrix " + shape_str(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): not a matrix " + shape_str(shape()));
  return shape()[1];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor has " + std::to_string(numel()) + " elements");
  return impl_->value[0];
}

std::span<const double> Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return make_result(shape(), impl_->value); }

Tensor Tensor::clone(bool requires_grad) const {
  Tensor t = detach();
  t.set_requires_grad(requires_grad);
  return t;
}

// ---- Tape -----------------------------------------------------------------

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
                  std::function<void()> backward) {
  output.impl()->node_id = static_cast<std::int64_t>(nodes_.size());
  output.set_requires_grad(true);
  nodes_.push_back(Node{op, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    clear();
    return;
  }
  Impl* root = loss.impl();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
  clear();
}

void Tape::clear() {
  for (Node& n : nodes_) n.output.impl()->node_id = -1;
  nodes_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw std::logic_error("backward: no active tape");
  tape->backward(loss);
}

// ---- products ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() == 2 && b.rank() == 2) {
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) shape_fail("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    const double* A = a.values().data();
    const double* B = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
      double* o = out.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        const double* br = B + p * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
      }
    }
    Tensor y = make_result({m, n}, std::move(out));
    if (needs_record({&a, &b})) {
      Impl* yi = y.impl();
      Tape::active()->record("matmul", {a, b}, y, [a, b, yi, m, k, n] {
        const double* G = yi->grad.data();
        if (double* ga = grad_target(a)) {
          const double* B = b.values().data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
              ga[i * k + p] += s;
            }
        }
        if (double* gb = grad_target(b)) {
          const double* A = a.values().data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double av = A[i * k + p];
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * G[i * n + j];
            }
        }
      });
    }
    return y;
  }
  if (a.rank() == 2 && b.rank() == 1) {
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    if (b.shape()[0] != k) shape_fail("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(m, 0.0);
    const double* A = a.values().data();
    const double* x = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * x[p];
      out[i] = s;
    }
    Tensor y = make_result({m}, std::move(out));
    if (needs_record({&a, &b})) {
      Impl* yi = y.impl();
      Tape::active()->record("matvec", {a, b}, y, [a, b, yi, m, k] {
        const double* g = yi->grad.data();
        if (double* ga = grad_target(a)) {
          const double* x = b.values().data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g[i] * x[p];
        }
        if (double* gb = grad_target(b)) {
          const double* A = a.values().data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) gb[p] += g[i] * A[i * k + p];
        }
      });
    }
    return y;
  }
  if (a.rank() == 1 && b.rank() == 2) {
    const std::size_t k = a.shape()[0], n = b.shape()[1];
    if (b.shape()[0] != k) shape_fail("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(n, 0.0);
    const double* x = a.values().data();
    const double* B = b.values().data();
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) out[j] += x[p] * B[p * n + j];
    Tensor y = make_result({n}, std::move(out));
    if (needs_record({&a, &b})) {
      Impl* yi = y.impl();
      Tape::active()->record("vecmat", {a, b}, y, [a, b, yi, k, n] {
        const double* g = yi->grad.data();
        if (double* ga = grad_target(a)) {
          const double* B = b.values().data();
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[j] * B[p * n + j];
            ga[p] += s;
          }
        }
        if (double* gb = grad_target(b)) {
          const double* x = a.values().data();
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x[p] * g[j];
        }
      });
    }
    return y;
  }
  shape_fail("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
}

Tensor linear(const Tensor& x, const Tensor& weight) {
  require_rank("linear", weight, 2);
  const std::size_t out_dim = weight.shape()[0], in_dim = weight.shape()[1];
  const bool batched = x.rank() == 2;
  if (!batched && x.rank() != 1) shape_fail("linear", "input must be a vector or matrix");
  const std::size_t n = batched ? x.shape()[0] : 1;
  const std::size_t xin = batched ? x.shape()[1] : x.shape()[0];
  if (xin != in_dim) shape_fail("linear", shape_str(x.shape()) + " against weight " + shape_str(weight.shape()));

  std::vector<double> out(n * out_dim);
  const double* X = x.values().data();
  const double* W = weight.values().data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = X + r * in_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = W + o * in_dim;
      double s = 0.0;
      for (std::size_t p = 0; p < in_dim; ++p) s += wr[p] * xr[p];
      out[r * out_dim + o] = s;
    }
  }
  Tensor y = batched ? make_result({n, out_dim}, std::move(out)) : make_result({out_dim}, std::move(out));
  if (needs_record({&x, &weight})) {
    Impl* yi = y.impl();
    Tape::active()->record("linear", {x, weight}, y, [x, weight, yi, n, in_dim, out_dim] {
      const double* G = yi->grad.data();
      if (double* gx = grad_target(x)) {
        const double* W = weight.values().data();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t o = 0; o < out_dim; ++o) {
            const double g = G[r * out_dim + o];
            if (g == 0.0) continue;
            const double* wr = W + o * in_dim;
            double* gr = gx + r * in_dim;
            for (std::size_t p = 0; p < in_dim; ++p) gr[p] += g * wr[p];
          }
      }
      if (double* gw = grad_target(weight)) {
        const double* X = x.values().data();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t o = 0; o < out_dim; ++o) {
            const double g = G[r * out_dim + o];
            if (g == 0.0) continue;
            const double* xr = X + r * in_dim;
            double* gr = gw + o * in_dim;
            for (std::size_t p = 0; p < in_dim; ++p) gr[p] += g * xr[p];
          }
      }
    });
  }
  return y;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_rank("dot", a, 1);
  require_rank("dot", b, 1);
  if (a.numel() != b.numel()) shape_fail("dot", shape_str(a.shape()) + " . " + shape_str(b.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  Tensor y = make_result({}, {s});
  if (needs_record({&a, &b})) {
    Impl* yi = y.impl();
    Tape::active()->record("dot", {a, b}, y, [a, b, yi] {
      const double g = yi->grad[0];
      const std::size_t n = a.numel();
      if (double* ga = grad_target(a))
        for (std::size_t i = 0; i < n; ++i) ga[i] += g * b[i];
      if (double* gb = grad_target(b))
        for (std::size_t i = 0; i < n; ++i) gb[i] += g * a[i];
    });
  }
  return y;
}

// ---- elementwise binary -----------------------------------------------------

namespace {

enum class BinOp { kAdd, kSub, kMul };

Tensor binary(std::string_view name, BinOp op, const Tensor& a, const Tensor& b) {
  const bool scalar_b = b.numel() == 1 && a.numel() != 1;
  if (!scalar_b && a.shape() != b.shape()) {
    if (!(a.numel() == 1 && b.numel() == 1)) {
      shape_fail(name, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double bv = scalar_b ? b[0] : b[i];
    switch (op) {
      case BinOp::kAdd: out[i] = a[i] + bv; break;
      case BinOp::kSub: out[i] = a[i] - bv; break;
      case BinOp::kMul: out[i] = a[i] * bv; break;
    }
  }
  Tensor y = make_result(a.shape(), std::move(out));
  if (needs_record({&a, &b})) {
    Impl* yi = y.impl();
    Tape::active()->record(name, {a, b}, y, [a, b, yi, op, scalar_b, n] {
      const double* g = yi->grad.data();
      if (double* ga = grad_target(a)) {
        for (std::size_t i = 0; i < n; ++i) {
          ga[i] += op == BinOp::kMul ? g[i] * (scalar_b ? b[0] : b[i]) : g[i];
        }
      }
      if (double* gb = grad_target(b)) {
        for (std::size_t i = 0; i < n; ++i) {
          double d = g[i];
          if (op == BinOp::kSub) d = -d;
          if (op == BinOp::kMul) d *= a[i];
          gb[scalar_b ? 0 : i] += d;
        }
      }
    });
  }
  return y;
}

Tensor row_binary(std::string_view name, BinOp op, const Tensor& m, const Tensor& v) {
  require_rank(name, m, 2);
  require_rank(name, v, 1);
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  if (v.numel() != c) shape_fail(name, shape_str(m.shape()) + " with row " + shape_str(v.shape()));
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = op == BinOp::kMul ? m[i * c + j] * v[j] : m[i * c + j] + v[j];
  Tensor y = make_result({r, c}, std::move(out));
  if (needs_record({&m, &v})) {
    Impl* yi = y.impl();
    Tape::active()->record(name, {m, v}, y, [m, v, yi, op, r, c] {
      const double* g = yi->grad.data();
      if (double* gm = grad_target(m)) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            gm[i * c + j] += op == BinOp::kMul ? g[i * c + j] * v[j] : g[i * c + j];
      }
      if (double* gv = grad_target(v)) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            gv[j] += op == BinOp::kMul ? g[i * c + j] * m[i * c + j] : g[i * c + j];
      }
    });
  }
  return y;
}

// Elementwise unary op given value and derivative-from-(x, y).
template <typename Fwd, typename Deriv>
Tensor unary(std::string_view name, const Tensor& x, Fwd fwd, Deriv deriv) {
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x[i]);
  Tensor y = make_result(x.shape(), std::move(out));
  if (needs_record({&x})) {
    Impl* yi = y.impl();
    Tape::active()->record(name, {x}, y, [x, yi, n, deriv] {
      const double* g = yi->grad.data();
      if (double* gx = grad_target(x)) {
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * deriv(x[i], yi->value[i]);
      }
    });
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::kMul, a, b); }
Tensor add_row(const Tensor& m, const Tensor& v) { return row_binary("add_row", BinOp::kAdd, m, v); }
Tensor mul_row(const Tensor& m, const Tensor& v) { return row_binary("mul_row", BinOp::kMul, m, v); }

Tensor scale(const Tensor& x, double c) {
  return unary("scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

// ---- activations --------------------------------------------------------------

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      "leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& x) {
  require_rank("softmax", x, 1);
  const std::size_t n = x.numel();
  if (n == 0) shape_fail("softmax", "empty input");
  const double mx = *std::max_element(x.values().begin(), x.values().end());
  std::vector<double> out(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += out[i] = std::exp(x[i] - mx);
  for (double& v : out) v /= z;
  Tensor y = make_result({n}, std::move(out));
  if (needs_record({&x})) {
    Impl* yi = y.impl();
    Tape::active()->record("softmax", {x}, y, [x, yi, n] {
      const double* g = yi->grad.data();
      const double* s = yi->value.data();
      double gs = 0.0;
      for (std::size_t i = 0; i < n; ++i) gs += g[i] * s[i];
      if (double* gx = grad_target(x))
        for (std::size_t i = 0; i < n; ++i) gx[i] += s[i] * (g[i] - gs);
    });
  }
  return y;
}

Tensor log_softmax(const Tensor& x) {
  require_rank("log_softmax", x, 1);
  const std::size_t n = x.numel();
  if (n == 0) shape_fail("log_softmax", "empty input");
  const double mx = *std::max_element(x.values().begin(), x.values().end());
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - lse;
  Tensor y = make_result({n}, std::move(out));
  if (needs_record({&x})) {
    Impl* yi = y.impl();
    Tape::active()->record("log_softmax", {x}, y, [x, yi, n] {
      const double* g = yi->grad.data();
      double gs = 0.0;
      for (std::size_t i = 0; i < n; ++i) gs += g[i];
      if (double* gx = grad_target(x))
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] - std::exp(yi->value[i]) * gs;
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor y = make_result({}, {s});
  if (needs_record({&x})) {
    Impl* yi = y.impl();
    Tape::active()->record("sum", {x}, y, [x, yi] {
      const double g = yi->grad[0];
      if (double* gx = grad_target(x))
        for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g;
    });
  }
  return y;
}

// ---- shape plumbing -------------------------------------------------------------

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() == 1 && b.rank() == 1) {
    const std::size_t na = a.numel(), nb = b.numel();
    std::vector<double> out(na + nb);
    std::copy(a.values().begin(), a.values().end(), out.begin());
    std::copy(b.values().begin(), b.values().end(), out.begin() + static_cast<std::ptrdiff_t>(na));
    Tensor y = make_result({na + nb}, std::move(out));
    if (needs_record({&a, &b})) {
      Impl* yi = y.impl();
      Tape::active()->record("concat", {a, b}, y, [a, b, yi, na, nb] {
        const double* g = yi->grad.data();
        if (double* ga = grad_target(a))
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        if (double* gb = grad_target(b))
          for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
      });
    }
    return y;
  }
  if (a.rank() == 2 && b.rank() == 2 && a.shape()[0] == b.shape()[0]) {
    const std::size_t r = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1], c = ca + cb;
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < ca; ++j) out[i * c + j] = a[i * ca + j];
      for (std::size_t j = 0; j < cb; ++j) out[i * c + ca + j] = b[i * cb + j];
    }
    Tensor y = make_result({r, c}, std::move(out));
    if (needs_record({&a, &b})) {
      Impl* yi = y.impl();
      Tape::active()->record("concat", {a, b}, y, [a, b, yi, r, ca, cb, c] {
        const double* g = yi->grad.data();
        if (double* ga = grad_target(a))
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * c + j];
        if (double* gb = grad_target(b))
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * c + ca + j];
      });
    }
    return y;
  }
  shape_fail("concat", shape_str(a.shape()) + " ‖ " + shape_str(b.shape()));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_rank("concat_rows", a, 2);
  require_rank("concat_rows", b, 2);
  if (a.shape()[1] != b.shape()[1]) shape_fail("concat_rows", shape_str(a.shape()) + " / " + shape_str(b.shape()));
  const std::size_t na = a.numel(), nb = b.numel();
  std::vector<double> out(na + nb);
  std::copy(a.values().begin(), a.values().end(), out.begin());
  std::copy(b.values().begin(), b.values().end(), out.begin() + static_cast<std::ptrdiff_t>(na));
  Tensor y = make_result({a.shape()[0] + b.shape()[0], a.shape()[1]}, std::move(out));
  if (needs_record({&a, &b})) {
    Impl* yi = y.impl();
    Tape::active()->record("concat_rows", {a, b}, y, [a, b, yi, na, nb] {
      const double* g = yi->grad.data();
      if (double* ga = grad_target(a))
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      if (double* gb = grad_target(b))
        for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
    });
  }
  return y;
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t len) {
  require_rank("slice", x, 1);
  if (begin + len > x.numel()) shape_fail("slice", "range exceeds " + shape_str(x.shape()));
  std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(begin),
                          x.values().begin() + static_cast<std::ptrdiff_t>(begin + len));
  Tensor y = make_result({len}, std::move(out));
  if (needs_record({&x})) {
    Impl* yi = y.impl();
    Tape::active()->record("slice", {x}, y, [x, yi, begin, len] {
      if (double* gx = grad_target(x))
        for (std::size_t i = 0; i < len; ++i) gx[begin + i] += yi->grad[i];
    });
  }
  return y;
}

Tensor row(const Tensor& m, std::size_t i) {
  require_rank("row", m, 2);
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  if (i >= r) shape_fail("row", "index " + std::to_string(i) + " out of " + shape_str(m.shape()));
  std::vector<double> out(m.values().begin() + static_cast<std::ptrdiff_t>(i * c),
                          m.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
  Tensor y = make_result({c}, std::move(out));
  if (needs_record({&m})) {
    Impl* yi = y.impl();
    Tape::active()->record("row", {m}, y, [m, yi, i, c] {
      if (double* gm = grad_target(m))
        for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += yi->grad[j];
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& m, std::span<const std::uint32_t> idx) {
  const bool vec = m.rank() == 1;
  if (!vec) require_rank("gather_rows", m, 2);
  const std::size_t r = m.shape()[0];
  const std::size_t c = vec ? 1 : m.shape()[1];
  const std::size_t k = idx.size();
  std::vector<double> out(k * c);
  for (std::size_t e = 0; e < k; ++e) {
    if (idx[e] >= r) shape_fail("gather_rows", "index " + std::to_string(idx[e]) + " out of " + shape_str(m.shape()));
    std::copy_n(m.values().begin() + static_cast<std::ptrdiff_t>(idx[e] * c), c, out.begin() + static_cast<std::ptrdiff_t>(e * c));
  }
  Tensor y = vec ? make_result({k}, std::move(out)) : make_result({k, c}, std::move(out));
  if (needs_record({&m})) {
    Impl* yi = y.impl();
    std::vector<std::uint32_t> ids(idx.begin(), idx.end());
    Tape::active()->record("gather_rows", {m}, y, [m, yi, ids = std::move(ids), c] {
      if (double* gm = grad_target(m)) {
        const double* g = yi->grad.data();
        for (std::size_t e = 0; e < ids.size(); ++e) {
          double* dst = gm + ids[e] * c;
          for (std::size_t j = 0; j < c; ++j) dst[j] += g[e * c + j];
        }
      }
    });
  }
  return y;
}

Tensor stack(std::span<const Tensor> rows) {
  if (rows.empty()) shape_fail("stack", "no rows");
  const std::size_t c = rows[0].numel();
  std::vector<double> out;
  out.reserve(rows.size() * c);
  bool record = false;
  for (const Tensor& t : rows) {
    if (t.rank() != 1 || t.numel() != c) shape_fail("stack", "rows must be vectors of equal length");
    out.insert(out.end(), t.values().begin(), t.values().end());
    record = record || t.requires_grad();
  }
  Tensor y = make_result({rows.size(), c}, std::move(out));
  if (record && Tape::active() != nullptr) {
    Impl* yi = y.impl();
    std::vector<Tensor> inputs(rows.begin(), rows.end());
    Tape::active()->record("stack", inputs, y, [inputs, yi, c] {
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (double* g = grad_target(inputs[i]))
          for (std::size_t j = 0; j < c; ++j) g[j] += yi->grad[i * c + j];
      }
    });
  }
  return y;
}

// ---- segments -----------------------------------------------------------------

namespace {
void check_offsets(std::string_view op, std::span<const std::uint32_t> offsets, std::size_t n) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != n) {
    shape_fail(op, "offsets must start at 0 and end at " + std::to_string(n));
  }
  for (std::size_t s = 1; s < offsets.size(); ++s) {
    if (offsets[s] < offsets[s - 1]) shape_fail(op, "offsets must be non-decreasing");
  }
}
}  // namespace

Tensor segment_softmax(const Tensor& x, std::span<const std::uint32_t> offsets) {
  require_rank("segment_softmax", x, 1);
  check_offsets("segment_softmax", offsets, x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t b = offsets[s], e = offsets[s + 1];
    if (b == e) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = b; i < e; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (std::size_t i = b; i < e; ++i) z += out[i] = std::exp(x[i] - mx);
    for (std::size_t i = b; i < e; ++i) out[i] /= z;
  }
  Tensor y = make_result(x.shape(), std::move(out));
  if (needs_record({&x})) {
    Impl* yi = y.impl();
    std::vector<std::uint32_t> offs(offsets.begin(), offsets.end());
    Tape::active()->record("segment_softmax", {x}, y, [x, yi, offs = std::move(offs)] {
      double* gx = grad_target(x);
      if (gx == nullptr) return;
      const double* g = yi->grad.data();
      const double* sv = yi->value.data();
      for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
        double gs = 0.0;
        for (std::size_t i = offs[s]; i < offs[s + 1]; ++i) gs += g[i] * sv[i];
        for (std::size_t i = offs[s]; i < offs[s + 1]; ++i) gx[i] += sv[i] * (g[i] - gs);
      }
    });
  }
  return y;
}

Tensor segment_weighted_sum(const Tensor& w, const Tensor& rows, std::span<const std::uint32_t> offsets) {
  require_rank("segment_weighted_sum", w, 1);
  require_rank("segment_weighted_sum", rows, 2);
  const std::size_t k = rows.shape()[0], c = rows.shape()[1];
  if (w.numel() != k) shape_fail("segment_weighted_sum", "weights " + shape_str(w.shape()) + " for rows " + shape_str(rows.shape()));
  check_offsets("segment_weighted_sum", offsets, k);
  const std::size_t segs = offsets.size() - 1;
  std::vector<double> out(segs * c, 0.0);
  for (std::size_t s = 0; s < segs; ++s)
    for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) {
      const double we = w[e];
      for (std::size_t j = 0; j < c; ++j) out[s * c + j] += we * rows[e * c + j];
    }
  Tensor y = make_result({segs, c}, std::move(out));
  if (needs_record({&w, &rows})) {
    Impl* yi = y.impl();
    std::vector<std::uint32_t> offs(offsets.begin(), offsets.end());
    Tape::active()->record("segment_weighted_sum", {w, rows}, y, [w, rows, yi, offs = std::move(offs), c] {
      const double* g = yi->grad.data();
      double* gw = grad_target(w);
      double* gr = grad_target(rows);
      for (std::size_t s = 0; s + 1 < offs.size(); ++s)
        for (std::size_t e = offs[s]; e < offs[s + 1]; ++e) {
          if (gw) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += g[s * c + j] * rows[e * c + j];
            gw[e] += acc;
          }
          if (gr) {
            const double we = w[e];
            for (std::size_t j = 0; j < c; ++j) gr[e * c + j] += we * g[s * c + j];
          }
        }
    });
  }
  return y;
}

// ---- finite differences ---------------------------------------------------------

double finite_difference_check(const std::function<Tensor()>& f, std::span<Tensor> params, double eps) {
  std::vector<bool> had_grad_flag;
  for (Tensor& p : params) {
    had_grad_flag.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  double worst = 0.0;
  NoGradScope no_grad;
  for (Tensor& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto vals = p.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double fp = f().item();
      vals[i] = orig - eps;
      const double fm = f().item();
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].zero_grad();
    params[i].set_requires_grad(had_grad_flag[i]);
  }
  return worst;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point, double eps) {
  Tensor x = point.clone(true);
  std::array<Tensor, 1> params{x};
  return finite_difference_check([&] { return f(x); }, params, eps);
}

}  // namespace conde
