// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision tensors with a recorded computation tape and
// reverse-mode gradient accumulation.
//
// Ops record themselves onto the thread's active Tape (see TapeScope) when at
// least one input requires a gradient. With no active tape every op is a plain
// forward evaluation, which is how inference runs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace conde {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when op operands are not conformable.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::int64_t node_id = -1;  // index into the recording tape, -1 for leaves

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return impl_->value; }
  std::span<double> mutable_values() { return impl_->value; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->value[r * cols() + c]; }

  /// Gradient buffer; zero-filled if nothing has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  std::int64_t node_id() const { return impl_->node_id; }

  /// Value copy detached from any tape.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  bool same_as(const Tensor& o) const { return impl_ == o.impl_; }
  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend class Tape;
  friend Tensor make_result(Shape, std::vector<double>);
};

/// Ordered record of differentiable operations (the computation record).
class Tape {
 public:
  struct Node {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Appends a node; the output receives the new node id.
  void record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1, runs every node once in reverse order, then
  /// clears the record. Gradients accumulate into existing buffers.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  static Tape* active();

 private:
  std::vector<Node> nodes_;
  friend class TapeScope;
};

/// Installs a tape as the thread's active record for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording (inference) for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Backward pass over the active tape.
void backward(const Tensor& loss);

inline constexpr double kLeakySlope = 0.2;

// ---- primitives -----------------------------------------------------------

// Products. matmul accepts (m×k)(k×n), (m×k)(k) and (k)(k×n).
Tensor matmul(const Tensor& a, const Tensor& b);
// x·Wᵀ for x of shape (n×in) or (in), W of shape (out×in).
Tensor linear(const Tensor& x, const Tensor& weight);
Tensor dot(const Tensor& a, const Tensor& b);

// Elementwise; the second operand may also be a single-element tensor.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Row broadcast of a vector over every row of a matrix.
Tensor add_row(const Tensor& m, const Tensor& v);
Tensor mul_row(const Tensor& m, const Tensor& v);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
// Gradient is passed only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor sum(const Tensor& x);

// Shape plumbing.
Tensor concat(const Tensor& a, const Tensor& b);       // along last axis
Tensor concat_rows(const Tensor& a, const Tensor& b);  // matrices, along first axis
Tensor slice(const Tensor& x, std::size_t begin, std::size_t len);  // vectors
Tensor row(const Tensor& m, std::size_t i);
Tensor gather_rows(const Tensor& m, std::span<const std::uint32_t> idx);
Tensor stack(std::span<const Tensor> rows);

// Ragged segments: segment s spans [offsets[s], offsets[s+1]).
Tensor segment_softmax(const Tensor& x, std::span<const std::uint32_t> offsets);
// out[s] = Σ_{e in s} w[e] · rows[e]; empty segments give zero rows.
Tensor segment_weighted_sum(const Tensor& w, const Tensor& rows,
                            std::span<const std::uint32_t> offsets);

// ---- gradient checking ----------------------------------------------------

/// Max over coordinates of |analytic − central difference| / max(1, |analytic|),
/// for a scalar-valued function of the listed leaf tensors. The function is
/// re-evaluated at perturbed points, so it must be deterministic.
double finite_difference_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                               double eps = 1e-5);
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double eps = 1e-5);

}  // namespace conde
