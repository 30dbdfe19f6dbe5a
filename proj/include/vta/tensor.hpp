// SPDX-License-Identifier: Apache-2.0
//
// Dense tensor substrate with tape-based reverse-mode differentiation.
// Only the primitives the pipeline needs; shapes must match exactly
// (no implicit broadcasting).

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace vta {

using Shape = std::vector<std::size_t>;

// Thrown on contract violations (bad shapes, bad config, bad input files).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when numbers go bad (NaN/Inf, failed gradient check).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until needed; same length as values when present
  bool requires_grad = false;

  std::size_t size() const { return values.size(); }
  void ensure_grad();        // allocate zero-filled grad buffer if absent
  void zero_grad();
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
TensorPtr make_tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

// Throws NumericalError if any value is NaN/Inf.
void check_finite(const Tensor& t, const std::string& what);

// Records primitive ops in execution order; backward() replays them in
// reverse, accumulating (never overwriting) gradients.
class Tape {
 public:
  // out = a @ b.  a is [..., m, k] (leading dims batched), b is [k, n].
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  // Batched matmul: a [N, m, k], b [N, k, n] (or [N, n, k] when transpose_b).
  TensorPtr bmm(const TensorPtr& a, const TensorPtr& b, bool transpose_b = false);
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);   // same shape
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);   // Hadamard, same shape
  TensorPtr scale(const TensorPtr& x, double c);
  // out = x * s where s is a [1] tensor (used for learnable temperature).
  TensorPtr scale_by(const TensorPtr& x, const TensorPtr& s);
  TensorPtr exp(const TensorPtr& x);
  TensorPtr gelu(const TensorPtr& x);
  // b has shape [last dim of x]; added to every row.
  TensorPtr add_bias(const TensorPtr& x, const TensorPtr& b);
  // table is [x.shape[axis], x.shape.back()]; added to every matching slice.
  // Used for positional embedding tables.
  TensorPtr add_along_axis(const TensorPtr& x, const TensorPtr& table, std::size_t axis);
  TensorPtr softmax(const TensorPtr& x, std::size_t axis);
  TensorPtr log_softmax(const TensorPtr& x, std::size_t axis);
  TensorPtr l2_normalize(const TensorPtr& x, std::size_t axis, double eps = 1e-12);
  TensorPtr sum(const TensorPtr& x);                        // -> [1]
  TensorPtr mean_axis(const TensorPtr& x, std::size_t axis);
  TensorPtr reshape(const TensorPtr& x, Shape shape);
  TensorPtr transpose(const TensorPtr& x, const std::vector<std::size_t>& perm);
  // Gathers rows of table [V, d] at ids; out shape = id_shape + [d].
  TensorPtr embedding(const TensorPtr& table, const std::vector<std::size_t>& ids,
                      Shape id_shape);
  // 3x3 cross-correlation, zero "same" padding.
  // x [..., H, W, Cin], w [K, 3, 3, Cin], b [K] -> [..., H, W, K].
  TensorPtr conv2d_3x3(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
  // Drops `axis`, keeping slice `index` along it.
  TensorPtr take_axis(const TensorPtr& x, std::size_t axis, std::size_t index);
  // out[b, 0, :] = tok, out[b, 1 + l, :] = x[b, l, :].  tok is [d], x is [B, L, d].
  TensorPtr prepend_token(const TensorPtr& tok, const TensorPtr& x);
  // Mean of the diagonal of a square matrix -> [1].
  TensorPtr diag_mean(const TensorPtr& x);

  // Escape hatch for ops owned by other modules (the straight-through
  // quantizer). Caller builds `out`; `back` runs during backward().
  TensorPtr record_custom(TensorPtr out, std::function<void()> back);

  // Seeds loss->grad = 1 and replays the tape in reverse. loss must be [1].
  void backward(const TensorPtr& loss);

  // Count of zero slices hit by l2_normalize since construction.
  std::size_t zero_norm_slices() const { return zero_norm_slices_; }

 private:
  struct Node {
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
  std::size_t zero_norm_slices_ = 0;

  TensorPtr record(TensorPtr out, bool needs_grad, std::function<void()> back);
};

// f builds a scalar ([1]) loss from `inputs` on the given tape.
using ScalarFn =
    std::function<TensorPtr(Tape&, const std::vector<TensorPtr>&)>;

// Central finite-difference check of every coordinate of every
// requires_grad input. Returns max over coordinates of
// |analytic - numeric| / max(1, |numeric|).
double gradcheck(const ScalarFn& f, const std::vector<TensorPtr>& inputs,
                 double h = 1e-5);

}  // namespace vta
