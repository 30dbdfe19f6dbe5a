// SPDX-License-Identifier: Apache-2.0

#include "vta/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace vta {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void Tensor::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void Tensor::zero_grad() {
  std::fill(grad.begin(), grad.end(), 0.0);
}

TensorPtr make_tensor(Shape shape, double fill, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values.assign(numel(t->shape), fill);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr make_tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ValidationError("tensor shape " + shape_str(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
  }
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values = std::move(values);
  t->requires_grad = requires_grad;
  return t;
}

void check_finite(const Tensor& t, const std::string& what) {
  for (double v : t.values) {
    if (!std::isfinite(v)) throw NumericalError("non-finite value in " + what);
  }
}

namespace {

// Decomposes a shape around `axis` into (outer, n, inner) so that flat
// index = (o * n + a) * inner + i.
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ValidationError("axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                          " vs " + shape_str(b.shape));
  }
}

}  // namespace

TensorPtr Tape::record(TensorPtr out, bool needs_grad, std::function<void()> back) {
  out->requires_grad = needs_grad;
  if (needs_grad) {
    out->ensure_grad();
    nodes_.push_back({std::move(back)});
  }
  return out;
}

TensorPtr Tape::record_custom(TensorPtr out, std::function<void()> back) {
  return record(std::move(out), true, std::move(back));
}

void Tape::backward(const TensorPtr& loss) {
  if (loss->size() != 1) {
    throw ValidationError("backward: loss must be scalar, got " + shape_str(loss->shape));
  }
  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() < 2 || b->shape.size() != 2) {
    throw ValidationError("matmul: need [..,m,k] x [k,n], got " + shape_str(a->shape) +
                          " x " + shape_str(b->shape));
  }
  const std::size_t k = a->shape[a->shape.size() - 1];
  const std::size_t m = a->shape[a->shape.size() - 2];
  if (b->shape[0] != k) {
    throw ValidationError("matmul: inner dimensions disagree, " + shape_str(a->shape) +
                          " x " + shape_str(b->shape));
  }
  const std::size_t n = b->shape[1];
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < a->shape.size(); ++i) batch *= a->shape[i];

  Shape out_shape = a->shape;
  out_shape.back() = n;
  auto out = make_tensor(out_shape);

  const double* av = a->values.data();
  const double* bv = b->values.data();
  double* ov = out->values.data();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* A = av + bi * m * k;
    double* C = ov + bi * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      double* __restrict crow = C + i * n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = A[i * k + kk];
        if (aik == 0.0) continue;
        const double* __restrict brow = bv + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    }
  }

  bool needs = a->requires_grad || b->requires_grad;
  return record(out, needs, [a, b, out, batch, m, k, n]() {
    const double* g = out->grad.data();
    if (a->requires_grad) {
      a->ensure_grad();
      double* da = a->grad.data();
      const double* bv = b->values.data();
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* G = g + bi * m * n;
        double* DA = da + bi * m * k;
        for (std::size_t i = 0; i < m; ++i) {
          const double* __restrict grow = G + i * n;
          double* darow = DA + i * k;
          // dA[i,kk] = <G row i, B row kk>; both contiguous
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double* __restrict brow = bv + kk * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            darow[kk] += acc;
          }
        }
      }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      double* db = b->grad.data();
      const double* av = a->values.data();
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* A = av + bi * m * k;
        const double* G = g + bi * m * n;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = A[i * k + kk];
            if (aik == 0.0) continue;
            const double* __restrict grow = G + i * n;
            double* __restrict dbrow = db + kk * n;
            for (std::size_t j = 0; j < n; ++j) dbrow[j] += aik * grow[j];
          }
        }
      }
    }
  });
}

TensorPtr Tape::bmm(const TensorPtr& a, const TensorPtr& b, bool transpose_b) {
  if (a->shape.size() != 3 || b->shape.size() != 3 || a->shape[0] != b->shape[0]) {
    throw ValidationError("bmm: need [N,m,k] x [N,k,n], got " + shape_str(a->shape) +
                          " x " + shape_str(b->shape));
  }
  const std::size_t N = a->shape[0], m = a->shape[1], k = a->shape[2];
  const std::size_t bk = transpose_b ? b->shape[2] : b->shape[1];
  const std::size_t n = transpose_b ? b->shape[1] : b->shape[2];
  if (bk != k) {
    throw ValidationError("bmm: inner dimensions disagree, " + shape_str(a->shape) +
                          " x " + shape_str(b->shape));
  }
  auto out = make_tensor({N, m, n});
  auto b_at = [&](const double* B, std::size_t kk, std::size_t j) {
    return transpose_b ? B[j * k + kk] : B[kk * n + j];
  };
  for (std::size_t bi = 0; bi < N; ++bi) {
    const double* A = a->values.data() + bi * m * k;
    const double* B = b->values.data() + bi * k * n;
    double* C = out->values.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = A[i * k + kk];
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] += aik * b_at(B, kk, j);
      }
  }
  bool needs = a->requires_grad || b->requires_grad;
  return record(out, needs, [a, b, out, N, m, k, n, transpose_b]() {
    for (std::size_t bi = 0; bi < N; ++bi) {
      const double* A = a->values.data() + bi * m * k;
      const double* B = b->values.data() + bi * k * n;
      const double* G = out->grad.data() + bi * m * n;
      if (a->requires_grad) {
        a->ensure_grad();
        double* DA = a->grad.data() + bi * m * k;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = G[i * n + j];
            if (gij == 0.0) continue;
            for (std::size_t kk = 0; kk < k; ++kk)
              DA[i * k + kk] += gij * (transpose_b ? B[j * k + kk] : B[kk * n + j]);
          }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        double* DB = b->grad.data() + bi * k * n;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = G[i * n + j];
            if (gij == 0.0) continue;
            for (std::size_t kk = 0; kk < k; ++kk) {
              if (transpose_b)
                DB[j * k + kk] += gij * A[i * k + kk];
              else
                DB[kk * n + j] += gij * A[i * k + kk];
            }
          }
      }
    }
  });
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(*a, *b, "add");
  auto out = make_tensor(a->shape);
  for (std::size_t i = 0; i < out->size(); ++i)
    out->values[i] = a->values[i] + b->values[i];
  bool needs = a->requires_grad || b->requires_grad;
  return record(out, needs, [a, b, out]() {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < out->size(); ++i) b->grad[i] += out->grad[i];
    }
  });
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(*a, *b, "mul");
  auto out = make_tensor(a->shape);
  for (std::size_t i = 0; i < out->size(); ++i)
    out->values[i] = a->values[i] * b->values[i];
  bool needs = a->requires_grad || b->requires_grad;
  return record(out, needs, [a, b, out]() {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < out->size(); ++i)
        a->grad[i] += out->grad[i] * b->values[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < out->size(); ++i)
        b->grad[i] += out->grad[i] * a->values[i];
    }
  });
}

TensorPtr Tape::scale(const TensorPtr& x, double c) {
  auto out = make_tensor(x->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = x->values[i] * c;
  return record(out, x->requires_grad, [x, out, c]() {
    x->ensure_grad();
    for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i] * c;
  });
}

TensorPtr Tape::scale_by(const TensorPtr& x, const TensorPtr& s) {
  if (s->size() != 1) throw ValidationError("scale_by: scale must be a [1] tensor");
  const double c = s->values[0];
  auto out = make_tensor(x->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = x->values[i] * c;
  bool needs = x->requires_grad || s->requires_grad;
  return record(out, needs, [x, s, out, c]() {
    if (x->requires_grad) {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i] * c;
    }
    if (s->requires_grad) {
      s->ensure_grad();
      double acc = 0.0;
      for (std::size_t i = 0; i < out->size(); ++i) acc += out->grad[i] * x->values[i];
      s->grad[0] += acc;
    }
  });
}

TensorPtr Tape::exp(const TensorPtr& x) {
  auto out = make_tensor(x->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = std::exp(x->values[i]);
  return record(out, x->requires_grad, [x, out]() {
    x->ensure_grad();
    for (std::size_t i = 0; i < out->size(); ++i)
      x->grad[i] += out->grad[i] * out->values[i];
  });
}

TensorPtr Tape::gelu(const TensorPtr& x) {
  auto out = make_tensor(x->shape);
  // cache the gaussian cdf so backward only needs the (cheaper) pdf
  auto cdf = std::make_shared<std::vector<double>>(x->size());
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < out->size(); ++i) {
    (*cdf)[i] = 0.5 * (1.0 + std::erf(x->values[i] * inv_sqrt2));
    out->values[i] = x->values[i] * (*cdf)[i];
  }
  return record(out, x->requires_grad, [x, out, cdf]() {
    x->ensure_grad();
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    for (std::size_t i = 0; i < out->size(); ++i) {
      const double xi = x->values[i];
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * xi * xi);
      x->grad[i] += out->grad[i] * ((*cdf)[i] + xi * pdf);
    }
  });
}

TensorPtr Tape::add_bias(const TensorPtr& x, const TensorPtr& b) {
  if (x->shape.empty() || b->shape.size() != 1 || b->shape[0] != x->shape.back()) {
    throw ValidationError("add_bias: bias " + shape_str(b->shape) +
                          " does not match last axis of " + shape_str(x->shape));
  }
  const std::size_t d = b->shape[0];
  const std::size_t rows = x->size() / d;
  auto out = make_tensor(x->shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j)
      out->values[r * d + j] = x->values[r * d + j] + b->values[j];
  bool needs = x->requires_grad || b->requires_grad;
  return record(out, needs, [x, b, out, rows, d]() {
    if (x->requires_grad) {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) b->grad[j] += out->grad[r * d + j];
    }
  });
}

TensorPtr Tape::add_along_axis(const TensorPtr& x, const TensorPtr& table,
                               std::size_t axis) {
  const auto view = axis_view(x->shape, axis);
  const std::size_t d = x->shape.back();
  if (table->shape != Shape{view.n, d}) {
    throw ValidationError("add_along_axis: table " + shape_str(table->shape) +
                          " does not match axis " + std::to_string(axis) + " of " +
                          shape_str(x->shape));
  }
  auto out = make_tensor(x->shape);
  for (std::size_t i = 0; i < x->size(); ++i) {
    const std::size_t a = (i / view.inner) % view.n;
    out->values[i] = x->values[i] + table->values[a * d + i % d];
  }
  bool needs = x->requires_grad || table->requires_grad;
  return record(out, needs, [x, table, out, view, d]() {
    if (x->requires_grad) {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i];
    }
    if (table->requires_grad) {
      table->ensure_grad();
      for (std::size_t i = 0; i < out->size(); ++i) {
        const std::size_t a = (i / view.inner) % view.n;
        table->grad[a * d + i % d] += out->grad[i];
      }
    }
  });
}

TensorPtr Tape::softmax(const TensorPtr& x, std::size_t axis) {
  const auto view = axis_view(x->shape, axis);
  auto out = make_tensor(x->shape);
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t in = 0; in < view.inner; ++in) {
      const std::size_t base = o * view.n * view.inner + in;
      double mx = x->values[base];
      for (std::size_t a = 1; a < view.n; ++a)
        mx = std::max(mx, x->values[base + a * view.inner]);
      double z = 0.0;
      for (std::size_t a = 0; a < view.n; ++a) {
        const double e = std::exp(x->values[base + a * view.inner] - mx);
        out->values[base + a * view.inner] = e;
        z += e;
      }
      for (std::size_t a = 0; a < view.n; ++a) out->values[base + a * view.inner] /= z;
    }
  return record(out, x->requires_grad, [x, out, view]() {
    x->ensure_grad();
    for (std::size_t o = 0; o < view.outer; ++o)
      for (std::size_t in = 0; in < view.inner; ++in) {
        const std::size_t base = o * view.n * view.inner + in;
        double dot = 0.0;
        for (std::size_t a = 0; a < view.n; ++a) {
          const std::size_t i = base + a * view.inner;
          dot += out->grad[i] * out->values[i];
        }
        for (std::size_t a = 0; a < view.n; ++a) {
          const std::size_t i = base + a * view.inner;
          x->grad[i] += out->values[i] * (out->grad[i] - dot);
        }
      }
  });
}

TensorPtr Tape::log_softmax(const TensorPtr& x, std::size_t axis) {
  const auto view = axis_view(x->shape, axis);
  auto out = make_tensor(x->shape);
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t in = 0; in < view.inner; ++in) {
      const std::size_t base = o * view.n * view.inner + in;
      double mx = x->values[base];
      for (std::size_t a = 1; a < view.n; ++a)
        mx = std::max(mx, x->values[base + a * view.inner]);
      double z = 0.0;
      for (std::size_t a = 0; a < view.n; ++a)
        z += std::exp(x->values[base + a * view.inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t a = 0; a < view.n; ++a) {
        const std::size_t i = base + a * view.inner;
        out->values[i] = x->values[i] - lz;
      }
    }
  return record(out, x->requires_grad, [x, out, view]() {
    x->ensure_grad();
    for (std::size_t o = 0; o < view.outer; ++o)
      for (std::size_t in = 0; in < view.inner; ++in) {
        const std::size_t base = o * view.n * view.inner + in;
        double gsum = 0.0;
        for (std::size_t a = 0; a < view.n; ++a)
          gsum += out->grad[base + a * view.inner];
        for (std::size_t a = 0; a < view.n; ++a) {
          const std::size_t i = base + a * view.inner;
          x->grad[i] += out->grad[i] - std::exp(out->values[i]) * gsum;
        }
      }
  });
}

TensorPtr Tape::l2_normalize(const TensorPtr& x, std::size_t axis, double eps) {
  const auto view = axis_view(x->shape, axis);
  auto out = make_tensor(x->shape);
  auto norms = std::make_shared<std::vector<double>>(view.outer * view.inner);
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t in = 0; in < view.inner; ++in) {
      const std::size_t base = o * view.n * view.inner + in;
      double sq = 0.0;
      for (std::size_t a = 0; a < view.n; ++a) {
        const double v = x->values[base + a * view.inner];
        sq += v * v;
      }
      double nrm = std::sqrt(sq);
      if (nrm < eps) {
        nrm = eps;
        ++zero_norm_slices_;
      }
      (*norms)[o * view.inner + in] = nrm;
      for (std::size_t a = 0; a < view.n; ++a) {
        const std::size_t i = base + a * view.inner;
        out->values[i] = x->values[i] / nrm;
      }
    }
  return record(out, x->requires_grad, [x, out, view, norms, eps]() {
    x->ensure_grad();
    for (std::size_t o = 0; o < view.outer; ++o)
      for (std::size_t in = 0; in < view.inner; ++in) {
        const std::size_t base = o * view.n * view.inner + in;
        const double nrm = (*norms)[o * view.inner + in];
        if (nrm <= eps) {
          // clamped slice: out = x / eps, constant Jacobian
          for (std::size_t a = 0; a < view.n; ++a) {
            const std::size_t i = base + a * view.inner;
            x->grad[i] += out->grad[i] / nrm;
          }
          continue;
        }
        double dot = 0.0;
        for (std::size_t a = 0; a < view.n; ++a) {
          const std::size_t i = base + a * view.inner;
          dot += out->grad[i] * out->values[i];
        }
        for (std::size_t a = 0; a < view.n; ++a) {
          const std::size_t i = base + a * view.inner;
          x->grad[i] += (out->grad[i] - out->values[i] * dot) / nrm;
        }
      }
  });
}

TensorPtr Tape::sum(const TensorPtr& x) {
  auto out = make_tensor({1});
  out->values[0] = std::accumulate(x->values.begin(), x->values.end(), 0.0);
  return record(out, x->requires_grad, [x, out]() {
    x->ensure_grad();
    const double g = out->grad[0];
    for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += g;
  });
}

TensorPtr Tape::mean_axis(const TensorPtr& x, std::size_t axis) {
  const auto view = axis_view(x->shape, axis);
  Shape out_shape;
  for (std::size_t i = 0; i < x->shape.size(); ++i)
    if (i != axis) out_shape.push_back(x->shape[i]);
  if (out_shape.empty()) out_shape = {1};
  auto out = make_tensor(out_shape);
  const double inv = 1.0 / static_cast<double>(view.n);
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t in = 0; in < view.inner; ++in) {
      double acc = 0.0;
      for (std::size_t a = 0; a < view.n; ++a)
        acc += x->values[(o * view.n + a) * view.inner + in];
      out->values[o * view.inner + in] = acc * inv;
    }
  return record(out, x->requires_grad, [x, out, view, inv]() {
    x->ensure_grad();
    for (std::size_t o = 0; o < view.outer; ++o)
      for (std::size_t in = 0; in < view.inner; ++in) {
        const double g = out->grad[o * view.inner + in] * inv;
        for (std::size_t a = 0; a < view.n; ++a)
          x->grad[(o * view.n + a) * view.inner + in] += g;
      }
  });
}

TensorPtr Tape::reshape(const TensorPtr& x, Shape shape) {
  if (numel(shape) != x->size()) {
    throw ValidationError("reshape: " + shape_str(x->shape) + " -> " + shape_str(shape) +
                          " changes element count");
  }
  auto out = make_tensor(std::move(shape), x->values);
  return record(out, x->requires_grad, [x, out]() {
    x->ensure_grad();
    for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i];
  });
}

TensorPtr Tape::transpose(const TensorPtr& x, const std::vector<std::size_t>& perm) {
  if (perm.size() != x->shape.size()) {
    throw ValidationError("transpose: permutation rank mismatch for " +
                          shape_str(x->shape));
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = x->shape[perm[i]];
  const std::size_t rank = perm.size();
  std::vector<std::size_t> in_strides(rank, 1), out_strides(rank, 1);
  for (std::size_t i = rank - 1; i-- > 0;)
    in_strides[i] = in_strides[i + 1] * x->shape[i + 1];
  for (std::size_t i = rank - 1; i-- > 0;)
    out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
  // index map from output flat position to input flat position
  auto idx_map = std::make_shared<std::vector<std::size_t>>(x->size());
  std::vector<std::size_t> coord(rank, 0);
  for (std::size_t oi = 0; oi < x->size(); ++oi) {
    std::size_t rem = oi, src = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      const std::size_t c = rem / out_strides[i];
      rem %= out_strides[i];
      src += c * in_strides[perm[i]];
    }
    (*idx_map)[oi] = src;
  }
  auto out = make_tensor(out_shape);
  for (std::size_t oi = 0; oi < out->size(); ++oi)
    out->values[oi] = x->values[(*idx_map)[oi]];
  return record(out, x->requires_grad, [x, out, idx_map]() {
    x->ensure_grad();
    for (std::size_t oi = 0; oi < out->size(); ++oi)
      x->grad[(*idx_map)[oi]] += out->grad[oi];
  });
}

TensorPtr Tape::embedding(const TensorPtr& table, const std::vector<std::size_t>& ids,
                          Shape id_shape) {
  if (table->shape.size() != 2) {
    throw ValidationError("embedding: table must be [V,d], got " +
                          shape_str(table->shape));
  }
  if (numel(id_shape) != ids.size()) {
    throw ValidationError("embedding: id shape does not match id count");
  }
  const std::size_t V = table->shape[0], d = table->shape[1];
  for (std::size_t id : ids) {
    if (id >= V) {
      throw ValidationError("embedding: token id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(V));
    }
  }
  Shape out_shape = std::move(id_shape);
  out_shape.push_back(d);
  auto out = make_tensor(out_shape);
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(table->values.begin() + ids[r] * d, d, out->values.begin() + r * d);
  auto ids_copy = std::make_shared<std::vector<std::size_t>>(ids);
  return record(out, table->requires_grad, [table, out, ids_copy, d]() {
    table->ensure_grad();
    for (std::size_t r = 0; r < ids_copy->size(); ++r) {
      const std::size_t row = (*ids_copy)[r];
      for (std::size_t j = 0; j < d; ++j)
        table->grad[row * d + j] += out->grad[r * d + j];
    }
  });
}

TensorPtr Tape::conv2d_3x3(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  if (x->shape.size() < 3) {
    throw ValidationError("conv2d_3x3: input must be [..,H,W,C], got " +
                          shape_str(x->shape));
  }
  const std::size_t C = x->shape.back();
  const std::size_t W = x->shape[x->shape.size() - 2];
  const std::size_t H = x->shape[x->shape.size() - 3];
  if (w->shape.size() != 4 || w->shape[1] != 3 || w->shape[2] != 3 ||
      w->shape[3] != C) {
    throw ValidationError("conv2d_3x3: weights " + shape_str(w->shape) +
                          " do not match input channels of " + shape_str(x->shape));
  }
  const std::size_t K = w->shape[0];
  if (b->shape != Shape{K}) {
    throw ValidationError("conv2d_3x3: bias " + shape_str(b->shape) + " must be [" +
                          std::to_string(K) + "]");
  }
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 3 < x->shape.size(); ++i) batch *= x->shape[i];
  Shape out_shape = x->shape;
  out_shape.back() = K;
  auto out = make_tensor(out_shape);

  const auto in_at = [&](const double* X, long i, long j, std::size_t c) -> double {
    if (i < 0 || j < 0 || i >= static_cast<long>(H) || j >= static_cast<long>(W))
      return 0.0;
    return X[(static_cast<std::size_t>(i) * W + static_cast<std::size_t>(j)) * C + c];
  };
  for (std::size_t n = 0; n < batch; ++n) {
    const double* X = x->values.data() + n * H * W * C;
    double* O = out->values.data() + n * H * W * K;
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        for (std::size_t k = 0; k < K; ++k) {
          double acc = b->values[k];
          for (std::size_t di = 0; di < 3; ++di)
            for (std::size_t dj = 0; dj < 3; ++dj) {
              const long ii = static_cast<long>(i) + static_cast<long>(di) - 1;
              const long jj = static_cast<long>(j) + static_cast<long>(dj) - 1;
              const double* wrow = w->values.data() + ((k * 3 + di) * 3 + dj) * C;
              for (std::size_t c = 0; c < C; ++c)
                acc += wrow[c] * in_at(X, ii, jj, c);
            }
          O[(i * W + j) * K + k] = acc;
        }
  }
  bool needs = x->requires_grad || w->requires_grad || b->requires_grad;
  return record(out, needs, [x, w, b, out, batch, H, W, C, K]() {
    const bool dx = x->requires_grad, dw = w->requires_grad, db = b->requires_grad;
    if (dx) x->ensure_grad();
    if (dw) w->ensure_grad();
    if (db) b->ensure_grad();
    for (std::size_t n = 0; n < batch; ++n) {
      const double* X = x->values.data() + n * H * W * C;
      const double* G = out->grad.data() + n * H * W * K;
      double* DX = dx ? x->grad.data() + n * H * W * C : nullptr;
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
          for (std::size_t k = 0; k < K; ++k) {
            const double g = G[(i * W + j) * K + k];
            if (g == 0.0) continue;
            if (db) b->grad[k] += g;
            for (std::size_t di = 0; di < 3; ++di)
              for (std::size_t dj = 0; dj < 3; ++dj) {
                const long ii = static_cast<long>(i) + static_cast<long>(di) - 1;
                const long jj = static_cast<long>(j) + static_cast<long>(dj) - 1;
                if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) ||
                    jj >= static_cast<long>(W))
                  continue;
                const std::size_t xoff =
                    (static_cast<std::size_t>(ii) * W + static_cast<std::size_t>(jj)) * C;
                const std::size_t woff = ((k * 3 + di) * 3 + dj) * C;
                for (std::size_t c = 0; c < C; ++c) {
                  if (dw) w->grad[woff + c] += g * X[xoff + c];
                  if (dx) DX[xoff + c] += g * w->values[woff + c];
                }
              }
          }
    }
  });
}

TensorPtr Tape::take_axis(const TensorPtr& x, std::size_t axis, std::size_t index) {
  const auto view = axis_view(x->shape, axis);
  if (index >= view.n) {
    throw ValidationError("take_axis: index " + std::to_string(index) +
                          " out of range for " + shape_str(x->shape));
  }
  Shape out_shape;
  for (std::size_t i = 0; i < x->shape.size(); ++i)
    if (i != axis) out_shape.push_back(x->shape[i]);
  if (out_shape.empty()) out_shape = {1};
  auto out = make_tensor(out_shape);
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t in = 0; in < view.inner; ++in)
      out->values[o * view.inner + in] =
          x->values[(o * view.n + index) * view.inner + in];
  return record(out, x->requires_grad, [x, out, view, index]() {
    x->ensure_grad();
    for (std::size_t o = 0; o < view.outer; ++o)
      for (std::size_t in = 0; in < view.inner; ++in)
        x->grad[(o * view.n + index) * view.inner + in] +=
            out->grad[o * view.inner + in];
  });
}

TensorPtr Tape::prepend_token(const TensorPtr& tok, const TensorPtr& x) {
  if (x->shape.size() != 3 || tok->shape != Shape{x->shape[2]}) {
    throw ValidationError("prepend_token: need tok [d] and x [B,L,d], got " +
                          shape_str(tok->shape) + " and " + shape_str(x->shape));
  }
  const std::size_t B = x->shape[0], L = x->shape[1], d = x->shape[2];
  auto out = make_tensor({B, L + 1, d});
  for (std::size_t bi = 0; bi < B; ++bi) {
    std::copy_n(tok->values.begin(), d, out->values.begin() + bi * (L + 1) * d);
    std::copy_n(x->values.begin() + bi * L * d, L * d,
                out->values.begin() + bi * (L + 1) * d + d);
  }
  bool needs = tok->requires_grad || x->requires_grad;
  return record(out, needs, [tok, x, out, B, L, d]() {
    if (tok->requires_grad) {
      tok->ensure_grad();
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t j = 0; j < d; ++j)
          tok->grad[j] += out->grad[bi * (L + 1) * d + j];
    }
    if (x->requires_grad) {
      x->ensure_grad();
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t i = 0; i < L * d; ++i)
          x->grad[bi * L * d + i] += out->grad[bi * (L + 1) * d + d + i];
    }
  });
}

TensorPtr Tape::diag_mean(const TensorPtr& x) {
  if (x->shape.size() != 2 || x->shape[0] != x->shape[1]) {
    throw ValidationError("diag_mean: need a square matrix, got " +
                          shape_str(x->shape));
  }
  const std::size_t N = x->shape[0];
  auto out = make_tensor({1});
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) acc += x->values[i * N + i];
  out->values[0] = acc / static_cast<double>(N);
  return record(out, x->requires_grad, [x, out, N]() {
    x->ensure_grad();
    const double g = out->grad[0] / static_cast<double>(N);
    for (std::size_t i = 0; i < N; ++i) x->grad[i * N + i] += g;
  });
}

double gradcheck(const ScalarFn& f, const std::vector<TensorPtr>& inputs, double h) {
  // analytic pass
  std::vector<std::vector<double>> analytic(inputs.size());
  {
    for (const auto& in : inputs) {
      in->ensure_grad();
      in->zero_grad();
    }
    Tape tape;
    auto loss = f(tape, inputs);
    tape.backward(loss);
    for (std::size_t i = 0; i < inputs.size(); ++i) analytic[i] = inputs[i]->grad;
  }
  double max_rel = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i]->requires_grad) continue;
    for (std::size_t j = 0; j < inputs[i]->size(); ++j) {
      const double orig = inputs[i]->values[j];
      inputs[i]->values[j] = orig + h;
      double fp, fm;
      {
        Tape tape;
        fp = f(tape, inputs)->values[0];
      }
      inputs[i]->values[j] = orig - h;
      {
        Tape tape;
        fm = f(tape, inputs)->values[0];
      }
      inputs[i]->values[j] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double rel =
          std::abs(analytic[i][j] - numeric) / std::max(1.0, std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace vta
