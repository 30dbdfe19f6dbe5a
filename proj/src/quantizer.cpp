// SPDX-License-Identifier: Apache-2.0

#include "vta/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vta {

Codebook Codebook::init(std::size_t M, std::size_t dim, std::uint64_t seed) {
  if (M < 2) throw ValidationError("codebook needs at least 2 clusters");
  Codebook cb;
  cb.dim = dim;
  cb.vectors.resize(M * dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (auto& v : cb.vectors) v = dist(rng);
  cb.ema_counts.assign(M, 1.0);
  cb.ema_sums = cb.vectors;
  cb.steps_unused.assign(M, 0);
  cb.usage.assign(M, 0);
  return cb;
}

void Codebook::reset_usage() { std::fill(usage.begin(), usage.end(), 0); }

double Codebook::perplexity() const {
  std::uint64_t total = 0;
  for (auto u : usage) total += u;
  if (total == 0) return 1.0;
  double h = 0.0;
  for (auto u : usage) {
    if (u == 0) continue;
    const double p = static_cast<double>(u) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return std::exp(h);
}

AssignmentMap assign(const Tensor& f, const Codebook& cb) {
  if (f.shape.empty() || f.shape.back() != cb.dim) {
    throw ValidationError("assign: feature dim of " + shape_str(f.shape) +
                          " does not match codebook dim " + std::to_string(cb.dim));
  }
  const std::size_t d = cb.dim, M = cb.size();
  const std::size_t rows = f.size() / d;
  AssignmentMap am;
  am.shape.assign(f.shape.begin(), f.shape.end() - 1);
  am.indices.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = f.values.data() + r * d;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_m = 0;
    for (std::size_t m = 0; m < M; ++m) {
      const double* c = cb.vec(m);
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x[j] - c[j];
        dist += diff * diff;
      }
      if (dist < best) {  // strict: ties keep the lowest index
        best = dist;
        best_m = m;
      }
    }
    am.indices[r] = best_m;
  }
  return am;
}

TensorPtr quantize(Tape& tape, const TensorPtr& f, Codebook& cb,
                   AssignmentMap* out_assignments) {
  AssignmentMap am = assign(*f, cb);
  const std::size_t d = cb.dim;
  auto out = make_tensor(f->shape);
  for (std::size_t r = 0; r < am.indices.size(); ++r)
    std::copy_n(cb.vec(am.indices[r]), d, out->values.begin() + r * d);
  if (out_assignments) *out_assignments = am;
  if (!f->requires_grad) return out;
  return tape.record_custom(out, [f, out]() {
    f->ensure_grad();
    for (std::size_t i = 0; i < out->size(); ++i) f->grad[i] += out->grad[i];
  });
}

void momentum_update(const Tensor& f_detached, const AssignmentMap& am, Codebook& cb,
                     std::mt19937_64& rng) {
  const std::size_t d = cb.dim, M = cb.size();
  const std::size_t rows = am.indices.size();
  std::vector<double> n(M, 0.0);
  std::vector<double> s(M * d, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t m = am.indices[r];
    n[m] += 1.0;
    const double* x = f_detached.values.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) s[m * d + j] += x[j];
    ++cb.usage[m];
  }
  const double g = cb.decay;
  for (std::size_t m = 0; m < M; ++m) {
    cb.ema_counts[m] = g * cb.ema_counts[m] + (1.0 - g) * n[m];
    for (std::size_t j = 0; j < d; ++j)
      cb.ema_sums[m * d + j] = g * cb.ema_sums[m * d + j] + (1.0 - g) * s[m * d + j];
    cb.steps_unused[m] = (n[m] > 0.0) ? 0 : cb.steps_unused[m] + 1;
  }
  // dead-cluster re-seeding to a random current feature
  for (std::size_t m = 0; m < M; ++m) {
    if (cb.steps_unused[m] < cb.reseed_patience || rows == 0) continue;
    std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
    const double* x = f_detached.values.data() + pick(rng) * d;
    cb.ema_counts[m] = 1.0;
    std::copy_n(x, d, cb.ema_sums.begin() + m * d);
    cb.steps_unused[m] = 0;
  }
  double total = 0.0;
  for (std::size_t m = 0; m < M; ++m) total += cb.ema_counts[m];
  if (total <= 0.0) return;
  const double scale = total / (total + static_cast<double>(M) * cb.eps);
  for (std::size_t m = 0; m < M; ++m) {
    const double denom = (cb.ema_counts[m] + cb.eps) * scale;
    for (std::size_t j = 0; j < d; ++j)
      cb.vectors[m * d + j] = cb.ema_sums[m * d + j] / denom;
  }
}

}  // namespace vta
