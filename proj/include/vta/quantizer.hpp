// SPDX-License-Identifier: Apache-2.0
//
// Patch-feature quantization: nearest learnable cluster by squared
// euclidean distance, straight-through gradients, EMA codebook updates.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "vta/tensor.hpp"

namespace vta {

struct Codebook {
  std::size_t dim = 0;
  std::vector<double> vectors;     // [M * dim]
  std::vector<double> ema_counts;  // [M]
  std::vector<double> ema_sums;    // [M * dim]
  double decay = 0.99;
  double eps = 1e-5;
  std::size_t reseed_patience = 200;
  std::vector<std::size_t> steps_unused;  // consecutive updates with no assignment
  std::vector<std::uint64_t> usage;       // assignment histogram since last reset

  std::size_t size() const { return ema_counts.size(); }
  const double* vec(std::size_t m) const { return vectors.data() + m * dim; }

  static Codebook init(std::size_t M, std::size_t dim, std::uint64_t seed);
  void reset_usage();
  // exp(entropy of the usage histogram); in [1, M]
  double perplexity() const;
};

struct AssignmentMap {
  Shape shape;                       // shape of f without the feature axis
  std::vector<std::size_t> indices;  // one per feature vector, values in [0, M)
};

// Nearest cluster per feature row; ties go to the lowest index.
// f is [..., d]; no gradient flows through this.
AssignmentMap assign(const Tensor& f, const Codebook& cb);

// Forward: assigned cluster vectors.  Backward: incoming gradient is
// copied unchanged to f; the codebook gets none through this path.
TensorPtr quantize(Tape& tape, const TensorPtr& f, Codebook& cb,
                   AssignmentMap* out_assignments = nullptr);

// EMA update of counts/sums, then vectors[m] = sums[m] / smoothed count.
// Clusters unassigned for reseed_patience updates are re-seeded to a
// random feature row from f. Also refreshes the usage histogram.
void momentum_update(const Tensor& f_detached, const AssignmentMap& am, Codebook& cb,
                     std::mt19937_64& rng);

}  // namespace vta
