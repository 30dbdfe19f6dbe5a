// SPDX-License-Identifier: Apache-2.0
//
// Region aggregation: a K-channel 3x3 mask head over the quantized grid,
// spatial softmax per region, then mask-weighted pooling.

#pragma once

#include <cstdint>

#include "vta/tensor.hpp"

namespace vta {

struct RegionMaskParams {
  TensorPtr w;  // [K, 3, 3, d]
  TensorPtr b;  // [K]

  std::size_t regions() const { return w->shape[0]; }
  static RegionMaskParams init(std::size_t K, std::size_t d, std::uint64_t seed);
};

struct RegionFeatures {
  TensorPtr features;  // [B, K, T, d]
  TensorPtr masks;     // [B, T, K, H', W'], each (b,t,k) slice sums to 1
};

// Row-major spatial unflattening, inverse of patchify's grid order.
// [B, T, L, d] -> [B, T, H', W', d] with L = H' * W'.
TensorPtr reshape_grid(Tape& tape, const TensorPtr& fq, std::size_t grid_h,
                       std::size_t grid_w);

// x is [B, T, H', W', d].
RegionFeatures aggregate(Tape& tape, const TensorPtr& x, const RegionMaskParams& p);

}  // namespace vta
