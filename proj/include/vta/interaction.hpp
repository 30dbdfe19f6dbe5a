// SPDX-License-Identifier: Apache-2.0
//
// Joint space-time attention over the K x T region tokens: shared linear
// embedding for queries and keys, attention applied to the raw region
// features, no value projection or residuals.

#pragma once

#include <cstdint>
#include <vector>

#include "vta/tensor.hpp"

namespace vta {

struct InteractionParams {
  std::vector<TensorPtr> phi;  // one [d, d_attn] per layer

  std::size_t depth() const { return phi.size(); }
  static InteractionParams init(std::size_t depth, std::size_t d, std::size_t d_attn,
                                std::uint64_t seed);
};

// s is [B, K, T, d]; returns the contextualized features, same shape.
TensorPtr interact(Tape& tape, const TensorPtr& s, const InteractionParams& p);

// Mean over the K and T axes: [B, K, T, d] -> [B, d]. The caller projects
// the result into the shared space.
TensorPtr pool_regions(Tape& tape, const TensorPtr& z);

}  // namespace vta
