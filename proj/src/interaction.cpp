// SPDX-License-Identifier: Apache-2.0

#include "vta/interaction.hpp"

#include <cmath>
#include <random>

namespace vta {

InteractionParams InteractionParams::init(std::size_t depth, std::size_t d,
                                          std::size_t d_attn, std::uint64_t seed) {
  if (depth < 1) throw ValidationError("interaction depth must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  InteractionParams p;
  for (std::size_t i = 0; i < depth; ++i) {
    auto w = make_tensor({d, d_attn}, 0.0, true);
    for (auto& v : w->values) v = dist(rng);
    p.phi.push_back(w);
  }
  return p;
}

TensorPtr interact(Tape& tape, const TensorPtr& s, const InteractionParams& p) {
  if (s->shape.size() != 4) {
    throw ValidationError("interact: expected [B,K,T,d], got " + shape_str(s->shape));
  }
  const std::size_t B = s->shape[0], K = s->shape[1], T = s->shape[2], d = s->shape[3];
  auto z = tape.reshape(s, {B, K * T, d});
  for (const auto& w : p.phi) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(w->shape[1]));
    auto e = tape.matmul(z, w);  // shared embedding for queries and keys
    auto attn = tape.softmax(tape.scale(tape.bmm(e, e, /*transpose_b=*/true), scale), 2);
    z = tape.bmm(attn, z);       // attention over the raw features
  }
  return tape.reshape(z, {B, K, T, d});
}

TensorPtr pool_regions(Tape& tape, const TensorPtr& z) {
  if (z->shape.size() != 4) {
    throw ValidationError("pool_regions: expected [B,K,T,d], got " + shape_str(z->shape));
  }
  const std::size_t B = z->shape[0], K = z->shape[1], T = z->shape[2], d = z->shape[3];
  return tape.mean_axis(tape.reshape(z, {B, K * T, d}), 1);
}

}  // namespace vta
