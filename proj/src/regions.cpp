// SPDX-License-Identifier: Apache-2.0

#include "vta/regions.hpp"

#include <cmath>
#include <random>

namespace vta {

RegionMaskParams RegionMaskParams::init(std::size_t K, std::size_t d,
                                        std::uint64_t seed) {
  if (K < 1) throw ValidationError("region mask head needs K >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(9.0 * static_cast<double>(d)));
  RegionMaskParams p;
  p.w = make_tensor({K, 3, 3, d}, 0.0, true);
  for (auto& v : p.w->values) v = dist(rng);
  p.b = make_tensor({K}, 0.0, true);
  return p;
}

TensorPtr reshape_grid(Tape& tape, const TensorPtr& fq, std::size_t grid_h,
                       std::size_t grid_w) {
  if (fq->shape.size() != 4 || fq->shape[2] != grid_h * grid_w) {
    throw ValidationError("reshape_grid: " + shape_str(fq->shape) +
                          " does not unflatten to " + std::to_string(grid_h) + "x" +
                          std::to_string(grid_w));
  }
  return tape.reshape(fq, {fq->shape[0], fq->shape[1], grid_h, grid_w, fq->shape[3]});
}

RegionFeatures aggregate(Tape& tape, const TensorPtr& x, const RegionMaskParams& p) {
  if (x->shape.size() != 5) {
    throw ValidationError("aggregate: expected [B,T,H',W',d], got " +
                          shape_str(x->shape));
  }
  const std::size_t B = x->shape[0], T = x->shape[1];
  const std::size_t H = x->shape[2], W = x->shape[3], d = x->shape[4];
  const std::size_t K = p.regions();
  auto logits = tape.conv2d_3x3(x, p.w, p.b);                // [B,T,H,W,K]
  auto lk = tape.transpose(logits, {0, 1, 4, 2, 3});         // [B,T,K,H,W]
  auto flat = tape.reshape(lk, {B, T, K, H * W});
  auto masks = tape.softmax(flat, 3);                        // spatial softmax
  auto mb = tape.reshape(masks, {B * T, K, H * W});
  auto xb = tape.reshape(x, {B * T, H * W, d});
  auto pooled = tape.bmm(mb, xb);                            // [B*T, K, d]
  auto s = tape.transpose(tape.reshape(pooled, {B, T, K, d}), {0, 2, 1, 3});
  RegionFeatures out;
  out.features = s;                                          // [B,K,T,d]
  out.masks = tape.reshape(masks, {B, T, K, H, W});
  return out;
}

}  // namespace vta
