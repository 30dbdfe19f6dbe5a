// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "vta/regions.hpp"

using namespace vta;

namespace {

TensorPtr random_grid(Shape shape, std::uint64_t seed, bool requires_grad = false) {
  auto t = make_tensor(std::move(shape), 0.0, requires_grad);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t->values) v = dist(rng);
  return t;
}

}  // namespace

TEST_CASE("reshape_grid round-trips and keeps row-major order") {
  Tape tape;
  auto fq = random_grid({2, 3, 16, 5}, 1);
  auto x = reshape_grid(tape, fq, 4, 4);
  CHECK(x->shape == Shape{2, 3, 4, 4, 5});
  auto back = tape.reshape(x, {2, 3, 16, 5});
  CHECK(back->values == fq->values);
  // patch s = row * W' + col: patch 11 lands at grid (2, 3)
  const std::size_t d = 5;
  for (std::size_t j = 0; j < d; ++j)
    CHECK(x->values[(((0 * 3 + 0) * 4 + 2) * 4 + 3) * d + j] ==
          fq->values[((0 * 3 + 0) * 16 + 11) * d + j]);

  auto bad = random_grid({2, 3, 15, 5}, 2);
  CHECK_THROWS_AS(reshape_grid(tape, bad, 4, 4), ValidationError);
}

TEST_CASE("zero mask head gives uniform masks and spatial means") {
  Tape tape;
  const std::size_t B = 2, T = 2, H = 4, W = 4, d = 3, K = 2;
  auto x = random_grid({B, T, H, W, d}, 3);
  RegionMaskParams p;
  p.w = make_tensor({K, 3, 3, d}, 0.0, true);
  p.b = make_tensor({K}, 0.0, true);
  auto out = aggregate(tape, x, p);
  CHECK(out.features->shape == Shape{B, K, T, d});
  for (double m : out.masks->values) CHECK(m == doctest::Approx(1.0 / 16.0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t s = 0; s < H * W; ++s)
          mean += x->values[(((b * T + t) * H * W) + s) * d + j];
        mean /= static_cast<double>(H * W);
        for (std::size_t k = 0; k < K; ++k)
          CHECK(out.features->values[(((b * K + k) * T) + t) * d + j] ==
                doctest::Approx(mean).epsilon(1e-9));
      }
}

TEST_CASE("saturated logit selects a single cell") {
  Tape tape;
  const std::size_t H = 4, W = 4, d = 3;
  auto x = random_grid({1, 1, H, W, d}, 5);
  RegionMaskParams p;
  p.w = make_tensor({1, 3, 3, d}, 0.0, true);
  p.b = make_tensor({1}, 0.0, true);
  auto out_uniform = aggregate(tape, x, p);
  (void)out_uniform;
  // drive cell (1,1) to +20 via the input channel trick: put a large value
  // in a dedicated channel and a center-tap weight reading it
  auto x2 = make_tensor({1, 1, H, W, d}, x->values);
  x2->values[((1 * W) + 1) * d + 0] += 0.0;
  RegionMaskParams q;
  q.w = make_tensor({1, 3, 3, d}, 0.0, true);
  q.b = make_tensor({1}, 0.0, true);
  // direct bias route: add +20 at (1,1) by using a one-hot input plane
  auto onehot = make_tensor({1, 1, H, W, 1});
  onehot->values[(1 * W + 1) * 1] = 20.0;
  RegionMaskParams r;
  r.w = make_tensor({1, 3, 3, 1}, 0.0, true);
  r.w->values[(0 * 3 + 1) * 3 + 1] = 1.0;  // center tap
  r.b = make_tensor({1}, 0.0, true);
  auto sat = aggregate(tape, onehot, r);
  // mask mass concentrates at (1,1)
  CHECK(sat.masks->values[1 * W + 1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sat.features->values[0] == doctest::Approx(onehot->values[(1 * W + 1)]).epsilon(1e-6));
}

TEST_CASE("aggregate matches a naive double-loop weighted sum") {
  Tape tape;
  const std::size_t H = 4, W = 4, d = 8, K = 4;
  auto x = random_grid({1, 1, H, W, d}, 7);
  auto p = RegionMaskParams::init(K, d, 9);
  auto out = aggregate(tape, x, p);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t w = 0; w < W; ++w)
          acc += out.masks->values[(k * H + i) * W + w] * x->values[((i * W) + w) * d + j];
      CHECK(out.features->values[k * d + j] == doctest::Approx(acc).epsilon(1e-9));
    }
}

TEST_CASE("masks sum to one, are positive, and pooled vectors are convex combinations") {
  Tape tape;
  const std::size_t B = 2, T = 3, H = 4, W = 4, d = 6, K = 8;
  auto x = random_grid({B, T, H, W, d}, 11);
  auto p = RegionMaskParams::init(K, d, 13);
  auto out = aggregate(tape, x, p);
  for (std::size_t s = 0; s < B * T * K; ++s) {
    double sum = 0.0;
    for (std::size_t c = 0; c < H * W; ++c) {
      const double m = out.masks->values[s * H * W + c];
      CHECK(m > 0.0);
      sum += m;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < d; ++j) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t s = 0; s < H * W; ++s) {
          const double v = x->values[(((b * T + t) * H * W) + s) * d + j];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        for (std::size_t k = 0; k < K; ++k) {
          const double v = out.features->values[(((b * K + k) * T) + t) * d + j];
          CHECK(v >= lo - 1e-9);
          CHECK(v <= hi + 1e-9);
        }
      }
}

TEST_CASE("gradients flow to mask params and input") {
  const std::size_t H = 3, W = 3, d = 4, K = 2;
  auto x = random_grid({1, 1, H, W, d}, 17, true);
  auto p = RegionMaskParams::init(K, d, 19);
  const double err = gradcheck(
      [&](Tape& t, const std::vector<TensorPtr>& in) {
        RegionMaskParams q{in[1], in[2]};
        auto out = aggregate(t, in[0], q);
        std::mt19937_64 rng(21);
        std::normal_distribution<double> dist(0.0, 1.0);
        auto w = make_tensor(out.features->shape);
        for (auto& v : w->values) v = dist(rng);
        return t.sum(t.mul(out.features, w));
      },
      {x, p.w, p.b});
  CHECK(err <= 1e-4);
  CHECK(!x->grad.empty());
  CHECK(!p.w->grad.empty());
}
