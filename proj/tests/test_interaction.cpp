// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "vta/encoders.hpp"
#include "vta/interaction.hpp"

using namespace vta;

namespace {

TensorPtr randn(Shape shape, std::uint64_t seed, bool requires_grad = false) {
  auto t = make_tensor(std::move(shape), 0.0, requires_grad);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t->values) v = dist(rng);
  return t;
}

}  // namespace

TEST_CASE("single token: interact is the identity") {
  Tape tape;
  auto s = randn({2, 1, 1, 5}, 1);
  auto p = InteractionParams::init(1, 5, 3, 2);
  auto z = interact(tape, s, p);
  for (std::size_t i = 0; i < s->size(); ++i)
    CHECK(z->values[i] == doctest::Approx(s->values[i]).epsilon(1e-12));
}

TEST_CASE("identical tokens: any attention averages to the same vector") {
  Tape tape;
  const std::size_t K = 3, T = 2, d = 4;
  auto s = make_tensor({1, K, T, d});
  std::vector<double> v{0.3, -0.7, 1.1, 0.2};
  for (std::size_t i = 0; i < K * T; ++i)
    std::copy(v.begin(), v.end(), s->values.begin() + i * d);
  auto p = InteractionParams::init(2, d, 4, 3);
  auto z = interact(tape, s, p);
  for (std::size_t i = 0; i < K * T; ++i)
    for (std::size_t j = 0; j < d; ++j)
      CHECK(z->values[i * d + j] == doctest::Approx(v[j]).epsilon(1e-9));
}

TEST_CASE("matches naive O((KT)^2) attention") {
  Tape tape;
  const std::size_t K = 2, T = 2, d = 5, da = 3;
  auto s = randn({1, K, T, d}, 5);
  auto p = InteractionParams::init(1, d, da, 7);
  auto z = interact(tape, s, p);

  const std::size_t n = K * T;
  std::vector<double> e(n * da, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < da; ++a)
      for (std::size_t j = 0; j < d; ++j)
        e[i * da + a] += s->values[i * d + j] * p.phi[0]->values[j * da + a];
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logit(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t a = 0; a < da; ++a)
        logit[j] += e[i * da + a] * e[j * da + a] / std::sqrt(double(da));
    const double mx = *std::max_element(logit.begin(), logit.end());
    double zsum = 0.0;
    for (auto& l : logit) {
      l = std::exp(l - mx);
      zsum += l;
    }
    for (std::size_t jd = 0; jd < d; ++jd) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        acc += logit[j] / zsum * s->values[j * d + jd];
      CHECK(z->values[i * d + jd] == doctest::Approx(acc).epsilon(1e-9));
    }
  }
}

TEST_CASE("outputs are convex combinations of inputs") {
  Tape tape;
  const std::size_t K = 4, T = 3, d = 6;
  auto s = randn({2, K, T, d}, 9);
  auto p = InteractionParams::init(2, d, 4, 11);
  auto z = interact(tape, s, p);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t j = 0; j < d; ++j) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t i = 0; i < K * T; ++i) {
        const double v = s->values[(b * K * T + i) * d + j];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      for (std::size_t i = 0; i < K * T; ++i) {
        const double v = z->values[(b * K * T + i) * d + j];
        CHECK(v >= lo - 1e-9);
        CHECK(v <= hi + 1e-9);
      }
    }
}

TEST_CASE("scaled-up phi saturates attention toward the best match") {
  Tape tape;
  const std::size_t d = 4;
  // two well-separated tokens
  auto s = make_tensor({1, 2, 1, d}, {10, 0, 0, 0, 0, 10, 0, 0});
  auto p = InteractionParams::init(1, d, d, 13);
  // identity-ish phi, scaled hard
  std::fill(p.phi[0]->values.begin(), p.phi[0]->values.end(), 0.0);
  for (std::size_t i = 0; i < d; ++i) p.phi[0]->values[i * d + i] = 3.0;
  auto z = interact(tape, s, p);
  // each token's strongest match is itself; output approaches the input row
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < d; ++j)
      CHECK(z->values[i * d + j] == doctest::Approx(s->values[i * d + j]).epsilon(1e-6));
}

TEST_CASE("pool_regions is the mean over K and T") {
  Tape tape;
  auto z = randn({2, 3, 2, 4}, 15);
  auto pooled = pool_regions(tape, z);
  CHECK(pooled->shape == Shape{2, 4});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 6; ++i) acc += z->values[(b * 6 + i) * 4 + j];
      CHECK(pooled->values[b * 4 + j] == doctest::Approx(acc / 6.0).epsilon(1e-12));
    }

  auto c = make_tensor({1, 2, 2, 3});
  std::vector<double> v{1.5, -2.0, 0.25};
  for (std::size_t i = 0; i < 4; ++i)
    std::copy(v.begin(), v.end(), c->values.begin() + i * 3);
  auto pc = pool_regions(tape, c);
  for (std::size_t j = 0; j < 3; ++j) CHECK(pc->values[j] == doctest::Approx(v[j]));
}

TEST_CASE("gradcheck through interact and pooling") {
  auto s = randn({1, 2, 2, 3}, 17, true);
  auto p = InteractionParams::init(2, 3, 2, 19);
  const double err = gradcheck(
      [&](Tape& t, const std::vector<TensorPtr>& in) {
        InteractionParams q;
        q.phi = {in[1], in[2]};
        auto z = interact(t, in[0], q);
        auto pooled = pool_regions(t, z);
        std::mt19937_64 rng(23);
        std::normal_distribution<double> dist(0.0, 1.0);
        auto w = make_tensor(pooled->shape);
        for (auto& v : w->values) v = dist(rng);
        return t.sum(t.mul(pooled, w));
      },
      {s, p.phi[0], p.phi[1]});
  CHECK(err <= 1e-4);
}

TEST_CASE("attention rows sum to one inside interact") {
  // indirectly: with one layer, z rows must be convex combos; verified
  // directly on the softmax op elsewhere. Here check the degenerate depth.
  auto p = InteractionParams::init(1, 3, 2, 29);
  CHECK(p.depth() == 1);
  CHECK_THROWS_AS(InteractionParams::init(0, 3, 2, 1), ValidationError);
}
