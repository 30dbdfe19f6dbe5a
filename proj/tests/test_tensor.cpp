// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "vta/tensor.hpp"

using namespace vta;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
  Tape tape;
  auto a = make_tensor({2, 2}, {1, 2, 3, 4});
  auto eye = make_tensor({2, 2}, {1, 0, 0, 1});
  auto c = tape.matmul(a, eye);
  CHECK(c->values == std::vector<double>{1, 2, 3, 4});

  auto b = make_tensor({2, 2}, {5, 6, 7, 8});
  auto d = tape.matmul(a, b);
  CHECK(d->values == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  auto a = make_tensor({2, 3});
  auto b = make_tensor({2, 3});
  CHECK_THROWS_WITH_AS(tape.matmul(a, b),
                       doctest::Contains("[2x3]"), ValidationError);
}

TEST_CASE("softmax basics") {
  Tape tape;
  auto x = make_tensor({2}, {0.0, 0.0});
  auto y = tape.softmax(x, 0);
  CHECK(y->values[0] == doctest::Approx(0.5));
  CHECK(y->values[1] == doctest::Approx(0.5));

  auto x2 = make_tensor({2}, {0.0, std::log(3.0)});
  auto y2 = tape.softmax(x2, 0);
  CHECK(y2->values[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y2->values[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance and row sums") {
  std::mt19937_64 rng(7);
  auto vals = random_vec(6 * 5, rng);
  Tape tape;
  auto x = make_tensor({6, 5}, vals);
  auto y = tape.softmax(x, 1);
  for (auto& v : vals) v += 13.7;
  auto xs = make_tensor({6, 5}, vals);
  auto ys = tape.softmax(xs, 1);
  for (std::size_t i = 0; i < y->size(); ++i)
    CHECK(y->values[i] == doctest::Approx(ys->values[i]).epsilon(1e-12));
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) s += y->values[r * 5 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("conv2d zero weights and identity kernel") {
  std::mt19937_64 rng(3);
  Tape tape;
  auto x = make_tensor({4, 4, 2}, random_vec(32, rng));
  auto w0 = make_tensor({3, 3, 3, 2});
  auto b0 = make_tensor({3});
  auto y0 = tape.conv2d_3x3(x, w0, b0);
  for (double v : y0->values) CHECK(v == 0.0);

  // center-tap kernel copying channel 1
  auto w = make_tensor({1, 3, 3, 2});
  w->values[((0 * 3 + 1) * 3 + 1) * 2 + 1] = 1.0;
  auto b = make_tensor({1});
  auto y = tape.conv2d_3x3(x, w, b);
  for (std::size_t i = 0; i < 16; ++i)
    CHECK(y->values[i] == doctest::Approx(x->values[i * 2 + 1]));
}

TEST_CASE("conv2d matches naive nested-loop oracle") {
  std::mt19937_64 rng(11);
  const std::size_t H = 4, W = 4, C = 2, K = 3;
  auto xv = random_vec(H * W * C, rng);
  auto wv = random_vec(K * 9 * C, rng);
  auto bv = random_vec(K, rng);
  Tape tape;
  auto y = tape.conv2d_3x3(make_tensor({H, W, C}, xv), make_tensor({K, 3, 3, C}, wv),
                           make_tensor({K}, bv));
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t k = 0; k < K; ++k) {
        double acc = bv[k];
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
            if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) ||
                jj >= static_cast<long>(W))
              continue;
            for (std::size_t c = 0; c < C; ++c)
              acc += wv[((k * 3 + (di + 1)) * 3 + (dj + 1)) * C + c] *
                     xv[(ii * W + jj) * C + c];
          }
        CHECK(y->values[(i * W + j) * K + k] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("l2_normalize") {
  Tape tape;
  auto a = tape.l2_normalize(make_tensor({3}, {1, 0, 0}), 0);
  CHECK(a->values == std::vector<double>{1, 0, 0});
  auto b = tape.l2_normalize(make_tensor({2}, {3, 4}), 0);
  CHECK(b->values[0] == doctest::Approx(0.6));
  CHECK(b->values[1] == doctest::Approx(0.8));

  std::mt19937_64 rng(5);
  auto x = make_tensor({4, 6}, random_vec(24, rng));
  auto y = tape.l2_normalize(x, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 6; ++c) s += y->values[r * 6 + c] * y->values[r * 6 + c];
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(tape.zero_norm_slices() == 0);

  auto z = tape.l2_normalize(make_tensor({2}, {0.0, 0.0}), 0, 1e-8);
  CHECK(z->values[0] == 0.0);
  CHECK(tape.zero_norm_slices() == 1);
}

TEST_CASE("gradcheck linear exactness") {
  auto x = make_tensor({5}, {0.1, -0.3, 0.7, 1.2, -2.0}, true);
  double err = gradcheck(
      [](Tape& t, const std::vector<TensorPtr>& in) {
        return t.sum(t.scale(in[0], 3.0));
      },
      {x});
  CHECK(err < 1e-9);
  CHECK(x->grad[0] == doctest::Approx(3.0));
}

TEST_CASE("gradcheck sum(softmax(x) * w)") {
  std::mt19937_64 rng(17);
  auto x = make_tensor({8}, random_vec(8, rng), true);
  auto wv = random_vec(8, rng);
  double err = gradcheck(
      [&](Tape& t, const std::vector<TensorPtr>& in) {
        auto w = make_tensor({8}, wv);
        return t.sum(t.mul(t.softmax(in[0], 0), w));
      },
      {x});
  CHECK(err < 1e-6);
}

TEST_CASE("every primitive passes gradcheck on 20 random instances") {
  std::mt19937_64 rng(23);
  auto check = [&](const char* name, const ScalarFn& f,
                   const std::vector<Shape>& shapes) {
    for (int inst = 0; inst < 20; ++inst) {
      std::vector<TensorPtr> inputs;
      for (const auto& s : shapes)
        inputs.push_back(make_tensor(s, random_vec(numel(s), rng), true));
      const double err = gradcheck(f, inputs);
      INFO(name << " instance " << inst);
      CHECK(err <= 1e-4);
    }
  };
  // readout weights so the scalar mixes all coordinates
  auto ro = [&rng](Tape& t, const TensorPtr& x) {
    std::mt19937_64 local(99);
    std::normal_distribution<double> d(0.0, 1.0);
    auto w = make_tensor(x->shape, 0.0);
    for (auto& v : w->values) v = d(local);
    return t.sum(t.mul(x, w));
  };

  check("matmul", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.matmul(in[0], in[1]));
  }, {{2, 3, 4}, {4, 5}});
  check("bmm", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.bmm(in[0], in[1]));
  }, {{2, 3, 4}, {2, 4, 3}});
  check("bmm_t", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.bmm(in[0], in[1], true));
  }, {{2, 3, 4}, {2, 5, 4}});
  check("add", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.add(in[0], in[1]));
  }, {{3, 4}, {3, 4}});
  check("mul", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.mul(in[0], in[1]));
  }, {{3, 4}, {3, 4}});
  check("scale", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.scale(in[0], -1.7));
  }, {{6}});
  check("scale_by", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.scale_by(in[0], in[1]));
  }, {{6}, {1}});
  check("exp", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.exp(in[0]));
  }, {{7}});
  check("gelu", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.gelu(in[0]));
  }, {{9}});
  check("add_bias", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.add_bias(in[0], in[1]));
  }, {{3, 4}, {4}});
  check("add_along_axis", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.add_along_axis(in[0], in[1], 1));
  }, {{2, 3, 4}, {3, 4}});
  check("softmax", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.softmax(in[0], 1));
  }, {{3, 5}});
  check("softmax_axis0", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.softmax(in[0], 0));
  }, {{3, 5}});
  check("log_softmax", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.log_softmax(in[0], 1));
  }, {{3, 5}});
  check("l2_normalize", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.l2_normalize(in[0], 1));
  }, {{3, 5}});
  check("sum", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return t.sum(in[0]);
  }, {{4, 3}});
  check("mean_axis", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.mean_axis(in[0], 1));
  }, {{3, 4, 2}});
  check("reshape", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.reshape(in[0], {4, 3}));
  }, {{3, 4}});
  check("transpose", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.transpose(in[0], {2, 0, 1}));
  }, {{2, 3, 4}});
  check("conv2d_3x3", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.conv2d_3x3(in[0], in[1], in[2]));
  }, {{4, 4, 2}, {3, 3, 3, 2}, {3}});
  check("embedding", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.embedding(in[0], {1, 3, 0, 3}, {4}));
  }, {{5, 3}});
  check("take_axis", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.take_axis(in[0], 1, 2));
  }, {{2, 4, 3}});
  check("prepend_token", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return ro(t, t.prepend_token(in[0], in[1]));
  }, {{3}, {2, 4, 3}});
  check("diag_mean", [&](Tape& t, const std::vector<TensorPtr>& in) {
    return t.diag_mean(in[0]);
  }, {{4, 4}});
}

TEST_CASE("gradient accumulation over fan-out: x + x equals 2x") {
  auto xv = std::vector<double>{0.5, -1.5, 2.5};
  auto x1 = make_tensor({3}, xv, true);
  {
    Tape tape;
    auto loss = tape.sum(tape.add(x1, x1));
    tape.backward(loss);
  }
  auto x2 = make_tensor({3}, xv, true);
  {
    Tape tape;
    auto loss = tape.sum(tape.scale(x2, 2.0));
    tape.backward(loss);
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(x1->grad[i] == doctest::Approx(x2->grad[i]));
}

TEST_CASE("seeded replay is bit-identical") {
  auto run = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    auto x = make_tensor({4, 4}, 0.0, true);
    for (auto& v : x->values) v = d(rng);
    Tape tape;
    auto y = tape.softmax(tape.matmul(x, x), 1);
    auto loss = tape.sum(y);
    tape.backward(loss);
    return std::pair(y->values, x->grad);
  };
  auto [v1, g1] = run(42);
  auto [v2, g2] = run(42);
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("check_finite flags NaN") {
  auto t = make_tensor({2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(check_finite(*t, "t"), NumericalError);
}
