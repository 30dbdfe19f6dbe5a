// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "vta/encoders.hpp"

using namespace vta;

namespace {

Config tiny_config() {
  Config c;
  c.frames = 2;
  c.image_size = 16;
  c.patch = 8;  // 2x2 grid, L = 4
  c.d_model = 8;
  c.d_txt = 8;
  c.d_shared = 4;
  c.d_attn = 4;
  c.vocab_size = 16;
  c.text_len = 5;
  c.validate();
  return c;
}

VideoBatch random_video(const Config& cfg, std::size_t B, std::uint64_t seed) {
  VideoBatch v;
  v.batch = B;
  v.frames = cfg.frames;
  v.height = v.width = cfg.image_size;
  v.values.resize(B * cfg.frames * 3 * cfg.image_size * cfg.image_size);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& x : v.values) x = dist(rng);
  return v;
}

TextBatch make_text(const std::vector<std::vector<std::size_t>>& rows, std::size_t len) {
  TextBatch t;
  t.batch = rows.size();
  t.length = len;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < len; ++i) {
      t.ids.push_back(i < row.size() ? row[i] : 0);
      t.pad.push_back(i < row.size() ? 0 : 1);
    }
  }
  return t;
}

}  // namespace

TEST_CASE("patch grid size arithmetic") {
  CHECK(224 / 16 * (224 / 16) == 196);
  Config cfg = tiny_config();
  cfg.image_size = 32;
  cfg.patch = 8;
  CHECK(cfg.patch_count() == 16);
}

TEST_CASE("encode_video output shape and indivisible patch error") {
  Config cfg = tiny_config();
  auto p = EncoderParams::init(cfg, 5);
  Tape tape;
  auto v = random_video(cfg, 3, 1);
  auto f = encode_video(tape, v, p, cfg);
  CHECK(f->shape == Shape{3, cfg.frames, 4, cfg.d_model});

  VideoBatch bad = v;
  bad.height = bad.width = 17;
  bad.values.resize(3 * cfg.frames * 3 * 17 * 17);
  CHECK_THROWS_AS(encode_video(tape, bad, p, cfg), ValidationError);
}

TEST_CASE("zero video with zero positional tables gives broadcast patch bias") {
  Config cfg = tiny_config();
  auto p = EncoderParams::init(cfg, 7);
  p.video_blocks.clear();
  std::fill(p.pos_spatial->values.begin(), p.pos_spatial->values.end(), 0.0);
  std::fill(p.pos_temporal->values.begin(), p.pos_temporal->values.end(), 0.0);
  p.patch_b->values = {1, 2, 3, 4, 5, 6, 7, 8};
  VideoBatch v;
  v.batch = 1;
  v.frames = cfg.frames;
  v.height = v.width = cfg.image_size;
  v.values.assign(cfg.frames * 3 * cfg.image_size * cfg.image_size, 0.0);
  Tape tape;
  auto f = encode_video(tape, v, p, cfg);
  for (std::size_t r = 0; r < f->size() / 8; ++r)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(f->values[r * 8 + j] == doctest::Approx(p.patch_b->values[j]));
}

TEST_CASE("patchify keeps row-major grid order") {
  Config cfg = tiny_config();
  // tag pixel blocks so patch (row 1, col 0) is identifiable
  VideoBatch v;
  v.batch = 1;
  v.frames = 1;
  v.height = v.width = 16;
  v.values.assign(3 * 16 * 16, 0.0);
  // mark the top-left pixel of grid cell (1, 0): image row 8, col 0
  v.values[8 * 16 + 0] = 42.0;
  auto patches = patchify(v, 8);
  CHECK(patches->shape == Shape{1, 1, 4, 192});
  // patch index = 1 * 2 + 0 = 2; within patch (pr=0, pc=0, c=0) -> offset 0
  CHECK(patches->values[2 * 192 + 0] == 42.0);
}

TEST_CASE("batch permutation permutes encoder output identically") {
  Config cfg = tiny_config();
  auto p = EncoderParams::init(cfg, 11);
  auto v = random_video(cfg, 3, 2);
  Tape tape;
  auto f = encode_video(tape, v, p, cfg);
  // swap samples 0 and 2
  VideoBatch w = v;
  const std::size_t stride = cfg.frames * 3 * cfg.image_size * cfg.image_size;
  std::swap_ranges(w.values.begin(), w.values.begin() + stride,
                   w.values.begin() + 2 * stride);
  auto g = encode_video(tape, w, p, cfg);
  const std::size_t fs = f->size() / 3;
  for (std::size_t i = 0; i < fs; ++i) {
    CHECK(f->values[i] == g->values[2 * fs + i]);
    CHECK(f->values[2 * fs + i] == g->values[i]);
    CHECK(f->values[fs + i] == g->values[fs + i]);
  }
}

TEST_CASE("encode_text: identical captions give identical rows") {
  Config cfg = tiny_config();
  auto p = EncoderParams::init(cfg, 13);
  auto t = make_text({{1, 3, 5, 2}, {1, 3, 5, 2}}, cfg.text_len);
  Tape tape;
  auto y = encode_text(tape, t, p, cfg);
  CHECK(y->shape == Shape{2, cfg.d_txt});
  for (std::size_t j = 0; j < cfg.d_txt; ++j)
    CHECK(y->values[j] == y->values[cfg.d_txt + j]);
}

TEST_CASE("encode_text: differing token changes the output") {
  Config cfg = tiny_config();
  auto p = EncoderParams::init(cfg, 17);
  auto t = make_text({{1, 3, 5, 2}, {1, 4, 5, 2}}, cfg.text_len);
  Tape tape;
  auto y = encode_text(tape, t, p, cfg);
  double diff = 0.0;
  for (std::size_t j = 0; j < cfg.d_txt; ++j)
    diff += std::abs(y->values[j] - y->values[cfg.d_txt + j]);
  CHECK(diff > 1e-6);
}

TEST_CASE("encode_text: appending pads leaves the [CLS] output unchanged") {
  Config cfg = tiny_config();
  auto p = EncoderParams::init(cfg, 19);
  auto short_text = make_text({{1, 3, 5, 2}}, 4);
  auto padded = make_text({{1, 3, 5, 2}}, cfg.text_len + 3);
  // re-init positional-free params are shared; only lengths differ
  Tape tape;
  auto a = encode_text(tape, short_text, p, cfg);
  auto b = encode_text(tape, padded, p, cfg);
  for (std::size_t j = 0; j < cfg.d_txt; ++j)
    CHECK(a->values[j] == doctest::Approx(b->values[j]).epsilon(1e-9));
}

TEST_CASE("encode_text rejects out-of-vocabulary ids and all-pad rows") {
  Config cfg = tiny_config();
  auto p = EncoderParams::init(cfg, 23);
  Tape tape;
  auto bad = make_text({{1, 99, 2}}, cfg.text_len);
  CHECK_THROWS_AS(encode_text(tape, bad, p, cfg), ValidationError);
  TextBatch allpad;
  allpad.batch = 1;
  allpad.length = 3;
  allpad.ids = {0, 0, 0};
  allpad.pad = {1, 1, 1};
  CHECK_THROWS_AS(encode_text(tape, allpad, p, cfg), ValidationError);
}

TEST_CASE("project_shared identity case and unit norms") {
  Tape tape;
  auto w = make_tensor({2, 2}, {1, 0, 0, 1});
  auto b = make_tensor({2});
  auto x = make_tensor({1, 2}, {3, 4});
  auto y = project_shared(tape, x, w, b);
  CHECK(y->values[0] == doctest::Approx(0.6));
  CHECK(y->values[1] == doctest::Approx(0.8));

  auto unit = make_tensor({1, 2}, {0.0, 1.0});
  auto u = project_shared(tape, unit, w, b);
  CHECK(u->values[0] == doctest::Approx(0.0));
  CHECK(u->values[1] == doctest::Approx(1.0));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto r = make_tensor({5, 2});
  for (auto& v : r->values) v = dist(rng);
  auto pr = project_shared(tape, r, w, b);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = pr->values[i * 2] * pr->values[i * 2] +
               pr->values[i * 2 + 1] * pr->values[i * 2 + 1];
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("all encoder parameters receive gradients on a generic batch") {
  Config cfg = tiny_config();
  auto p = EncoderParams::init(cfg, 29);
  auto v = random_video(cfg, 2, 4);
  auto t = make_text({{1, 3, 5, 2}, {1, 4, 6, 2}}, cfg.text_len);
  Tape tape;
  auto f = encode_video(tape, v, p, cfg);
  auto zv = project_shared(tape, tape.mean_axis(tape.reshape(f, {2, 2 * 4, cfg.d_model}), 1),
                           p.video_proj_w, p.video_proj_b);
  auto y = project_shared(tape, encode_text(tape, t, p, cfg), p.text_proj_w,
                          p.text_proj_b);
  auto loss = tape.sum(tape.mul(zv, y));
  tape.backward(loss);
  auto nonzero = [](const TensorPtr& w) {
    REQUIRE(!w->grad.empty());
    double s = 0.0;
    for (double g : w->grad) s += std::abs(g);
    return s > 0.0;
  };
  CHECK(nonzero(p.patch_w));
  CHECK(nonzero(p.patch_b));
  CHECK(nonzero(p.pos_spatial));
  CHECK(nonzero(p.pos_temporal));
  CHECK(nonzero(p.cls));
  CHECK(nonzero(p.tok_table));
  CHECK(nonzero(p.video_proj_w));
  CHECK(nonzero(p.text_proj_w));
  for (const auto& blk : p.video_blocks) {
    CHECK(nonzero(blk.wq));
    CHECK(nonzero(blk.wv));
    CHECK(nonzero(blk.w1));
    CHECK(nonzero(blk.w2));
  }
  for (const auto& blk : p.text_blocks) {
    CHECK(nonzero(blk.wq));
    CHECK(nonzero(blk.wv));
  }
}
