// SPDX-License-Identifier: Apache-2.0

#include "vta/encoders.hpp"

#include <cmath>
#include <random>

namespace vta {

namespace {

TensorPtr randn(Shape shape, double stddev, std::mt19937_64& rng) {
  auto t = make_tensor(std::move(shape), 0.0, true);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t->values) v = dist(rng);
  return t;
}

AttentionBlock init_block(std::size_t d, std::mt19937_64& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionBlock b;
  b.wq = randn({d, d}, s, rng);
  b.wk = randn({d, d}, s, rng);
  b.wv = randn({d, d}, s, rng);
  b.wo = randn({d, d}, s, rng);
  b.bo = make_tensor({d}, 0.0, true);
  b.w1 = randn({d, 2 * d}, s, rng);
  b.b1 = make_tensor({2 * d}, 0.0, true);
  b.w2 = randn({2 * d, d}, 1.0 / std::sqrt(2.0 * static_cast<double>(d)), rng);
  b.b2 = make_tensor({d}, 0.0, true);
  return b;
}

}  // namespace

EncoderParams EncoderParams::init(const Config& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EncoderParams p;
  const std::size_t pin = cfg.patch * cfg.patch * 3;
  p.patch_w = randn({pin, cfg.d_model}, 1.0 / std::sqrt(static_cast<double>(pin)), rng);
  p.patch_b = make_tensor({cfg.d_model}, 0.0, true);
  // sized so position and frame index are first-class feature directions:
  // the quantizer only preserves what carries variance at assignment time
  p.pos_spatial = randn({cfg.patch_count(), cfg.d_model}, 0.3, rng);
  p.pos_temporal = randn({cfg.frames, cfg.d_model}, 0.3, rng);
  for (std::size_t i = 0; i < cfg.n_video_blocks; ++i)
    p.video_blocks.push_back(init_block(cfg.d_model, rng));
  p.tok_table = randn({cfg.vocab_size, cfg.d_txt}, 0.1, rng);
  p.cls = randn({cfg.d_txt}, 0.1, rng);
  for (std::size_t i = 0; i < cfg.n_text_blocks; ++i)
    p.text_blocks.push_back(init_block(cfg.d_txt, rng));
  p.video_proj_w =
      randn({cfg.d_model, cfg.d_shared}, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)), rng);
  p.video_proj_b = make_tensor({cfg.d_shared}, 0.0, true);
  p.text_proj_w =
      randn({cfg.d_txt, cfg.d_shared}, 1.0 / std::sqrt(static_cast<double>(cfg.d_txt)), rng);
  p.text_proj_b = make_tensor({cfg.d_shared}, 0.0, true);
  return p;
}

TensorPtr patchify(const VideoBatch& video, std::size_t patch) {
  const std::size_t B = video.batch, T = video.frames, H = video.height, W = video.width;
  if (H % patch != 0 || W % patch != 0) {
    throw ValidationError("patchify: frame side " + std::to_string(H) + "x" +
                          std::to_string(W) + " not divisible by patch size " +
                          std::to_string(patch));
  }
  if (video.values.size() != B * T * 3 * H * W) {
    throw ValidationError("patchify: video buffer size mismatch");
  }
  const std::size_t gh = H / patch, gw = W / patch, L = gh * gw;
  const std::size_t pin = patch * patch * 3;
  auto out = make_tensor({B, T, L, pin});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      const double* frame = video.values.data() + (b * T + t) * 3 * H * W;
      for (std::size_t gr = 0; gr < gh; ++gr)
        for (std::size_t gc = 0; gc < gw; ++gc) {
          double* dst =
              out->values.data() + (((b * T + t) * L) + gr * gw + gc) * pin;
          for (std::size_t pr = 0; pr < patch; ++pr)
            for (std::size_t pc = 0; pc < patch; ++pc)
              for (std::size_t c = 0; c < 3; ++c)
                dst[(pr * patch + pc) * 3 + c] =
                    frame[c * H * W + (gr * patch + pr) * W + (gc * patch + pc)];
        }
    }
  return out;
}

TensorPtr attention_block(Tape& tape, const TensorPtr& x, const AttentionBlock& blk,
                          const TensorPtr& mask) {
  const std::size_t d = x->shape.back();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  auto q = tape.matmul(x, blk.wq);
  auto k = tape.matmul(x, blk.wk);
  auto v = tape.matmul(x, blk.wv);
  auto logits = tape.scale(tape.bmm(q, k, /*transpose_b=*/true), scale);
  if (mask) logits = tape.add(logits, mask);
  auto attn = tape.softmax(logits, 2);
  auto ctx = tape.bmm(attn, v);
  auto h = tape.add(x, tape.add_bias(tape.matmul(ctx, blk.wo), blk.bo));
  auto m = tape.gelu(tape.add_bias(tape.matmul(h, blk.w1), blk.b1));
  return tape.add(h, tape.add_bias(tape.matmul(m, blk.w2), blk.b2));
}

TensorPtr encode_video(Tape& tape, const VideoBatch& video, const EncoderParams& p,
                       const Config& cfg) {
  if (video.height != cfg.image_size || video.width != cfg.image_size ||
      video.frames != cfg.frames) {
    throw ValidationError("encode_video: batch geometry does not match config");
  }
  const std::size_t B = video.batch, T = video.frames, L = cfg.patch_count();
  const std::size_t d = cfg.d_model;
  auto patches = patchify(video, cfg.patch);
  auto h = tape.add_bias(tape.matmul(patches, p.patch_w), p.patch_b);
  h = tape.add_along_axis(h, p.pos_spatial, 2);
  h = tape.add_along_axis(h, p.pos_temporal, 1);
  if (!p.video_blocks.empty()) {
    // within-frame attention: frames are independent sequences
    h = tape.reshape(h, {B * T, L, d});
    for (const auto& blk : p.video_blocks) h = attention_block(tape, h, blk);
    h = tape.reshape(h, {B, T, L, d});
  }
  return h;
}

TensorPtr encode_text(Tape& tape, const TextBatch& text, const EncoderParams& p,
                      const Config& cfg) {
  const std::size_t B = text.batch, L = text.length, d = cfg.d_txt;
  if (text.ids.size() != B * L || text.pad.size() != B * L) {
    throw ValidationError("encode_text: token buffer size mismatch");
  }
  for (std::size_t b = 0; b < B; ++b) {
    bool any = false;
    for (std::size_t l = 0; l < L; ++l) any = any || !text.pad[b * L + l];
    if (!any) throw ValidationError("encode_text: row with only pad tokens");
  }
  auto emb = tape.embedding(p.tok_table, text.ids, {B, L});
  auto h = tape.prepend_token(p.cls, emb);  // [B, L+1, d]
  if (!p.text_blocks.empty()) {
    const std::size_t Lp = L + 1;
    auto mask = make_tensor({B, Lp, Lp});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < Lp; ++i)
        for (std::size_t j = 1; j < Lp; ++j)
          if (text.pad[b * L + (j - 1)])
            mask->values[(b * Lp + i) * Lp + j] = -1e9;
    for (const auto& blk : p.text_blocks) h = attention_block(tape, h, blk, mask);
  }
  (void)d;
  return tape.take_axis(h, 1, 0);  // [CLS] hidden state
}

TensorPtr project_shared(Tape& tape, const TensorPtr& x, const TensorPtr& w,
                         const TensorPtr& b) {
  auto y = tape.add_bias(tape.matmul(x, w), b);
  return tape.l2_normalize(y, y->shape.size() - 1);
}

}  // namespace vta
