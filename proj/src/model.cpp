// SPDX-License-Identifier: Apache-2.0

#include "vta/model.hpp"

#include <cmath>

#include "vta/objective.hpp"

namespace vta {

Model Model::init(const Config& cfg) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.enc = EncoderParams::init(cfg, cfg.seed);
  m.mask_head = RegionMaskParams::init(cfg.regions, cfg.d_model, cfg.seed ^ 0xa11ceULL);
  m.inter = InteractionParams::init(cfg.interaction_depth, cfg.d_model, cfg.d_attn,
                                    cfg.seed ^ 0xbeefULL);
  if (cfg.learnable_tau)
    m.log_tau = make_tensor({1}, {std::log(cfg.tau)}, true);
  m.codebook = Codebook::init(cfg.codebook_size, cfg.d_model, cfg.seed ^ 0xc0deULL);
  m.codebook.decay = cfg.ema_decay;
  m.codebook.eps = cfg.ema_eps;
  m.codebook.reseed_patience = cfg.reseed_patience;
  return m;
}

std::vector<std::pair<std::string, TensorPtr>> Model::named_params() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  auto block_params = [&out](const std::string& prefix,
                             const std::vector<AttentionBlock>& blocks) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      const std::string p = prefix + std::to_string(i) + ".";
      out.emplace_back(p + "wq", b.wq);
      out.emplace_back(p + "wk", b.wk);
      out.emplace_back(p + "wv", b.wv);
      out.emplace_back(p + "wo", b.wo);
      out.emplace_back(p + "bo", b.bo);
      out.emplace_back(p + "w1", b.w1);
      out.emplace_back(p + "b1", b.b1);
      out.emplace_back(p + "w2", b.w2);
      out.emplace_back(p + "b2", b.b2);
    }
  };
  out.emplace_back("patch_w", enc.patch_w);
  out.emplace_back("patch_b", enc.patch_b);
  out.emplace_back("pos_spatial", enc.pos_spatial);
  out.emplace_back("pos_temporal", enc.pos_temporal);
  block_params("video_block", enc.video_blocks);
  out.emplace_back("tok_table", enc.tok_table);
  out.emplace_back("cls", enc.cls);
  block_params("text_block", enc.text_blocks);
  out.emplace_back("video_proj_w", enc.video_proj_w);
  out.emplace_back("video_proj_b", enc.video_proj_b);
  out.emplace_back("text_proj_w", enc.text_proj_w);
  out.emplace_back("text_proj_b", enc.text_proj_b);
  out.emplace_back("mask_w", mask_head.w);
  out.emplace_back("mask_b", mask_head.b);
  for (std::size_t i = 0; i < inter.phi.size(); ++i)
    out.emplace_back("phi" + std::to_string(i), inter.phi[i]);
  if (log_tau) out.emplace_back("log_tau", log_tau);
  return out;
}

VideoForward Model::embed_video(Tape& tape, const VideoBatch& video) {
  const std::size_t B = video.batch, T = cfg.frames;
  const std::size_t L = cfg.patch_count(), d = cfg.d_model;
  VideoForward vf;
  vf.features = encode_video(tape, video, enc, cfg);
  vf.quantized = cfg.disable_quantization
                     ? vf.features
                     : quantize(tape, vf.features, codebook, &vf.assignments);

  TensorPtr s;  // [B, K?, T, d]
  if (cfg.disable_aggregation) {
    // mean-pool the grid into a single region token
    auto pooled = tape.mean_axis(vf.quantized, 2);  // [B, T, d]
    s = tape.reshape(pooled, {B, 1, T, d});
  } else {
    auto grid = reshape_grid(tape, vf.quantized, cfg.grid_side(), cfg.grid_side());
    auto ro = aggregate(tape, grid, mask_head);
    s = ro.features;
    vf.masks = ro.masks;
  }
  auto z = cfg.disable_interaction ? s : interact(tape, s, inter);
  auto pooled = pool_regions(tape, z);  // [B, d]
  vf.emb = project_shared(tape, pooled, enc.video_proj_w, enc.video_proj_b);
  (void)L;
  return vf;
}

TensorPtr Model::embed_text(Tape& tape, const TextBatch& text) {
  auto y = encode_text(tape, text, enc, cfg);
  return project_shared(tape, y, enc.text_proj_w, enc.text_proj_b);
}

TensorPtr Model::loss(Tape& tape, const VideoForward& vf, const TensorPtr& text_emb) {
  auto sim = similarity(tape, vf.emb, text_emb);
  auto l = log_tau ? contrastive_loss(tape, sim, log_tau)
                   : contrastive_loss(tape, sim, cfg.tau);
  if (cfg.commitment_weight > 0.0 && !cfg.disable_quantization) {
    // pull encoder features toward their (frozen) assigned clusters
    auto target = make_tensor(vf.quantized->shape, vf.quantized->values);
    auto diff = tape.add(vf.features, tape.scale(target, -1.0));
    auto sq = tape.mul(diff, diff);
    auto mse = tape.scale(tape.sum(sq),
                          cfg.commitment_weight / static_cast<double>(diff->size()));
    l = tape.add(l, mse);
  }
  return l;
}

}  // namespace vta
