// SPDX-License-Identifier: Apache-2.0
//
// Toy video and text encoders plus the shared-space projection heads.

#pragma once

#include <cstdint>
#include <vector>

#include "vta/config.hpp"
#include "vta/tensor.hpp"

namespace vta {

// B x T x 3 x H x W frames, values in [0, 1].
struct VideoBatch {
  std::size_t batch = 0, frames = 0, height = 0, width = 0;
  std::vector<double> values;
};

struct TextBatch {
  std::size_t batch = 0, length = 0;
  std::vector<std::size_t> ids;   // [batch * length]
  std::vector<std::uint8_t> pad;  // 1 where position is padding
};

// One pre-norm-free transformer block: single-head self-attention with
// residual, then a GELU MLP with residual.
struct AttentionBlock {
  TensorPtr wq, wk, wv, wo, bo;  // [d,d] x4-ish, bo [d]
  TensorPtr w1, b1, w2, b2;      // [d,2d], [2d], [2d,d], [d]
};

struct EncoderParams {
  TensorPtr patch_w, patch_b;           // [P*P*3, d], [d]
  TensorPtr pos_spatial, pos_temporal;  // [L, d], [T, d]
  std::vector<AttentionBlock> video_blocks;
  TensorPtr tok_table;  // [V, d_txt]
  TensorPtr cls;        // [d_txt]
  std::vector<AttentionBlock> text_blocks;
  TensorPtr video_proj_w, video_proj_b;  // [d, d_shared], [d_shared]
  TensorPtr text_proj_w, text_proj_b;    // [d_txt, d_shared], [d_shared]

  static EncoderParams init(const Config& cfg, std::uint64_t seed);
};

// Non-overlapping P x P patches in row-major grid order; each patch vector
// is laid out (patch_row, patch_col, channel). Pure data movement.
TensorPtr patchify(const VideoBatch& video, std::size_t patch);

// -> [B, T, L, d] with L = (H/P) * (W/P)
TensorPtr encode_video(Tape& tape, const VideoBatch& video, const EncoderParams& p,
                       const Config& cfg);

// -> [B, d_txt]: final [CLS] hidden state
TensorPtr encode_text(Tape& tape, const TextBatch& text, const EncoderParams& p,
                      const Config& cfg);

// Affine map to the shared space followed by l2 normalization.
TensorPtr project_shared(Tape& tape, const TensorPtr& x, const TensorPtr& w,
                         const TensorPtr& b);

// Shared by both encoders; mask, when non-null, is added to the attention
// logits (use large negatives to exclude keys).
TensorPtr attention_block(Tape& tape, const TensorPtr& x, const AttentionBlock& blk,
                          const TensorPtr& mask = nullptr);

}  // namespace vta
