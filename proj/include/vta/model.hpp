// SPDX-License-Identifier: Apache-2.0
//
// Full pipeline state: encoders, quantizer codebook, region mask head,
// interaction stack, and the (optionally learnable) temperature.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vta/config.hpp"
#include "vta/encoders.hpp"
#include "vta/interaction.hpp"
#include "vta/quantizer.hpp"
#include "vta/regions.hpp"

namespace vta {

struct VideoForward {
  TensorPtr emb;        // [B, d_shared], unit rows
  TensorPtr features;   // F, [B, T, L, d] (pre-quantization)
  TensorPtr quantized;  // F' (== features when quantization is disabled)
  AssignmentMap assignments;  // empty when quantization is disabled
  TensorPtr masks;      // [B, T, K, H', W'] or null when aggregation is disabled
};

struct Model {
  Config cfg;
  EncoderParams enc;
  RegionMaskParams mask_head;
  InteractionParams inter;
  TensorPtr log_tau;  // null unless cfg.learnable_tau
  Codebook codebook;

  static Model init(const Config& cfg);

  // Deterministic order; names are stable across runs (checkpoint schema).
  std::vector<std::pair<std::string, TensorPtr>> named_params() const;

  // encode -> quantize -> reshape -> aggregate -> interact -> pool/project.
  // Ablation flags in cfg bypass the corresponding stage.
  VideoForward embed_video(Tape& tape, const VideoBatch& video);

  // encode_text -> project_shared
  TensorPtr embed_text(Tape& tape, const TextBatch& text);

  // contrastive loss (plus optional commitment term) for a paired batch.
  TensorPtr loss(Tape& tape, const VideoForward& vf, const TensorPtr& text_emb);
};

}  // namespace vta
