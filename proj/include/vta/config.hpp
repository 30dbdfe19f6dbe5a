// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

namespace vta {

// Hyperparameters for the whole pipeline. Parsed from `key = value`
// lines; `#` starts a comment; unknown keys are errors.
struct Config {
  std::uint64_t seed = 1;

  // data / encoder geometry
  std::size_t frames = 4;        // T
  std::size_t image_size = 32;   // H = W
  std::size_t patch = 8;         // P
  std::size_t d_model = 64;      // d
  std::size_t d_txt = 64;
  std::size_t d_shared = 32;
  std::size_t d_attn = 32;
  std::size_t vocab_size = 64;
  std::size_t text_len = 8;      // L_txt, pad-inclusive
  std::size_t n_video_blocks = 1;
  std::size_t n_text_blocks = 1;

  // quantizer
  std::size_t codebook_size = 32;  // M
  double ema_decay = 0.99;
  double ema_eps = 1e-5;
  std::size_t reseed_patience = 200;
  double commitment_weight = 0.0;  // optional commitment loss, off by default

  // regions / interaction
  std::size_t regions = 4;            // K
  std::size_t interaction_depth = 1;  // N_int

  // objective
  double tau = 0.05;
  bool learnable_tau = false;

  // training
  double lr = 2e-4;
  std::size_t batch_size = 64;
  std::size_t steps = 2000;
  bool strict_negatives = true;
  std::size_t log_every = 100;

  // ablations
  bool disable_quantization = false;
  bool disable_aggregation = false;
  bool disable_interaction = false;

  std::size_t grid_side() const { return image_size / patch; }      // H' = W'
  std::size_t patch_count() const { return grid_side() * grid_side(); }  // L

  // Throws ValidationError on out-of-range values.
  void validate() const;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);
  std::string to_text() const;
};

}  // namespace vta
