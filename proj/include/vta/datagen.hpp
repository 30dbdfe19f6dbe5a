// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic video-caption pairs: a colored shape moving over
// a textured background, captioned by (color, shape, motion) tokens.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vta {

// token layout of the caption vocabulary
namespace tok {
inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kBos = 1;
inline constexpr std::size_t kEos = 2;
inline constexpr std::size_t kColor0 = 3;   // 4 colors
inline constexpr std::size_t kShape0 = 7;   // 4 shapes
inline constexpr std::size_t kMotion0 = 11; // 4 motions
}  // namespace tok

inline constexpr std::size_t kNumConcepts = 64;  // 4 colors x 4 shapes x 4 motions

struct DatagenConfig {
  std::size_t frames = 4;
  std::size_t image_size = 32;
  std::size_t text_len = 8;
  std::size_t object_radius = 6;
  // fast enough that the object crosses patch-grid cells within a clip;
  // slower motion is invisible to an 8-pixel patch grid over 4 frames
  std::size_t speed = 5;       // pixels per frame
  double noise = 0.02;
};

struct BBox {
  std::size_t row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // inclusive bounds
};

struct SamplePair {
  std::uint32_t concept_id = 0;
  std::uint64_t nuisance_seed = 0;
  std::vector<std::size_t> caption;  // [text_len], padded
  std::vector<double> video;         // [T * 3 * H * W], values in [0, 1]
  std::vector<BBox> boxes;           // per-frame object bounds
};

// concept id = 16*color + 4*shape + motion
std::vector<std::size_t> caption_tokens(std::uint32_t concept_id, std::size_t text_len);
std::uint32_t concept_from_caption(const std::vector<std::size_t>& tokens);

SamplePair render_sample(std::uint32_t concept_id, std::uint64_t nuisance_seed,
                         const DatagenConfig& cfg);

// Concept ids are assigned round-robin; train and val draw from disjoint
// nuisance-seed streams.
SamplePair train_sample(std::uint64_t seed, std::size_t index, const DatagenConfig& cfg);
SamplePair val_sample(std::uint64_t seed, std::size_t index, const DatagenConfig& cfg);

struct Dataset {
  DatagenConfig cfg;
  std::vector<SamplePair> train;  // boxes not stored in the file format
  std::vector<SamplePair> val;
};

// Writes the binary dataset file; returns human-readable warnings (e.g.
// when n_val < 64 leaves concepts out of val).
std::vector<std::string> generate_dataset(const std::string& path, std::uint64_t seed,
                                          std::size_t n_train, std::size_t n_val,
                                          const DatagenConfig& cfg);

Dataset load_dataset(const std::string& path, const DatagenConfig& cfg);

}  // namespace vta
