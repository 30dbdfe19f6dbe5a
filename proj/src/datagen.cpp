// SPDX-License-Identifier: Apache-2.0

#include "vta/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

#include "vta/tensor.hpp"

namespace vta {

namespace {

constexpr double kPalette[4][3] = {
    {1.00, 0.15, 0.15},  // red
    {0.15, 0.95, 0.15},  // green
    {0.20, 0.35, 1.00},  // blue
    {0.95, 0.95, 0.20},  // yellow
};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool inside_shape(std::size_t shape, long dr, long dc, long r) {
  switch (shape) {
    case 0:  // square
      return std::abs(dr) <= r && std::abs(dc) <= r;
    case 1:  // circle
      return dr * dr + dc * dc <= r * r;
    case 2:  // triangle (apex up)
      return dr >= -r && dr <= r && std::abs(dc) * 2 <= dr + r;
    default:  // cross
      return (std::abs(dr) <= 2 && std::abs(dc) <= r) ||
             (std::abs(dc) <= 2 && std::abs(dr) <= r);
  }
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f32(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ValidationError("dataset: truncated file " + path);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
  std::uint64_t lo = read_u32(in, path), hi = read_u32(in, path);
  return lo | (hi << 32);
}

}  // namespace

std::vector<std::size_t> caption_tokens(std::uint32_t concept_id, std::size_t text_len) {
  if (concept_id >= kNumConcepts)
    throw ValidationError("caption_tokens: concept id out of range");
  const std::size_t color = concept_id / 16;
  const std::size_t shape = (concept_id / 4) % 4;
  const std::size_t motion = concept_id % 4;
  std::vector<std::size_t> t{tok::kBos, tok::kColor0 + color, tok::kShape0 + shape,
                             tok::kMotion0 + motion, tok::kEos};
  if (text_len < t.size())
    throw ValidationError("caption_tokens: text_len too small for a caption");
  t.resize(text_len, tok::kPad);
  return t;
}

std::uint32_t concept_from_caption(const std::vector<std::size_t>& tokens) {
  if (tokens.size() < 5 || tokens[0] != tok::kBos || tokens[4] != tok::kEos)
    throw ValidationError("concept_from_caption: malformed caption");
  const std::size_t color = tokens[1] - tok::kColor0;
  const std::size_t shape = tokens[2] - tok::kShape0;
  const std::size_t motion = tokens[3] - tok::kMotion0;
  if (color >= 4 || shape >= 4 || motion >= 4)
    throw ValidationError("concept_from_caption: tokens out of range");
  return static_cast<std::uint32_t>(16 * color + 4 * shape + motion);
}

SamplePair render_sample(std::uint32_t concept_id, std::uint64_t nuisance_seed,
                         const DatagenConfig& cfg) {
  const std::size_t T = cfg.frames, H = cfg.image_size, W = cfg.image_size;
  const long r = static_cast<long>(cfg.object_radius);
  const long speed = static_cast<long>(cfg.speed);
  const std::size_t color = concept_id / 16;
  const std::size_t shape = (concept_id / 4) % 4;
  const std::size_t motion = concept_id % 4;

  // row/col velocity: left, right, up, down
  const long vr = (motion == 2) ? -speed : (motion == 3) ? speed : 0;
  const long vc = (motion == 0) ? -speed : (motion == 1) ? speed : 0;

  std::mt19937_64 rng(splitmix(nuisance_seed));
  // start position keeps the object fully inside every frame
  const long total = speed * static_cast<long>(T - 1);
  long rmin = r, rmax = static_cast<long>(H) - 1 - r;
  long cmin = r, cmax = static_cast<long>(W) - 1 - r;
  if (vr < 0) rmin += total; else rmax -= vr == 0 ? 0 : total;
  if (vc < 0) cmin += total; else cmax -= vc == 0 ? 0 : total;
  std::uniform_int_distribution<long> row_dist(rmin, rmax), col_dist(cmin, cmax);
  const long r0 = row_dist(rng), c0 = col_dist(rng);

  // textured background: per-channel sinusoids with random frequency/phase
  // texture varies per sample in frequency and phase; the base level is held
  // fixed so the background family stays identifiable across nuisance seeds
  double freq_x[3], freq_y[3], phase[3], base[3];
  std::uniform_real_distribution<double> fdist(1.5, 2.5), pdist(0.0, 2.0 * M_PI);
  for (int c = 0; c < 3; ++c) {
    freq_x[c] = fdist(rng);
    freq_y[c] = fdist(rng);
    phase[c] = pdist(rng);
    base[c] = 0.40;
  }
  std::uniform_real_distribution<double> ndist(-cfg.noise, cfg.noise);

  SamplePair s;
  s.concept_id = concept_id;
  s.nuisance_seed = nuisance_seed;
  s.caption = caption_tokens(concept_id, cfg.text_len);
  s.video.resize(T * 3 * H * W);
  s.boxes.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const long cr = r0 + vr * static_cast<long>(t);
    const long cc = c0 + vc * static_cast<long>(t);
    s.boxes[t] = {static_cast<std::size_t>(cr - r), static_cast<std::size_t>(cc - r),
                  static_cast<std::size_t>(cr + r), static_cast<std::size_t>(cc + r)};
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          double v = base[c] +
                     0.30 * std::sin(2.0 * M_PI *
                                         (freq_x[c] * j / double(W) +
                                          freq_y[c] * i / double(H)) +
                                     phase[c]) +
                     ndist(rng);
          const long dr = static_cast<long>(i) - cr, dc = static_cast<long>(j) - cc;
          if (inside_shape(shape, dr, dc, r)) v = kPalette[color][c];
          s.video[((t * 3 + c) * H + i) * W + j] = std::clamp(v, 0.0, 1.0);
        }
  }
  return s;
}

SamplePair train_sample(std::uint64_t seed, std::size_t index, const DatagenConfig& cfg) {
  const std::uint64_t nuisance = (splitmix(seed ^ (0x7261696eULL + index)) << 1);
  return render_sample(static_cast<std::uint32_t>(index % kNumConcepts), nuisance, cfg);
}

SamplePair val_sample(std::uint64_t seed, std::size_t index, const DatagenConfig& cfg) {
  const std::uint64_t nuisance = (splitmix(seed ^ (0x76616cULL + index)) << 1) | 1;
  return render_sample(static_cast<std::uint32_t>(index % kNumConcepts), nuisance, cfg);
}

std::vector<std::string> generate_dataset(const std::string& path, std::uint64_t seed,
                                          std::size_t n_train, std::size_t n_val,
                                          const DatagenConfig& cfg) {
  if (n_train < 1 || n_val < 1)
    throw ValidationError("generate_dataset: n_train and n_val must be >= 1");
  std::vector<std::string> warnings;
  if (n_val < kNumConcepts)
    warnings.push_back("n_val < 64: some concepts will be missing from val");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("generate_dataset: cannot write " + path);
  out.write("RLDS", 4);
  write_u32(out, 1);  // format version
  write_u64(out, n_train);
  write_u64(out, n_val);
  auto write_sample = [&](const SamplePair& s) {
    write_u32(out, s.concept_id);
    write_u32(out, static_cast<std::uint32_t>(s.caption.size()));
    for (auto t : s.caption) write_u32(out, static_cast<std::uint32_t>(t));
    for (double v : s.video) write_f32(out, static_cast<float>(v));
  };
  for (std::size_t i = 0; i < n_train; ++i) write_sample(train_sample(seed, i, cfg));
  for (std::size_t i = 0; i < n_val; ++i) write_sample(val_sample(seed, i, cfg));
  if (!out) throw ValidationError("generate_dataset: write failure on " + path);
  return warnings;
}

Dataset load_dataset(const std::string& path, const DatagenConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("dataset: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "RLDS", 4) != 0)
    throw ValidationError("dataset: bad magic in " + path);
  const std::uint32_t version = read_u32(in, path);
  if (version != 1)
    throw ValidationError("dataset: unsupported format version " +
                          std::to_string(version));
  Dataset ds;
  ds.cfg = cfg;
  const std::uint64_t n_train = read_u64(in, path), n_val = read_u64(in, path);
  const std::size_t video_len = cfg.frames * 3 * cfg.image_size * cfg.image_size;
  auto read_sample = [&]() {
    SamplePair s;
    s.concept_id = read_u32(in, path);
    const std::uint32_t cap_len = read_u32(in, path);
    if (cap_len > 4096) throw ValidationError("dataset: corrupt caption length");
    s.caption.resize(cap_len);
    for (auto& t : s.caption) t = read_u32(in, path);
    s.video.resize(video_len);
    for (auto& v : s.video) {
      const std::uint32_t bits = read_u32(in, path);
      float f;
      std::memcpy(&f, &bits, 4);
      v = static_cast<double>(f);
    }
    return s;
  };
  for (std::uint64_t i = 0; i < n_train; ++i) ds.train.push_back(read_sample());
  for (std::uint64_t i = 0; i < n_val; ++i) ds.val.push_back(read_sample());
  // trailing garbage is as suspicious as truncation
  char extra;
  if (in.read(&extra, 1))
    throw ValidationError("dataset: trailing bytes in " + path);
  return ds;
}

}  // namespace vta
