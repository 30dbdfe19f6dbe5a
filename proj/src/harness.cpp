// SPDX-License-Identifier: Apache-2.0

#include "vta/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace vta {

void AdamOptimizer::init(const std::vector<std::pair<std::string, TensorPtr>>& params) {
  m.clear();
  v.clear();
  for (const auto& [name, p] : params) {
    m.emplace_back(p->size(), 0.0);
    v.emplace_back(p->size(), 0.0);
  }
  t = 0;
}

void AdamOptimizer::step(const std::vector<std::pair<std::string, TensorPtr>>& params) {
  if (m.size() != params.size())
    throw ValidationError("optimizer state does not match parameter list");
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].second;
    p.ensure_grad();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad[j];
      m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
      v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
      p.values[j] -= lr * (m[i][j] / bc1) / (std::sqrt(v[i][j] / bc2) + eps);
    }
  }
}

TrainState TrainState::init(const Config& cfg) {
  TrainState s{Model::init(cfg), {}, 0, std::mt19937_64(cfg.seed ^ 0x5eedULL)};
  s.opt.lr = cfg.lr;
  s.opt.init(s.model.named_params());
  return s;
}

VideoBatch make_video_batch(const std::vector<const SamplePair*>& samples,
                            const Config& cfg) {
  VideoBatch v;
  v.batch = samples.size();
  v.frames = cfg.frames;
  v.height = v.width = cfg.image_size;
  const std::size_t stride = cfg.frames * 3 * cfg.image_size * cfg.image_size;
  v.values.resize(v.batch * stride);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->video.size() != stride)
      throw ValidationError("video sample does not match config geometry");
    std::copy(samples[i]->video.begin(), samples[i]->video.end(),
              v.values.begin() + i * stride);
  }
  return v;
}

TextBatch make_text_batch(const std::vector<const SamplePair*>& samples,
                          const Config& cfg) {
  TextBatch t;
  t.batch = samples.size();
  t.length = cfg.text_len;
  for (const auto* s : samples) {
    if (s->caption.size() != cfg.text_len)
      throw ValidationError("caption does not match config text_len");
    for (auto id : s->caption) {
      t.ids.push_back(id);
      t.pad.push_back(id == tok::kPad ? 1 : 0);
    }
  }
  return t;
}

std::vector<const SamplePair*> sample_batch(TrainState& state,
                                            const std::vector<SamplePair>& train) {
  const auto& cfg = state.cfg();
  std::vector<const SamplePair*> batch;
  if (!cfg.strict_negatives) {
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(&train[pick(state.rng)]);
    return batch;
  }
  // one random sample per concept, distinct concepts
  std::vector<std::vector<const SamplePair*>> by_concept(kNumConcepts);
  for (const auto& s : train) by_concept[s.concept_id].push_back(&s);
  std::vector<std::size_t> concepts;
  for (std::size_t c = 0; c < kNumConcepts; ++c)
    if (!by_concept[c].empty()) concepts.push_back(c);
  if (concepts.size() < cfg.batch_size)
    throw ValidationError("strict_negatives: not enough distinct concepts in train set");
  std::shuffle(concepts.begin(), concepts.end(), state.rng);
  for (std::size_t i = 0; i < cfg.batch_size; ++i) {
    const auto& pool = by_concept[concepts[i]];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    batch.push_back(pool[pick(state.rng)]);
  }
  return batch;
}

double train_step(TrainState& state, const std::vector<const SamplePair*>& batch) {
  auto& model = state.model;
  const auto& cfg = state.cfg();
  if (cfg.strict_negatives) {
    std::set<std::uint32_t> seen;
    for (const auto* s : batch)
      if (!seen.insert(s->concept_id).second)
        throw ValidationError("strict_negatives: duplicate concept in batch");
  }
  auto params = model.named_params();
  for (auto& [name, p] : params) {
    p->ensure_grad();
    p->zero_grad();
  }
  Tape tape;
  auto video = make_video_batch(batch, cfg);
  auto text = make_text_batch(batch, cfg);
  auto vf = model.embed_video(tape, video);
  auto y = model.embed_text(tape, text);
  auto loss = model.loss(tape, vf, y);
  const double loss_val = loss->values[0];
  if (!std::isfinite(loss_val)) {
    std::ostringstream dump;
    dump << "train_step: non-finite loss at step " << state.step << "; param norms:";
    for (const auto& [name, p] : params) {
      double sq = 0.0;
      for (double x : p->values) sq += x * x;
      dump << " " << name << "=" << std::sqrt(sq);
    }
    throw NumericalError(dump.str());
  }
  tape.backward(loss);
  state.opt.step(params);
  if (!cfg.disable_quantization)
    momentum_update(*vf.features, vf.assignments, model.codebook, state.rng);
  ++state.step;
  return loss_val;
}

double train_loop(TrainState& state, const Dataset& ds, std::size_t steps,
                  std::ostream* log) {
  double loss = 0.0;
  for (std::size_t i = 0; i < steps; ++i) {
    auto batch = sample_batch(state, ds.train);
    loss = train_step(state, batch);
    const auto& cfg = state.cfg();
    if (log && (state.step % cfg.log_every == 0 || i + 1 == steps)) {
      (*log) << "step " << state.step << " loss " << std::fixed << std::setprecision(4)
             << loss;
      if (!cfg.disable_quantization) {
        (*log) << " codebook_perplexity " << std::setprecision(2)
               << state.model.codebook.perplexity();
        state.model.codebook.reset_usage();
      }
      (*log) << "\n";
    }
  }
  return loss;
}

std::vector<double> similarity_matrix(Model& model,
                                      const std::vector<SamplePair>& samples) {
  const std::size_t n = samples.size();
  const auto& cfg = model.cfg;
  const std::size_t chunk = std::max<std::size_t>(1, cfg.batch_size);
  std::vector<double> vemb(n * cfg.d_shared), temb(n * cfg.d_shared);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    std::vector<const SamplePair*> part;
    for (std::size_t i = start; i < end; ++i) part.push_back(&samples[i]);
    Tape tape;
    auto vf = model.embed_video(tape, make_video_batch(part, cfg));
    auto y = model.embed_text(tape, make_text_batch(part, cfg));
    std::copy(vf.emb->values.begin(), vf.emb->values.end(),
              vemb.begin() + start * cfg.d_shared);
    std::copy(y->values.begin(), y->values.end(), temb.begin() + start * cfg.d_shared);
  }
  std::vector<double> sim(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < cfg.d_shared; ++k)
        sim[i * n + j] += vemb[i * cfg.d_shared + k] * temb[j * cfg.d_shared + k];
  return sim;
}

namespace {

RetrievalMetrics metrics_from_ranks(std::vector<std::size_t> ranks, std::string dir) {
  const std::size_t n = ranks.size();
  RetrievalMetrics m;
  m.direction = std::move(dir);
  for (std::size_t r : ranks) {
    if (r <= 1) m.r1 += 1;
    if (r <= 5) m.r5 += 1;
    if (r <= 10) m.r10 += 1;
  }
  m.r1 *= 100.0 / n;
  m.r5 *= 100.0 / n;
  m.r10 *= 100.0 / n;
  std::sort(ranks.begin(), ranks.end());
  m.medr = static_cast<double>(ranks[(n - 1) / 2]);  // lower median for even n
  return m;
}

}  // namespace

std::pair<RetrievalMetrics, RetrievalMetrics> evaluate_retrieval(
    const std::vector<double>& sim, std::size_t n) {
  if (sim.size() != n * n)
    throw ValidationError("evaluate_retrieval: similarity matrix is not square");
  std::vector<std::size_t> t2v_ranks(n), v2t_ranks(n);
  for (std::size_t q = 0; q < n; ++q) {
    // t2v: text q retrieves videos by column q
    const double truth_c = sim[q * n + q];
    std::size_t rank_c = 1;
    for (std::size_t i = 0; i < n; ++i)
      if (i != q && sim[i * n + q] >= truth_c) ++rank_c;  // ties count against us
    t2v_ranks[q] = rank_c;
    // v2t: video q retrieves texts by row q
    std::size_t rank_r = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (j != q && sim[q * n + j] >= truth_c) ++rank_r;
    v2t_ranks[q] = rank_r;
  }
  return {metrics_from_ranks(std::move(t2v_ranks), "t2v"),
          metrics_from_ranks(std::move(v2t_ranks), "v2t")};
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_str(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<long>(s.size()));
}

void put_f64_vec(std::ostream& out, const std::vector<double>& v) {
  put_u64(out, v.size());
  for (double x : v) put_f64(out, x);
}

struct Reader {
  std::ifstream in;
  std::string path;
  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw ValidationError("checkpoint: cannot open " + p);
  }
  void bytes(void* dst, std::size_t n) {
    if (!in.read(static_cast<char*>(dst), static_cast<long>(n)))
      throw ValidationError("checkpoint: truncated file " + path);
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
  }
  std::uint64_t u64() {
    std::uint64_t lo = u32(), hi = u32();
    return lo | (hi << 32);
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > (1ULL << 32)) throw ValidationError("checkpoint: corrupt string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::vector<double> f64_vec() {
    const std::uint64_t n = u64();
    if (n > (1ULL << 32)) throw ValidationError("checkpoint: corrupt array length");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
};

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("checkpoint: cannot write " + path);
  out.write("RLCK", 4);
  put_u32(out, kCheckpointVersion);
  put_str(out, state.cfg().to_text());
  put_u64(out, state.step);
  std::ostringstream rng_ss;
  rng_ss << state.rng;
  put_str(out, rng_ss.str());

  auto params = state.model.named_params();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    put_str(out, name);
    out.put(2);  // dtype code: f64
    put_u32(out, static_cast<std::uint32_t>(p->shape.size()));
    for (auto d : p->shape) put_u64(out, d);
    for (double v : p->values) put_f64(out, v);
  }

  const auto& cb = state.model.codebook;
  put_u64(out, cb.size());
  put_u64(out, cb.dim);
  put_f64_vec(out, cb.vectors);
  put_f64_vec(out, cb.ema_counts);
  put_f64_vec(out, cb.ema_sums);
  put_u64(out, cb.steps_unused.size());
  for (auto s : cb.steps_unused) put_u64(out, s);
  put_u64(out, cb.usage.size());
  for (auto u : cb.usage) put_u64(out, u);

  put_u64(out, state.opt.t);
  put_u32(out, static_cast<std::uint32_t>(state.opt.m.size()));
  for (const auto& slot : state.opt.m) put_f64_vec(out, slot);
  for (const auto& slot : state.opt.v) put_f64_vec(out, slot);
  if (!out) throw ValidationError("checkpoint: write failure on " + path);
}

TrainState load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "RLCK", 4) != 0)
    throw ValidationError("checkpoint: bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  const std::string cfg_text = r.str();
  Config cfg = Config::parse(cfg_text);
  TrainState state = TrainState::init(cfg);
  state.step = r.u64();
  {
    std::istringstream rng_ss(r.str());
    rng_ss >> state.rng;
  }
  auto params = state.model.named_params();
  const std::uint32_t n_params = r.u32();
  if (n_params != params.size())
    throw ValidationError("checkpoint: parameter count mismatch");
  for (auto& [name, p] : params) {
    const std::string stored = r.str();
    if (stored != name)
      throw ValidationError("checkpoint: parameter name mismatch: " + stored + " vs " +
                            name);
    char dtype;
    r.bytes(&dtype, 1);
    if (dtype != 2) throw ValidationError("checkpoint: unsupported dtype code");
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != p->shape) throw ValidationError("checkpoint: shape mismatch for " + name);
    for (auto& v : p->values) v = r.f64();
  }
  auto& cb = state.model.codebook;
  const std::uint64_t M = r.u64(), dim = r.u64();
  if (M != cb.size() || dim != cb.dim)
    throw ValidationError("checkpoint: codebook geometry mismatch");
  cb.vectors = r.f64_vec();
  cb.ema_counts = r.f64_vec();
  cb.ema_sums = r.f64_vec();
  const std::uint64_t n_unused = r.u64();
  cb.steps_unused.resize(n_unused);
  for (auto& s : cb.steps_unused) s = r.u64();
  const std::uint64_t n_usage = r.u64();
  cb.usage.resize(n_usage);
  for (auto& u : cb.usage) u = r.u64();
  if (cb.vectors.size() != M * dim || cb.ema_counts.size() != M ||
      cb.ema_sums.size() != M * dim || n_unused != M || n_usage != M)
    throw ValidationError("checkpoint: corrupt codebook payload");

  state.opt.t = r.u64();
  const std::uint32_t n_slots = r.u32();
  if (n_slots != params.size())
    throw ValidationError("checkpoint: optimizer slot count mismatch");
  for (auto& slot : state.opt.m) slot = r.f64_vec();
  for (auto& slot : state.opt.v) slot = r.f64_vec();
  for (std::size_t i = 0; i < params.size(); ++i)
    if (state.opt.m[i].size() != params[i].second->size() ||
        state.opt.v[i].size() != params[i].second->size())
      throw ValidationError("checkpoint: optimizer slot size mismatch");
  return state;
}

// ---------------------------------------------------------------------------
// visualization
// ---------------------------------------------------------------------------

namespace {

void write_pgm(const std::string& path, std::size_t w, std::size_t h,
               const std::vector<unsigned char>& gray) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("visualize: cannot write " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<long>(gray.size()));
}

void write_ppm(const std::string& path, std::size_t w, std::size_t h,
               const std::vector<unsigned char>& rgb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("visualize: cannot write " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<long>(rgb.size()));
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
}

}  // namespace

std::array<double, 2> mask_center_of_mass(const Tensor& masks, std::size_t b,
                                          std::size_t t, std::size_t k,
                                          std::size_t upscale) {
  const std::size_t T = masks.shape[1], K = masks.shape[2];
  const std::size_t H = masks.shape[3], W = masks.shape[4];
  const double* m = masks.values.data() + (((b * T + t) * K + k) * H * W);
  double total = 0.0, row = 0.0, col = 0.0;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      total += m[i * W + j];
      row += m[i * W + j] * (static_cast<double>(i) + 0.5);
      col += m[i * W + j] * (static_cast<double>(j) + 0.5);
    }
  return {row / total * static_cast<double>(upscale),
          col / total * static_cast<double>(upscale)};
}

std::vector<std::string> visualize(TrainState& state, const SamplePair& sample,
                                   const std::string& out_dir) {
  const auto& cfg = state.cfg();
  std::filesystem::create_directories(out_dir);
  std::vector<const SamplePair*> one{&sample};
  Tape tape;
  auto vf = state.model.embed_video(tape, make_video_batch(one, cfg));
  const std::size_t H = cfg.image_size, g = cfg.grid_side();
  const std::size_t up = H / g;
  std::vector<std::string> written;
  auto upscaled = [&](const double* grid, double lo, double hi) {
    std::vector<unsigned char> img(H * H);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < H; ++j) {
        const double v = grid[(i / up) * g + (j / up)];
        img[i * H + j] = to_byte(hi > lo ? (v - lo) / (hi - lo) : 0.0);
      }
    return img;
  };
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    // raw frame
    std::vector<unsigned char> rgb(H * H * 3);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < H * H; ++i)
        rgb[i * 3 + c] = to_byte(sample.video[(t * 3 + c) * H * H + i]);
    std::string fpath = out_dir + "/frame" + std::to_string(t) + ".ppm";
    write_ppm(fpath, H, H, rgb);
    written.push_back(fpath);
    // cluster-index map
    if (!cfg.disable_quantization) {
      std::vector<double> idx(g * g);
      for (std::size_t s = 0; s < g * g; ++s)
        idx[s] = static_cast<double>(vf.assignments.indices[t * g * g + s]);
      auto img = upscaled(idx.data(), 0.0, static_cast<double>(cfg.codebook_size - 1));
      std::string cpath = out_dir + "/clusters" + std::to_string(t) + ".pgm";
      write_pgm(cpath, H, H, img);
      written.push_back(cpath);
    }
    // region-mask heatmaps, linear grayscale
    if (vf.masks) {
      const std::size_t K = cfg.regions;
      for (std::size_t k = 0; k < K; ++k) {
        const double* m = vf.masks->values.data() + ((t * K + k) * g * g);
        const double hi = *std::max_element(m, m + g * g);
        auto img = upscaled(m, 0.0, hi);
        std::string mpath = out_dir + "/mask" + std::to_string(t) + "_r" +
                            std::to_string(k) + ".pgm";
        write_pgm(mpath, H, H, img);
        written.push_back(mpath);
      }
    }
  }
  return written;
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

RunResult train_and_eval(Config cfg, const Dataset& ds, const std::string& name,
                         std::ostream* log) {
  auto state = TrainState::init(cfg);
  RunResult r;
  r.name = name;
  if (cfg.steps > 0) {
    r.first_loss = train_step(state, sample_batch(state, ds.train));
    r.final_loss = train_loop(state, ds, cfg.steps - 1, log);
  }
  auto sim = similarity_matrix(state.model, ds.val);
  std::tie(r.t2v, r.v2t) = evaluate_retrieval(sim, ds.val.size());
  return r;
}

namespace {

void print_table(std::ostream& out, const std::string& title,
                 const std::vector<RunResult>& rows) {
  out << title << "\n";
  out << std::left << std::setw(22) << "variant" << std::right << std::setw(8) << "R@1"
      << std::setw(8) << "R@5" << std::setw(8) << "R@10" << std::setw(8) << "MedR"
      << std::setw(12) << "loss" << "\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(22) << r.name << std::right << std::fixed
        << std::setprecision(1) << std::setw(8) << r.t2v.r1 << std::setw(8) << r.t2v.r5
        << std::setw(8) << r.t2v.r10 << std::setw(8) << std::setprecision(0)
        << r.t2v.medr << std::setw(12) << std::setprecision(4) << r.final_loss << "\n";
  }
  out << "\n";
}

}  // namespace

std::vector<RunResult> run_ablation_suite(const Config& cfg, const Dataset& ds,
                                          std::ostream& out) {
  std::vector<RunResult> rows;
  rows.push_back(train_and_eval(cfg, ds, "full"));
  Config no_int = cfg;
  no_int.disable_interaction = true;
  rows.push_back(train_and_eval(no_int, ds, "- interaction"));
  Config no_agg = cfg;
  no_agg.disable_aggregation = true;
  rows.push_back(train_and_eval(no_agg, ds, "- aggregation"));
  Config no_q = cfg;
  no_q.disable_quantization = true;
  rows.push_back(train_and_eval(no_q, ds, "- quantization"));
  print_table(out, "ablation (text->video retrieval on val)", rows);
  return rows;
}

std::vector<RunResult> run_k_sweep(const Config& cfg, const Dataset& ds,
                                   std::ostream& out) {
  std::vector<RunResult> rows;
  for (std::size_t k : {1, 2, 4, 8, 16}) {
    Config c = cfg;
    c.regions = k;
    rows.push_back(train_and_eval(c, ds, "K=" + std::to_string(k)));
  }
  print_table(out, "region-count sweep (text->video retrieval on val)", rows);
  return rows;
}

std::vector<RunResult> run_depth_sweep(const Config& cfg, const Dataset& ds,
                                       std::ostream& out) {
  std::vector<RunResult> rows;
  for (std::size_t depth : {1, 2, 3, 4}) {
    Config c = cfg;
    c.interaction_depth = depth;
    rows.push_back(train_and_eval(c, ds, "depth=" + std::to_string(depth)));
  }
  print_table(out, "interaction-depth sweep (text->video retrieval on val)", rows);
  return rows;
}

}  // namespace vta
