// SPDX-License-Identifier: Apache-2.0
//
// Training loop, retrieval evaluation, checkpointing, visualization, and
// the ablation/sweep drivers.

#pragma once

#include <array>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "vta/datagen.hpp"
#include "vta/model.hpp"

namespace vta {

struct RetrievalMetrics {
  double r1 = 0, r5 = 0, r10 = 0;  // percentages
  double medr = 0;                 // 1-based, lower median for even N
  std::string direction;           // "t2v" or "v2t"
};

// Adam with bias correction; one slot pair per parameter, same order as
// Model::named_params().
struct AdamOptimizer {
  double lr = 2e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m, v;

  void init(const std::vector<std::pair<std::string, TensorPtr>>& params);
  void step(const std::vector<std::pair<std::string, TensorPtr>>& params);
};

struct TrainState {
  Model model;
  AdamOptimizer opt;
  std::uint64_t step = 0;
  std::mt19937_64 rng;

  const Config& cfg() const { return model.cfg; }
  static TrainState init(const Config& cfg);
};

VideoBatch make_video_batch(const std::vector<const SamplePair*>& samples,
                            const Config& cfg);
TextBatch make_text_batch(const std::vector<const SamplePair*>& samples,
                          const Config& cfg);

// Strict-negatives mode draws one sample per concept (distinct concepts);
// otherwise uniform with replacement.
std::vector<const SamplePair*> sample_batch(TrainState& state,
                                            const std::vector<SamplePair>& train);

// One optimizer step; returns the (pre-step) loss value.
double train_step(TrainState& state, const std::vector<const SamplePair*>& batch);

// Runs `steps` additional steps; logs every cfg.log_every when log != null.
double train_loop(TrainState& state, const Dataset& ds, std::size_t steps,
                  std::ostream* log = nullptr);

// Full N x N video-text similarity over the given samples (no training
// side effects).
std::vector<double> similarity_matrix(Model& model, const std::vector<SamplePair>& samples);

// Ranking with pessimistic tie handling: tied competitors rank ahead.
std::pair<RetrievalMetrics, RetrievalMetrics> evaluate_retrieval(
    const std::vector<double>& sim, std::size_t n);

void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

// Per frame: raw frame (PPM), cluster-index map (PGM), and one PGM heatmap
// per region mask, all upscaled to frame resolution. Returns written paths.
std::vector<std::string> visualize(TrainState& state, const SamplePair& sample,
                                   const std::string& out_dir);

struct RunResult {
  std::string name;
  RetrievalMetrics t2v, v2t;
  double first_loss = 0, final_loss = 0;
};

RunResult train_and_eval(Config cfg, const Dataset& ds, const std::string& name,
                         std::ostream* log = nullptr);

// Table-style sweeps; each returns one RunResult per row and prints a
// plain-text table.
std::vector<RunResult> run_ablation_suite(const Config& cfg, const Dataset& ds,
                                          std::ostream& out);
std::vector<RunResult> run_k_sweep(const Config& cfg, const Dataset& ds,
                                   std::ostream& out);
std::vector<RunResult> run_depth_sweep(const Config& cfg, const Dataset& ds,
                                       std::ostream& out);

// Spatial center of mass of one mask slice in pixel coordinates.
std::array<double, 2> mask_center_of_mass(const Tensor& masks, std::size_t b,
                                          std::size_t t, std::size_t k,
                                          std::size_t upscale);

}  // namespace vta
