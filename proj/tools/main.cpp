// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: data generation, training, retrieval evaluation,
// gradient checks, mask visualization, and the ablation/sweep tables.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "vta/gradcheck_suite.hpp"
#include "vta/harness.hpp"

namespace {

vta::DatagenConfig datagen_config(const vta::Config& cfg) {
  vta::DatagenConfig d;
  d.frames = cfg.frames;
  d.image_size = cfg.image_size;
  d.text_len = cfg.text_len;
  return d;
}

void print_metrics(const vta::RetrievalMetrics& m) {
  std::cout << m.direction << "  R@1 " << m.r1 << "  R@5 " << m.r5 << "  R@10 " << m.r10
            << "  MedR " << m.medr << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"quantize-aggregate-interact video-text alignment, desk scale"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset file");
  std::uint64_t gen_seed = 1;
  std::size_t n_train = 512, n_val = 64;
  std::string gen_out = "data.bin";
  gen->add_option("--seed", gen_seed);
  gen->add_option("--n-train", n_train);
  gen->add_option("--n-val", n_val);
  gen->add_option("--out", gen_out)->required();

  auto* train = app.add_subcommand("train", "train from a config file");
  std::string train_config, train_data, train_out = "model.ckpt", resume;
  train->add_option("--config", train_config)->required();
  train->add_option("--data", train_data)->required();
  train->add_option("--out", train_out);
  train->add_option("--resume", resume);

  auto* eval = app.add_subcommand("eval", "retrieval metrics on the val split");
  std::string eval_ckpt, eval_data;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--data", eval_data)->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  std::string gc_op;
  gc->add_option("--op", gc_op, "only checks whose name contains this substring");

  auto* vis = app.add_subcommand("visualize", "dump frames, cluster maps, region masks");
  std::string vis_ckpt, vis_data, vis_out = "viz";
  std::size_t vis_index = 0;
  vis->add_option("--checkpoint", vis_ckpt)->required();
  vis->add_option("--data", vis_data)->required();
  vis->add_option("--sample-index", vis_index);
  vis->add_option("--out", vis_out);

  auto* abl = app.add_subcommand("ablate", "component ablations plus K and depth sweeps");
  std::string abl_config, abl_data, abl_out;
  abl->add_option("--config", abl_config)->required();
  abl->add_option("--data", abl_data)->required();
  abl->add_option("--out", abl_out, "also write the tables to this file");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    vta::DatagenConfig d;
    d.text_len = vta::Config{}.text_len;
    for (const auto& w : vta::generate_dataset(gen_out, gen_seed, n_train, n_val, d))
      std::cerr << "warning: " << w << "\n";
    std::cout << "wrote " << gen_out << " (" << n_train << " train / " << n_val
              << " val)\n";
  } else if (train->parsed()) {
    vta::Config cfg = vta::Config::load(train_config);
    vta::TrainState state =
        resume.empty() ? vta::TrainState::init(cfg) : vta::load_checkpoint(resume);
    auto ds = vta::load_dataset(train_data, datagen_config(state.cfg()));
    // `steps` is the total step count: a resumed run trains the remainder
    if (state.step >= cfg.steps)
      throw vta::ValidationError("train: checkpoint is already at step " +
                                 std::to_string(state.step) + ", nothing to do");
    vta::train_loop(state, ds, cfg.steps - state.step, &std::cout);
    vta::save_checkpoint(state, train_out);
    std::cout << "saved " << train_out << " at step " << state.step << "\n";
  } else if (eval->parsed()) {
    vta::TrainState state = vta::load_checkpoint(eval_ckpt);
    auto ds = vta::load_dataset(eval_data, datagen_config(state.cfg()));
    auto sim = vta::similarity_matrix(state.model, ds.val);
    auto [t2v, v2t] = vta::evaluate_retrieval(sim, ds.val.size());
    print_metrics(t2v);
    print_metrics(v2t);
  } else if (gc->parsed()) {
    if (!vta::run_gradcheck_suite(std::cout, gc_op)) return 2;
  } else if (vis->parsed()) {
    vta::TrainState state = vta::load_checkpoint(vis_ckpt);
    auto ds = vta::load_dataset(vis_data, datagen_config(state.cfg()));
    if (vis_index >= ds.val.size())
      throw vta::ValidationError("visualize: --sample-index out of range");
    for (const auto& p : vta::visualize(state, ds.val[vis_index], vis_out))
      std::cout << p << "\n";
  } else if (abl->parsed()) {
    vta::Config cfg = vta::Config::load(abl_config);
    auto ds = vta::load_dataset(abl_data, datagen_config(cfg));
    std::ostringstream tables;
    vta::run_ablation_suite(cfg, ds, tables);
    vta::run_k_sweep(cfg, ds, tables);
    vta::run_depth_sweep(cfg, ds, tables);
    std::cout << tables.str();
    if (!abl_out.empty()) {
      std::ofstream out(abl_out);
      out << tables.str();
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const vta::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const vta::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
