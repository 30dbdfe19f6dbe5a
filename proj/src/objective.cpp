// SPDX-License-Identifier: Apache-2.0

#include "vta/objective.hpp"

#include <cmath>

namespace vta {

namespace {

void check_unit_rows(const Tensor& t, const char* which) {
  const std::size_t d = t.shape[1];
  for (std::size_t i = 0; i < t.shape[0]; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += t.values[i * d + j] * t.values[i * d + j];
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-4) {
      throw ValidationError(std::string("similarity: ") + which + " row " +
                            std::to_string(i) + " is not unit-norm");
    }
  }
}

TensorPtr loss_from_scaled(Tape& tape, const TensorPtr& scaled) {
  auto v2t = tape.diag_mean(tape.log_softmax(scaled, 1));  // softmax over texts
  auto t2v = tape.diag_mean(tape.log_softmax(scaled, 0));  // softmax over videos
  return tape.scale(tape.add(v2t, t2v), -1.0);
}

}  // namespace

TensorPtr similarity(Tape& tape, const TensorPtr& z, const TensorPtr& y) {
  if (z->shape.size() != 2 || z->shape != y->shape) {
    throw ValidationError("similarity: need matching [N,d] inputs, got " +
                          shape_str(z->shape) + " and " + shape_str(y->shape));
  }
  check_unit_rows(*z, "video");
  check_unit_rows(*y, "text");
  const std::size_t n = z->shape[0], d = z->shape[1];
  auto sim = tape.bmm(tape.reshape(z, {1, n, d}), tape.reshape(y, {1, n, d}),
                      /*transpose_b=*/true);
  return tape.reshape(sim, {n, n});
}

TensorPtr contrastive_loss(Tape& tape, const TensorPtr& sim, double tau) {
  if (tau <= 0.0) throw ValidationError("contrastive_loss: tau must be > 0");
  if (sim->shape.size() != 2 || sim->shape[0] != sim->shape[1]) {
    throw ValidationError("contrastive_loss: need a square matrix, got " +
                          shape_str(sim->shape));
  }
  return loss_from_scaled(tape, tape.scale(sim, 1.0 / tau));
}

TensorPtr contrastive_loss(Tape& tape, const TensorPtr& sim, const TensorPtr& log_tau) {
  if (sim->shape.size() != 2 || sim->shape[0] != sim->shape[1]) {
    throw ValidationError("contrastive_loss: need a square matrix, got " +
                          shape_str(sim->shape));
  }
  auto inv_tau = tape.exp(tape.scale(log_tau, -1.0));
  return loss_from_scaled(tape, tape.scale_by(sim, inv_tau));
}

}  // namespace vta
