// SPDX-License-Identifier: Apache-2.0
//
// Symmetric contrastive objective over in-batch video-text pairs.

#pragma once

#include "vta/tensor.hpp"

namespace vta {

// Full N x N matrix of dot products between unit-norm rows; asserts the
// norms (within 1e-4). z and y are [N, d].
TensorPtr similarity(Tape& tape, const TensorPtr& z, const TensorPtr& y);

// L_v2t + L_t2v with logits sim / tau; the diagonal holds the positives.
TensorPtr contrastive_loss(Tape& tape, const TensorPtr& sim, double tau);

// Learnable-temperature variant: tau = exp(log_tau), kept positive by
// construction.
TensorPtr contrastive_loss(Tape& tape, const TensorPtr& sim, const TensorPtr& log_tau);

}  // namespace vta
