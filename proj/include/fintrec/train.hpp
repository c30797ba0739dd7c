// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fintrec/model.hpp"
#include "fintrec/rng.hpp"

namespace fintrec::train {

struct TrainConfig {
    int epochs = 2;
    int batch_size = 16;
    float lr = 1e-3f;
    float weight_decay = 1e-5f;
    uint64_t seed = 1;
    bool dropout = true;    // training-time dropout; evaluation always runs clean
    int progress_every = 0; // batches between stderr progress lines; 0 = quiet
};

// Seed-derived visit order for one epoch. A pure function of (n, seed,
// epoch), so identical runs walk identical batches.
std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch);

// Dropout stream for one example: a pure function of (seed, epoch, dataset
// index), so batch boundaries never change the realized masks.
Rng example_rng(uint64_t seed, int epoch, size_t example_index);

// Minibatch AdamW over the next-item objective. Frozen parameters (those with
// requires_grad off) never receive gradients and stay bitwise intact. Returns
// the final epoch's mean loss per labeled position.
float fit_pctr(model::FinTRecModel& m, const std::vector<model::ModelInput>& inputs,
               const TrainConfig& cfg);

// Same loop over the conversion objective; returns the final epoch's mean
// binary cross-entropy.
float fit_pcvr(model::FinTRecModel& m, const std::vector<model::ModelInput>& inputs,
               const TrainConfig& cfg);

}  // namespace fintrec::train
