// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "fintrec/tensor.hpp"

namespace fintrec {

struct AdamWConfig {
    float lr = 1e-4f;
    float weight_decay = 1e-5f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// AdamW with decoupled weight decay. Parameters are registered once; each
// step() applies the update to every registered parameter that has an entry
// in the gradient map. Parameters without a gradient entry are left untouched
// (their moment buffers do not advance), so frozen weights stay bitwise equal.
class AdamW {
public:
    explicit AdamW(std::vector<Tensor> params, AdamWConfig cfg = {});

    void step(const GradMap& grads);
    int64_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    struct Slot {
        Tensor param;
        std::vector<float> m;
        std::vector<float> v;
        int64_t t = 0;  // per-parameter step count for bias correction
    };

    AdamWConfig cfg_;
    std::vector<Slot> slots_;
    std::unordered_map<int64_t, size_t> by_id_;
    int64_t step_ = 0;
};

}  // namespace fintrec
