// SPDX-License-Identifier: Apache-2.0
#include "fintrec/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fintrec {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : cfg_(cfg) {
    slots_.reserve(params.size());
    for (auto& p : params) {
        if (!p.defined() || !p.requires_grad()) {
            throw std::invalid_argument("adamw: every registered parameter must require gradients");
        }
        if (by_id_.count(p.id())) continue;  // tolerate duplicate registration
        Slot s;
        s.param = p;
        s.m.assign(p.numel(), 0.0f);
        s.v.assign(p.numel(), 0.0f);
        by_id_[p.id()] = slots_.size();
        slots_.push_back(std::move(s));
    }
}

void AdamW::step(const GradMap& grads) {
    ++step_;
    for (auto& slot : slots_) {
        auto it = grads.find(slot.param.id());
        if (it == grads.end()) continue;
        const auto& g = it->second;
        auto& p = slot.param.mutable_data();
        if (g.size() != p.size()) throw std::runtime_error("adamw: gradient size mismatch");
        slot.t += 1;
        const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(slot.t));
        const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(slot.t));
        for (size_t i = 0; i < p.size(); ++i) {
            slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0f - cfg_.beta1) * g[i];
            slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
            const float mhat = slot.m[i] / bc1;
            const float vhat = slot.v[i] / bc2;
            p[i] -= cfg_.lr * cfg_.weight_decay * p[i];
            p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace fintrec
