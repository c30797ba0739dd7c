// SPDX-License-Identifier: Apache-2.0
#include "fintrec/train.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "fintrec/optim.hpp"
#include "fintrec/tensor.hpp"

namespace fintrec::train {

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng = Rng(seed).fork(0x0e0c * 131 + static_cast<uint64_t>(epoch));
    for (size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    return order;
}

Rng example_rng(uint64_t seed, int epoch, size_t example_index) {
    return Rng(seed).fork(0xd0u + static_cast<uint64_t>(epoch)).fork(example_index);
}

namespace {

AdamW make_optimizer(model::FinTRecModel& m, const TrainConfig& cfg) {
    // Frozen parameters stay out of the optimizer so adaptation freeze
    // contracts hold bitwise (no weight decay, no moment updates).
    std::vector<Tensor> tensors;
    tensors.reserve(m.params().size());
    for (auto& [name, t] : m.params()) {
        if (t.requires_grad()) tensors.push_back(t);
    }
    AdamWConfig oc;
    oc.lr = cfg.lr;
    oc.weight_decay = cfg.weight_decay;
    return AdamW(std::move(tensors), oc);
}

void validate(const std::vector<model::ModelInput>& inputs, const TrainConfig& cfg) {
    if (inputs.empty()) throw std::invalid_argument("train: no examples");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be positive");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
}

}  // namespace

float fit_pctr(model::FinTRecModel& m, const std::vector<model::ModelInput>& inputs,
               const TrainConfig& cfg) {
    validate(inputs, cfg);
    AdamW opt = make_optimizer(m, cfg);
    double epoch_loss = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(inputs.size(), cfg.seed, epoch);
        double loss_sum = 0.0;
        size_t label_sum = 0;
        int batch_no = 0;
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
            std::vector<Tensor> logits;
            std::vector<std::vector<int>> positions, labels;
            size_t batch_labels = 0;
            for (size_t j = at; j < end; ++j) {
                const auto& in = inputs[order[j]];
                Rng rng = example_rng(cfg.seed, epoch, order[j]);
                logits.push_back(m.pctr_logits(in, cfg.dropout ? &rng : nullptr));
                positions.push_back(in.label_pos);
                labels.push_back(in.label_item);
                batch_labels += in.label_pos.size();
            }
            if (batch_labels == 0) continue;
            Tensor loss = model::next_item_loss(logits, positions, labels);
            GradMap grads = forward_backward(loss);
            opt.step(grads);
            loss_sum += static_cast<double>(loss.scalar()) * static_cast<double>(batch_labels);
            label_sum += batch_labels;
            ++batch_no;
            if (cfg.progress_every > 0 && batch_no % cfg.progress_every == 0) {
                std::fprintf(stderr, "epoch %d batch %d loss %.4f\n", epoch, batch_no,
                             loss_sum / static_cast<double>(label_sum));
            }
        }
        epoch_loss = label_sum > 0 ? loss_sum / static_cast<double>(label_sum) : 0.0;
    }
    return static_cast<float>(epoch_loss);
}

float fit_pcvr(model::FinTRecModel& m, const std::vector<model::ModelInput>& inputs,
               const TrainConfig& cfg) {
    validate(inputs, cfg);
    for (const auto& in : inputs) {
        if (in.cvr_label != 0.0f && in.cvr_label != 1.0f) {
            throw std::invalid_argument("train: conversion example without a binary label");
        }
    }
    AdamW opt = make_optimizer(m, cfg);
    double epoch_loss = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(inputs.size(), cfg.seed, epoch);
        double loss_sum = 0.0;
        size_t seen = 0;
        int batch_no = 0;
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
            Tensor sum;
            for (size_t j = at; j < end; ++j) {
                const auto& in = inputs[order[j]];
                Rng rng = example_rng(cfg.seed, epoch, order[j]);
                Tensor prob = m.pcvr_prob(in, cfg.dropout ? &rng : nullptr);
                Tensor part = model::bce_loss(prob, {in.cvr_label});
                sum = sum.defined() ? add(sum, part) : part;
            }
            const auto batch = static_cast<float>(end - at);
            Tensor loss = scale(sum, 1.0f / batch);
            GradMap grads = forward_backward(loss);
            opt.step(grads);
            loss_sum += static_cast<double>(loss.scalar()) * batch;
            seen += end - at;
            ++batch_no;
            if (cfg.progress_every > 0 && batch_no % cfg.progress_every == 0) {
                std::fprintf(stderr, "epoch %d batch %d loss %.4f\n", epoch, batch_no,
                             loss_sum / static_cast<double>(seen));
            }
        }
        epoch_loss = loss_sum / static_cast<double>(seen);
    }
    return static_cast<float>(epoch_loss);
}

}  // namespace fintrec::train
