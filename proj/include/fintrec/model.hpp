// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fintrec/pipeline.hpp"
#include "fintrec/rng.hpp"
#include "fintrec/sequence.hpp"
#include "fintrec/tensor.hpp"

namespace fintrec::model {

enum class HeadKind { pctr, pcvr };

struct TransformerConfig {
    int n_layers = 2;
    int d_embed = 64;   // embedding / fusion width
    int d_hidden = 32;  // block width; must divide by n_heads
    int n_heads = 2;
    int ffn_mult = 4;
    int head_hidden = 64;
    float dropout = 0.1f;
    int vocab_size = 0;  // token vocabulary incl. specials
    int n_items = 0;     // scored item vocabulary (click-head output width)
    int max_len = 64;
    int fm_dim = 32;
    int static_dim = 0;
    HeadKind head = HeadKind::pctr;

    void validate() const;
    int head_out() const { return head == HeadKind::pctr ? n_items : 2; }
};

// Boolean allow matrix, row-major [len x len].
struct AttentionMask {
    int len = 0;
    std::vector<uint8_t> allow;

    bool at(int q, int k) const { return allow[static_cast<size_t>(q) * len + k] != 0; }
};

// Click-model mask: allow(q, k) iff ts[k] < ts[q] or k == q; padded positions
// (the first pad_len) neither attend nor are attended.
AttentionMask causal_time_mask(const std::vector<int64_t>& ts_ms, int pad_len = 0);

// Conversion-model mask: every non-pad pair allowed.
AttentionMask full_mask(int len, int pad_len = 0);

// Model-ready view of one assembled sequence: left-padded token ids, aligned
// timestamps and temporal components, and the context features the heads
// consume.
struct ModelInput {
    std::vector<int> tokens;
    std::vector<int64_t> ts_ms;
    int pad_len = 0;
    std::vector<int> dow, wom, hod, moy, delta;
    std::vector<float> fs;  // [static_dim]
    std::vector<float> fm;  // pctr: [len * fm_dim] row-major; pcvr: [fm_dim]
    std::vector<float> fd;  // pcvr: endpoint-session aggregate
    std::vector<int> label_pos;  // pctr: positions whose next event was a click
    std::vector<int> label_item;
    float cvr_label = -1.0f;
    int32_t endpoint_item = -1;
    int16_t product_id = -1;

    int len() const { return static_cast<int>(tokens.size()); }
};

ModelInput make_input(const sequence::UserSequence& seq, const UserProfile& profile,
                      const pipeline::ContextTransformer& ctx, const TransformerConfig& cfg);

// Named parameter list; order is the checkpoint and optimizer order.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

class FinTRecModel {
  public:
    FinTRecModel() = default;

    static FinTRecModel init(const TransformerConfig& cfg, uint64_t seed);
    static FinTRecModel from_params(const TransformerConfig& cfg, ParamList params);

    const TransformerConfig& config() const { return cfg_; }
    const ParamList& params() const { return params_; }
    ParamList& params() { return params_; }
    bool has_param(const std::string& name) const;
    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);

    // Appends trainable extension rows for unseen tokens / items while the
    // base tables stay physically separate (and freezable bitwise).
    void extend_vocab(int extra_tokens, int extra_items, uint64_t seed);
    int token_rows() const;  // base + extension
    int item_cols() const;

    // Registers an additional named parameter (adapter tensors and the like).
    void add_param(const std::string& name, Tensor t);
    // Swaps the item head for a freshly initialized one of the given width;
    // any item-extension columns are dropped with it.
    void replace_head(int new_output_dim, uint64_t seed);

    // Handles onto interior graph nodes for attribution and inspection; the
    // tensors keep their gradients after a backward pass.
    struct ForwardTrace {
        std::vector<Tensor> attention;  // per layer*head softmax matrices [L, L]
        Tensor encoded;                 // final hidden states [L, d_hidden]
        Tensor pooled;                  // conversion head only
    };

    // Per-position logits over the item vocabulary (click head).
    Tensor pctr_logits(const ModelInput& in, Rng* dropout_rng = nullptr,
                       ForwardTrace* trace = nullptr) const;
    // Conversion probability in (0, 1) as a [1, 1] tensor.
    Tensor pcvr_prob(const ModelInput& in, Rng* dropout_rng = nullptr,
                     ForwardTrace* trace = nullptr) const;

  private:
    Tensor encode(const ModelInput& in, const AttentionMask& mask, Rng* dropout_rng,
                  ForwardTrace* trace) const;

    TransformerConfig cfg_;
    ParamList params_;
    std::unordered_map<std::string, size_t> index_;
};

// Next-item objective: mean cross-entropy over every labeled position in the
// batch (denominator = total number of labeled positions). Positions outside
// the label sets contribute exactly zero gradient. An all-empty batch yields
// a constant zero loss and warns.
Tensor next_item_loss(const std::vector<Tensor>& logits,
                      const std::vector<std::vector<int>>& positions,
                      const std::vector<std::vector<int>>& labels);

// Mean binary cross-entropy over probabilities (clamped inside).
Tensor bce_loss(const Tensor& probs, const std::vector<float>& labels);

// ---- per-item isotonic calibration ----

// Monotone step function fit by pool-adjacent-violators.
struct IsotonicMap {
    std::vector<float> knot_x;  // strictly increasing
    std::vector<float> knot_y;  // non-decreasing, within [0, 1]

    float apply(float score) const;
};

IsotonicMap isotonic_fit(std::vector<float> scores, std::vector<float> labels);

struct CalibrationMap {
    IsotonicMap global;
    std::unordered_map<int32_t, IsotonicMap> per_item;
    int min_samples = 50;

    // Items with too few validation samples fall back to the global map.
    float apply(int32_t item, float score) const;
};

CalibrationMap calibrate(const std::vector<float>& scores, const std::vector<float>& labels,
                         const std::vector<int32_t>& items, int min_samples = 50);

// Expected calibration error over equal-width probability bins.
float ece(const std::vector<float>& scores, const std::vector<float>& labels, int bins = 10);

}  // namespace fintrec::model
