// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fintrec/pipeline.hpp"
#include "fintrec/tensor.hpp"

namespace fintrec::sequence {

// ---- multivariate temporal components ----

inline constexpr int kDowCard = 7;    // Monday = 0
inline constexpr int kWomCard = 5;
inline constexpr int kHodCard = 24;
inline constexpr int kMoyCard = 12;
inline constexpr int kDeltaCard = 16;  // log2-scaled gap buckets

struct CalendarParts {
    int dayofweek = 0;
    int weekofmonth = 0;
    int hourofday = 0;
    int monthofyear = 0;
};

// UTC decomposition; negative timestamps rejected.
CalendarParts calendar_parts(int64_t ts_ms);

// Gap to the previous token, bucketed as floor(log2(seconds + 1) / 2),
// capped at kDeltaCard - 1.
int delta_bucket(int64_t delta_ms);

struct TemporalFeatures {
    std::vector<uint8_t> dayofweek, weekofmonth, hourofday, monthofyear, delta;

    size_t size() const { return dayofweek.size(); }
};

// Per-position components; delta measures the gap to the preceding position
// (0 for the first).
TemporalFeatures temporal_encode(const std::vector<int64_t>& ts_ms);

// ---- assembled training sequences ----

struct UserSequence {
    int32_t user_id = 0;
    int split = pipeline::kNone;
    std::vector<int32_t> tokens;  // most recent tokens, session breaks included
    std::vector<int64_t> ts_ms;   // aligned; a break carries the next event's time
    std::vector<uint16_t> day;    // epoch day per token, for daily embeddings
    TemporalFeatures temporal;
    std::array<float, pipeline::kDynamicDim> fd{};  // endpoint-session aggregate
    std::vector<int32_t> label_pos;                 // token positions (next event clicks)
    std::vector<int32_t> label_item;
    float cvr_label = -1.0f;  // 0/1 for conversion sequences, -1 otherwise
    int32_t endpoint_item = -1;
    int64_t endpoint_ms = 0;
    int16_t product_id = -1;

    int len() const { return static_cast<int>(tokens.size()); }
};

struct AssemblyStats {
    int skipped_empty = 0;    // windows producing no usable sequence
    int labels_dropped = 0;   // click labels lost to truncation
};

// Conversion sequences: the context excludes a positive's conversion event and
// includes a negative's endpoint impression (as emitted upstream); the dynamic
// aggregate averages standardized per-event vectors over the endpoint's
// session; sequences keep the most recent max_len tokens.
std::vector<UserSequence> assemble_cvr(const pipeline::SessionizedLog& log,
                                       const std::vector<pipeline::CvrWindow>& windows,
                                       const pipeline::TokenVocabulary& vocab,
                                       const pipeline::ContextTransformer& ctx, int max_len,
                                       AssemblyStats* stats = nullptr);

// Click sequences: labels move from event indices to token positions; labels
// truncated away are dropped (and counted), windows losing every label are
// skipped.
std::vector<UserSequence> assemble_ctr(const pipeline::SessionizedLog& log,
                                       const std::vector<pipeline::CtrWindow>& windows,
                                       const pipeline::TokenVocabulary& vocab,
                                       const pipeline::ContextTransformer& ctx, int max_len,
                                       AssemblyStats* stats = nullptr);

// ---- embedding-side fusion ----

// Sinusoidal positional encodings anchored at the sequence end: the last
// content row gets position 0, so embeddings do not depend on padding depth.
// Rows left of the content (padding) are zero, silencing temporal fusion and
// its gradients there.
Tensor positional_masked(int rows, int dim, int content_len);

// S_hat[pos] = token_embeds[pos] + p_t[pos] (elementwise*) e_t_embeds[pos]
Tensor fuse_position_time(const Tensor& token_embeds, const Tensor& p_t,
                          const Tensor& e_t_embeds);

}  // namespace fintrec::sequence
