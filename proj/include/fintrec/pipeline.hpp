// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "fintrec/events.hpp"

namespace fintrec::pipeline {

// ---- sessionization ----

// Events sorted by (user, timestamp); timestamps upgraded from seconds to
// milliseconds with 1 ms tie-jitter so "strictly earlier" is well defined;
// session ids assigned: every login starts a session, and an idle gap of at
// least idle_gap_minutes closes one.
struct SessionizedLog {
    std::vector<Event> events;  // Event::ts holds milliseconds here
    std::vector<std::pair<size_t, size_t>> user_spans;
    std::unordered_map<int32_t, size_t> user_slot;  // user_id -> index into user_spans
    int n_sessions = 0;

    std::pair<size_t, size_t> span(int32_t user_id) const;
};

SessionizedLog sessionize(std::vector<Event> events, int idle_gap_minutes = 30);

// ---- temporal split ----

struct SplitSpec {
    int train_days = 90;
    int val_days = 7;
    int test_days = 7;
};

enum Split : int { kTrain = 0, kVal = 1, kTest = 2, kNone = -1 };

struct SplitBounds {
    int64_t start_ms = 0;  // data day-0 floor
    int64_t train_end_ms = 0;
    int64_t val_end_ms = 0;
    int64_t test_end_ms = 0;

    int split_of(int64_t ts_ms) const;
};

SplitBounds compute_split_bounds(const SessionizedLog& log, const SplitSpec& spec);

// ---- conversion attribution ----

// Lookback windows per item, in days; built from catalog content types.
struct AttributionRules {
    std::unordered_map<int32_t, int> days_by_item;
    int lookback_days(int32_t item_id) const;  // throws if the item has no rule
};

AttributionRules attribution_rules(const Catalog& catalog);

struct CvrWindow {
    int32_t user_id = 0;
    int32_t item_id = -1;
    size_t ctx_begin = 0;  // event index range [ctx_begin, ctx_end) in the log
    size_t ctx_end = 0;
    size_t endpoint_idx = 0;  // conversion event (positive) or impression (negative)
    int64_t endpoint_ms = 0;
    float label = 0.0f;
    int split = kNone;
};

struct AttributionResult {
    std::vector<CvrWindow> windows;
    int conversions_total = 0;
    int conversions_unattributed = 0;  // no impression of the item inside the window
};

// Positives: every conversion with at least one in-window impression of its
// item; context is every prior event within the closed lookback
// [t_conv - lookback, t_conv), endpoint excluded. Negatives: impression
// endpoints with no conversion of the same (user, item) within the forward
// window [t, t + lookback], context including the endpoint, down-sampled to
// negative_ratio per positive with a seeded shuffle.
AttributionResult attribute_conversions(const SessionizedLog& log, const AttributionRules& rules,
                                        double negative_ratio, uint64_t seed);

struct SplitCounts {
    std::array<int, 3> windows{};
    std::array<int, 3> positives{};
    bool empty_split_warning = false;
};

SplitCounts temporal_split(std::vector<CvrWindow>& windows, const SplitBounds& bounds);

// ---- click-prediction windows ----

// Per user and split: chunks of the event stream whose labeled positions are
// those followed by an in-split click. Context may reach backward across the
// split boundary; labels never do.
struct CtrWindow {
    int32_t user_id = 0;
    size_t ctx_begin = 0;
    size_t ctx_end = 0;                // [ctx_begin, ctx_end)
    std::vector<int32_t> label_pos;    // event indices (absolute) whose next event is a click
    std::vector<int32_t> label_item;   // clicked item ids
    int split = kNone;
};

std::vector<CtrWindow> extract_click_windows(const SessionizedLog& log,
                                             const SplitBounds& bounds, int max_events);

// ---- tokenization ----

// Tokens encode (page, placement, layout, action) tuples; ids dense with
// PAD=0, UNK=1, SESSION_BREAK=2; non-special ids assigned in sorted tuple
// order over tuples observed strictly before the train boundary.
struct TokenVocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kSessionBreak = 2;
    static constexpr int kFirstTuple = 3;

    std::map<std::array<uint16_t, 4>, int> tuple_to_id;
    std::vector<std::array<uint16_t, 4>> id_to_tuple;  // aligned with ids, specials zeroed

    int size() const { return static_cast<int>(id_to_tuple.size()); }
    int lookup(const Event& e) const;
    static std::array<uint16_t, 4> tuple_of(const Event& e);
    std::string token_string(int id) const;        // printable form, bijective
    int id_from_string(const std::string& s) const;  // inverse of token_string
};

TokenVocabulary build_vocab(const SessionizedLog& log, int64_t train_end_ms);

// ---- context features ----

inline constexpr int kDynamicDim = 8;  // event-kind one-hot (7) + log-gap

struct ContextTransformer {
    static constexpr std::array<float, kDynamicDim> unit_scale() {
        std::array<float, kDynamicDim> a{};
        for (auto& v : a) v = 1.0f;
        return a;
    }

    int fm_dim = 32;
    int enrollment_universe = 0;
    float tenure_mean = 0.0f;
    float tenure_std = 1.0f;
    std::array<float, kDynamicDim> dyn_mean{};
    std::array<float, kDynamicDim> dyn_std = unit_scale();

    int static_dim() const { return 2 * enrollment_universe; }

    // F_s: multi-hot enrollments ++ standardized per-enrollment tenures
    // (non-enrolled slots stay 0)
    std::vector<float> user_static(const UserProfile& profile) const;
    // raw per-event dynamic vector: kind one-hot plus log1p minutes since the
    // containing session started
    static std::array<float, kDynamicDim> raw_dynamic(const Event& e, int64_t session_start_ms);
    // standardized version
    std::array<float, kDynamicDim> event_dynamic(const Event& e, int64_t session_start_ms) const;
    // F_fm: raw daily embedding
    std::vector<float> fm(const UserProfile& profile, int64_t ts_ms) const;
};

// Standardization statistics from the train split only; zero variance clamps
// the standard deviation to 1.
ContextTransformer fit_context_transformer(const SessionizedLog& log,
                                           const std::vector<UserProfile>& profiles,
                                           int64_t train_end_ms, int fm_dim);

// ---- opt-out filtering ----

struct OptOutStats {
    int cvr_dropped = 0;
    int ctr_labels_dropped = 0;
    int ctr_windows_dropped = 0;
};

OptOutStats filter_opt_outs(std::vector<CvrWindow>& cvr, std::vector<CtrWindow>& ctr,
                            const SessionizedLog& log,
                            const std::vector<UserProfile>& profiles, const Catalog& catalog);

}  // namespace fintrec::pipeline
