// SPDX-License-Identifier: Apache-2.0
#include "fintrec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fintrec/rng.hpp"

namespace fintrec::pipeline {
namespace {

constexpr int64_t kDayMs = 86400000;

int64_t floor_day_ms(int64_t ts_ms) {
    int64_t d = ts_ms / kDayMs;
    if (ts_ms < 0 && d * kDayMs != ts_ms) --d;
    return d * kDayMs;
}

// Logins open sessions, so they sort ahead of everything else sharing a
// second; the rest keeps the funnel order impressions -> clicks -> outcomes.
int kind_rank(EventKind k) {
    switch (k) {
        case EventKind::login: return 0;
        case EventKind::impression: return 1;
        case EventKind::click: return 2;
        case EventKind::conversion: return 3;
        case EventKind::transaction: return 4;
        case EventKind::payment: return 5;
        case EventKind::call: return 6;
    }
    return 7;
}

uint64_t pair_key(int32_t user_id, int32_t item_id) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(user_id)) << 32) |
           static_cast<uint32_t>(item_id);
}

}  // namespace

std::pair<size_t, size_t> SessionizedLog::span(int32_t user_id) const {
    auto it = user_slot.find(user_id);
    if (it == user_slot.end()) return {0, 0};
    return user_spans[it->second];
}

SessionizedLog sessionize(std::vector<Event> events, int idle_gap_minutes) {
    if (idle_gap_minutes <= 0) throw std::invalid_argument("sessionize: idle gap must be positive");
    for (size_t i = 1; i < events.size(); ++i) {
        const Event& a = events[i - 1];
        const Event& b = events[i];
        if (b.user_id < a.user_id || (b.user_id == a.user_id && b.ts < a.ts)) {
            throw std::invalid_argument("sessionize: events must be sorted by (user, timestamp)");
        }
    }

    SessionizedLog log;
    log.events = std::move(events);
    auto& ev = log.events;

    // Millisecond upgrade with tie-jitter: equal-second groups are ordered by
    // kind rank (stable) and spaced 1 ms apart, so per-user timestamps become
    // strictly increasing.
    size_t i = 0;
    while (i < ev.size()) {
        size_t j = i + 1;
        while (j < ev.size() && ev[j].user_id == ev[i].user_id && ev[j].ts == ev[i].ts) ++j;
        std::stable_sort(ev.begin() + i, ev.begin() + j, [](const Event& a, const Event& b) {
            return kind_rank(a.kind) < kind_rank(b.kind);
        });
        const int64_t base = ev[i].ts * 1000;
        for (size_t k = i; k < j; ++k) ev[k].ts = base + static_cast<int64_t>(k - i);
        i = j;
    }

    const int64_t idle_ms = static_cast<int64_t>(idle_gap_minutes) * 60000;
    int32_t session = -1;
    size_t user_begin = 0;
    for (size_t k = 0; k < ev.size(); ++k) {
        const bool new_user = k == 0 || ev[k].user_id != ev[k - 1].user_id;
        if (new_user && k > 0) {
            log.user_slot[ev[user_begin].user_id] = log.user_spans.size();
            log.user_spans.emplace_back(user_begin, k);
            user_begin = k;
        }
        const bool new_session = new_user || ev[k].kind == EventKind::login ||
                                 ev[k].ts - ev[k - 1].ts >= idle_ms;
        if (new_session) ++session;
        ev[k].session_id = session;
    }
    if (!ev.empty()) {
        log.user_slot[ev[user_begin].user_id] = log.user_spans.size();
        log.user_spans.emplace_back(user_begin, ev.size());
    }
    log.n_sessions = session + 1;
    return log;
}

int SplitBounds::split_of(int64_t ts_ms) const {
    if (ts_ms < start_ms || ts_ms >= test_end_ms) return kNone;
    if (ts_ms < train_end_ms) return kTrain;
    if (ts_ms < val_end_ms) return kVal;
    return kTest;
}

SplitBounds compute_split_bounds(const SessionizedLog& log, const SplitSpec& spec) {
    if (spec.train_days <= 0 || spec.val_days <= 0 || spec.test_days <= 0) {
        throw std::invalid_argument("split: all split lengths must be positive");
    }
    if (log.events.empty()) throw std::invalid_argument("split: empty event log");
    int64_t min_ts = log.events.front().ts;
    for (const auto& [b, e] : log.user_spans) min_ts = std::min(min_ts, log.events[b].ts);
    SplitBounds out;
    out.start_ms = floor_day_ms(min_ts);
    out.train_end_ms = out.start_ms + static_cast<int64_t>(spec.train_days) * kDayMs;
    out.val_end_ms = out.train_end_ms + static_cast<int64_t>(spec.val_days) * kDayMs;
    out.test_end_ms = out.val_end_ms + static_cast<int64_t>(spec.test_days) * kDayMs;
    return out;
}

int AttributionRules::lookback_days(int32_t item_id) const {
    auto it = days_by_item.find(item_id);
    if (it == days_by_item.end()) {
        throw std::runtime_error("attribution: no lookback rule for item " +
                                 std::to_string(item_id));
    }
    return it->second;
}

AttributionRules attribution_rules(const Catalog& catalog) {
    AttributionRules rules;
    for (const auto& item : catalog.items) rules.days_by_item[item.item_id] = item.attribution_days;
    return rules;
}

AttributionResult attribute_conversions(const SessionizedLog& log, const AttributionRules& rules,
                                        double negative_ratio, uint64_t seed) {
    if (negative_ratio < 0.0) throw std::invalid_argument("attribution: negative ratio < 0");
    const auto& ev = log.events;

    // (user, item) -> sorted conversion timestamps, for the forward-window
    // check on negative candidates.
    std::unordered_map<uint64_t, std::vector<int64_t>> conv_ts;
    for (const auto& e : ev) {
        if (e.kind == EventKind::conversion) conv_ts[pair_key(e.user_id, e.item_id)].push_back(e.ts);
    }

    AttributionResult out;
    std::vector<size_t> negative_pool;
    for (const auto& [begin, end] : log.user_spans) {
        for (size_t idx = begin; idx < end; ++idx) {
            const Event& e = ev[idx];
            if (e.kind == EventKind::conversion) {
                ++out.conversions_total;
                const int64_t window_ms =
                    static_cast<int64_t>(rules.lookback_days(e.item_id)) * kDayMs;
                const int64_t lo = e.ts - window_ms;
                size_t ctx_begin = idx;
                while (ctx_begin > begin && ev[ctx_begin - 1].ts >= lo) --ctx_begin;
                bool saw_impression = false;
                for (size_t k = ctx_begin; k < idx && !saw_impression; ++k) {
                    saw_impression =
                        ev[k].kind == EventKind::impression && ev[k].item_id == e.item_id;
                }
                if (!saw_impression) {
                    ++out.conversions_unattributed;
                    continue;
                }
                out.windows.push_back({e.user_id, e.item_id, ctx_begin, idx, idx, e.ts, 1.0f,
                                       kNone});
            } else if (e.kind == EventKind::impression) {
                const int64_t window_ms =
                    static_cast<int64_t>(rules.lookback_days(e.item_id)) * kDayMs;
                auto it = conv_ts.find(pair_key(e.user_id, e.item_id));
                bool converts = false;
                if (it != conv_ts.end()) {
                    for (int64_t t : it->second) {
                        if (t >= e.ts && t <= e.ts + window_ms) {
                            converts = true;
                            break;
                        }
                    }
                }
                if (!converts) negative_pool.push_back(idx);
            }
        }
    }

    const int n_pos = static_cast<int>(out.windows.size());
    size_t want = static_cast<size_t>(std::llround(negative_ratio * n_pos));
    want = std::min(want, negative_pool.size());
    Rng rng(seed ^ 0x5e55a7c0de11ULL);
    for (size_t k = 0; k < want; ++k) {  // partial Fisher-Yates: first `want` slots
        const size_t j = k + static_cast<size_t>(rng.below(negative_pool.size() - k));
        std::swap(negative_pool[k], negative_pool[j]);
    }
    negative_pool.resize(want);
    std::sort(negative_pool.begin(), negative_pool.end());

    for (size_t idx : negative_pool) {
        const Event& e = ev[idx];
        const int64_t window_ms = static_cast<int64_t>(rules.lookback_days(e.item_id)) * kDayMs;
        const int64_t lo = e.ts - window_ms;
        const auto [begin, end] = log.span(e.user_id);
        (void)end;
        size_t ctx_begin = idx;
        while (ctx_begin > begin && ev[ctx_begin - 1].ts >= lo) --ctx_begin;
        out.windows.push_back({e.user_id, e.item_id, ctx_begin, idx + 1, idx, e.ts, 0.0f, kNone});
    }

    std::sort(out.windows.begin(), out.windows.end(), [](const CvrWindow& a, const CvrWindow& b) {
        if (a.user_id != b.user_id) return a.user_id < b.user_id;
        if (a.endpoint_ms != b.endpoint_ms) return a.endpoint_ms < b.endpoint_ms;
        return a.item_id < b.item_id;
    });
    return out;
}

SplitCounts temporal_split(std::vector<CvrWindow>& windows, const SplitBounds& bounds) {
    SplitCounts counts;
    for (auto& w : windows) {
        w.split = bounds.split_of(w.endpoint_ms);
        if (w.split == kNone) continue;
        ++counts.windows[w.split];
        if (w.label > 0.5f) ++counts.positives[w.split];
    }
    for (int s = 0; s < 3; ++s) {
        if (counts.windows[s] == 0) counts.empty_split_warning = true;
    }
    if (counts.empty_split_warning) {
        std::fprintf(stderr, "warning: at least one temporal split received no windows\n");
    }
    return counts;
}

std::vector<CtrWindow> extract_click_windows(const SessionizedLog& log, const SplitBounds& bounds,
                                             int max_events) {
    if (max_events < 2) throw std::invalid_argument("click windows: max_events must be >= 2");
    const auto& ev = log.events;
    std::vector<CtrWindow> out;

    auto harvest = [&](int32_t user, size_t begin, size_t end, int64_t label_lo, int64_t label_hi,
                       int split) {
        // Labeled positions: next event is a click landing inside the split.
        CtrWindow w;
        w.user_id = user;
        w.ctx_begin = begin;
        w.ctx_end = end;
        w.split = split;
        for (size_t k = begin; k + 1 < end; ++k) {
            const Event& nxt = ev[k + 1];
            if (nxt.kind == EventKind::click && nxt.ts >= label_lo && nxt.ts < label_hi) {
                w.label_pos.push_back(static_cast<int32_t>(k));
                w.label_item.push_back(nxt.item_id);
            }
        }
        if (!w.label_pos.empty()) out.push_back(std::move(w));
    };

    for (const auto& [begin, end] : log.user_spans) {
        const int32_t user = ev[begin].user_id;
        auto upto = [&](int64_t ts_ms) {
            size_t k = begin;
            while (k < end && ev[k].ts < ts_ms) ++k;
            return k;
        };
        // Train: non-overlapping chunks walked back from the boundary.
        const size_t train_hi = upto(bounds.train_end_ms);
        size_t chunk_end = train_hi;
        while (chunk_end > begin) {
            const size_t chunk_begin =
                chunk_end - std::min<size_t>(chunk_end - begin, static_cast<size_t>(max_events));
            harvest(user, chunk_begin, chunk_end, bounds.start_ms, bounds.train_end_ms, kTrain);
            chunk_end = chunk_begin;
        }
        // Val / test: the most recent window before each boundary; context may
        // reach backward across splits, labels may not.
        const size_t val_hi = upto(bounds.val_end_ms);
        harvest(user, val_hi - std::min<size_t>(val_hi - begin, static_cast<size_t>(max_events)),
                val_hi, bounds.train_end_ms, bounds.val_end_ms, kVal);
        const size_t test_hi = upto(bounds.test_end_ms);
        harvest(user, test_hi - std::min<size_t>(test_hi - begin, static_cast<size_t>(max_events)),
                test_hi, bounds.val_end_ms, bounds.test_end_ms, kTest);
    }
    return out;
}

std::array<uint16_t, 4> TokenVocabulary::tuple_of(const Event& e) {
    return {e.page_id, e.placement_id, e.layout_id, static_cast<uint16_t>(e.kind)};
}

int TokenVocabulary::lookup(const Event& e) const {
    auto it = tuple_to_id.find(tuple_of(e));
    return it == tuple_to_id.end() ? kUnk : it->second;
}

std::string TokenVocabulary::token_string(int id) const {
    if (id == kPad) return "<pad>";
    if (id == kUnk) return "<unk>";
    if (id == kSessionBreak) return "<break>";
    if (id < 0 || id >= size()) throw std::out_of_range("token_string: id out of range");
    const auto& t = id_to_tuple[id];
    return "p" + std::to_string(t[0]) + ".s" + std::to_string(t[1]) + ".l" + std::to_string(t[2]) +
           "." + to_string(static_cast<EventKind>(t[3]));
}

int TokenVocabulary::id_from_string(const std::string& s) const {
    if (s == "<pad>") return kPad;
    if (s == "<unk>") return kUnk;
    if (s == "<break>") return kSessionBreak;
    std::array<uint16_t, 4> t{};
    size_t pos = 0;
    auto take_num = [&](char prefix) {
        if (pos >= s.size() || s[pos] != prefix) throw std::invalid_argument("bad token: " + s);
        ++pos;
        size_t next = s.find('.', pos);
        if (next == std::string::npos) throw std::invalid_argument("bad token: " + s);
        const int v = std::stoi(s.substr(pos, next - pos));
        pos = next + 1;
        return static_cast<uint16_t>(v);
    };
    t[0] = take_num('p');
    t[1] = take_num('s');
    t[2] = take_num('l');
    t[3] = static_cast<uint16_t>(event_kind_from_string(s.substr(pos)));
    auto it = tuple_to_id.find(t);
    if (it == tuple_to_id.end()) throw std::invalid_argument("unknown token: " + s);
    return it->second;
}

TokenVocabulary build_vocab(const SessionizedLog& log, int64_t train_end_ms) {
    TokenVocabulary v;
    std::map<std::array<uint16_t, 4>, int> seen;
    for (const auto& e : log.events) {
        if (e.ts < train_end_ms) seen.emplace(TokenVocabulary::tuple_of(e), 0);
    }
    v.id_to_tuple.assign(TokenVocabulary::kFirstTuple, {0, 0, 0, 0});
    for (auto& [tuple, id] : seen) {
        id = static_cast<int>(v.id_to_tuple.size());
        v.id_to_tuple.push_back(tuple);
        v.tuple_to_id.emplace(tuple, id);
    }
    return v;
}

std::vector<float> ContextTransformer::user_static(const UserProfile& profile) const {
    if (static_cast<int>(profile.enrollments.size()) != enrollment_universe) {
        throw std::invalid_argument("user_static: enrollment universe mismatch");
    }
    std::vector<float> out(static_cast<size_t>(static_dim()));
    for (int i = 0; i < enrollment_universe; ++i) {
        const auto s = static_cast<size_t>(i);
        if (!profile.enrollments[s]) continue;
        out[s] = 1.0f;
        out[s + static_cast<size_t>(enrollment_universe)] =
            (profile.tenure_days[s] - tenure_mean) / tenure_std;
    }
    return out;
}

std::array<float, kDynamicDim> ContextTransformer::raw_dynamic(const Event& e,
                                                               int64_t session_start_ms) {
    std::array<float, kDynamicDim> out{};
    const int kind = static_cast<int>(e.kind);
    if (kind >= 0 && kind < kDynamicDim - 1) out[static_cast<size_t>(kind)] = 1.0f;
    const double minutes = static_cast<double>(e.ts - session_start_ms) / 60000.0;
    out[kDynamicDim - 1] = static_cast<float>(std::log1p(std::max(0.0, minutes)));
    return out;
}

std::array<float, kDynamicDim> ContextTransformer::event_dynamic(const Event& e,
                                                                 int64_t session_start_ms) const {
    auto out = raw_dynamic(e, session_start_ms);
    for (int i = 0; i < kDynamicDim; ++i) {
        out[static_cast<size_t>(i)] = (out[static_cast<size_t>(i)] - dyn_mean[static_cast<size_t>(i)]) /
                                      dyn_std[static_cast<size_t>(i)];
    }
    return out;
}

std::vector<float> ContextTransformer::fm(const UserProfile& profile, int64_t ts_ms) const {
    return fm_embedding(profile, static_cast<int>(ts_ms / kDayMs), fm_dim);
}

ContextTransformer fit_context_transformer(const SessionizedLog& log,
                                           const std::vector<UserProfile>& profiles,
                                           int64_t train_end_ms, int fm_dim) {
    ContextTransformer t;
    t.fm_dim = fm_dim;
    t.enrollment_universe = profiles.empty() ? 0 : static_cast<int>(profiles[0].enrollments.size());

    // Tenure statistics over the enrolled slots of users with at least one
    // train-split event.
    std::unordered_map<int32_t, bool> in_train;
    for (const auto& [b, e] : log.user_spans) {
        (void)e;
        in_train[log.events[b].user_id] = log.events[b].ts < train_end_ms;
    }
    double sum = 0.0, sq = 0.0;
    int64_t n = 0;
    for (const auto& p : profiles) {
        auto it = in_train.find(p.user_id);
        if (it == in_train.end() || !it->second) continue;
        for (size_t s = 0; s < p.enrollments.size(); ++s) {
            if (!p.enrollments[s]) continue;
            sum += p.tenure_days[s];
            sq += static_cast<double>(p.tenure_days[s]) * p.tenure_days[s];
            ++n;
        }
    }
    if (n > 0) {
        const double mean = sum / n;
        const double var = std::max(0.0, sq / n - mean * mean);
        t.tenure_mean = static_cast<float>(mean);
        t.tenure_std = var > 0.0 ? static_cast<float>(std::sqrt(var)) : 1.0f;
    }

    // Per-dimension statistics of the raw dynamic vectors over train events.
    std::array<double, kDynamicDim> dsum{}, dsq{};
    int64_t dn = 0;
    for (const auto& [begin, end] : log.user_spans) {
        int64_t session_start = 0;
        int32_t session = -1;
        for (size_t k = begin; k < end; ++k) {
            const Event& e = log.events[k];
            if (e.session_id != session) {
                session = e.session_id;
                session_start = e.ts;
            }
            if (e.ts >= train_end_ms) continue;
            const auto raw = ContextTransformer::raw_dynamic(e, session_start);
            for (int i = 0; i < kDynamicDim; ++i) {
                dsum[static_cast<size_t>(i)] += raw[static_cast<size_t>(i)];
                dsq[static_cast<size_t>(i)] +=
                    static_cast<double>(raw[static_cast<size_t>(i)]) * raw[static_cast<size_t>(i)];
            }
            ++dn;
        }
    }
    for (int i = 0; i < kDynamicDim; ++i) {
        if (dn == 0) {
            t.dyn_mean[static_cast<size_t>(i)] = 0.0f;
            t.dyn_std[static_cast<size_t>(i)] = 1.0f;
            continue;
        }
        const double mean = dsum[static_cast<size_t>(i)] / static_cast<double>(dn);
        const double var =
            std::max(0.0, dsq[static_cast<size_t>(i)] / static_cast<double>(dn) - mean * mean);
        t.dyn_mean[static_cast<size_t>(i)] = static_cast<float>(mean);
        t.dyn_std[static_cast<size_t>(i)] = var > 0.0 ? static_cast<float>(std::sqrt(var)) : 1.0f;
    }
    return t;
}

OptOutStats filter_opt_outs(std::vector<CvrWindow>& cvr, std::vector<CtrWindow>& ctr,
                            const SessionizedLog& log, const std::vector<UserProfile>& profiles,
                            const Catalog& catalog) {
    (void)log;
    std::unordered_map<int32_t, bool> opted_out;
    for (const auto& p : profiles) opted_out[p.user_id] = p.opt_out;
    std::unordered_map<int32_t, ContentType> content;
    for (const auto& it : catalog.items) content[it.item_id] = it.content_type;

    auto is_filtered = [&](int32_t user, int32_t item) {
        auto u = opted_out.find(user);
        if (u == opted_out.end() || !u->second) return false;
        auto c = content.find(item);
        return c != content.end() && c->second == ContentType::marketing;
    };

    OptOutStats stats;
    auto keep_cvr = std::remove_if(cvr.begin(), cvr.end(), [&](const CvrWindow& w) {
        const bool drop = is_filtered(w.user_id, w.item_id);
        if (drop) ++stats.cvr_dropped;
        return drop;
    });
    cvr.erase(keep_cvr, cvr.end());

    auto keep_ctr = std::remove_if(ctr.begin(), ctr.end(), [&](CtrWindow& w) {
        std::vector<int32_t> pos, item;
        for (size_t i = 0; i < w.label_pos.size(); ++i) {
            if (is_filtered(w.user_id, w.label_item[i])) {
                ++stats.ctr_labels_dropped;
            } else {
                pos.push_back(w.label_pos[i]);
                item.push_back(w.label_item[i]);
            }
        }
        w.label_pos = std::move(pos);
        w.label_item = std::move(item);
        if (w.label_pos.empty()) {
            ++stats.ctr_windows_dropped;
            return true;
        }
        return false;
    });
    ctr.erase(keep_ctr, ctr.end());
    return stats;
}

}  // namespace fintrec::pipeline
