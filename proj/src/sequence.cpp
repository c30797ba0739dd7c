// SPDX-License-Identifier: Apache-2.0
#include "fintrec/sequence.hpp"

#include <cmath>
#include <stdexcept>

namespace fintrec::sequence {
namespace {

constexpr int64_t kDayMs = 86400000;

// Days since 1970-01-01 to civil (y, m, d); valid for non-negative days.
void civil_from_days(int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t yy = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y = static_cast<int>(yy + (m <= 2));
}

}  // namespace

CalendarParts calendar_parts(int64_t ts_ms) {
    if (ts_ms < 0) throw std::invalid_argument("calendar_parts: negative timestamp");
    const int64_t days = ts_ms / kDayMs;
    const auto sec_of_day = static_cast<int>((ts_ms % kDayMs) / 1000);
    CalendarParts out;
    out.hourofday = sec_of_day / 3600;
    out.dayofweek = static_cast<int>((days + 3) % 7);  // 1970-01-01 was a Thursday
    int y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    out.monthofyear = static_cast<int>(m) - 1;
    const int dow_first = static_cast<int>((days - (d - 1) + 3) % 7);
    out.weekofmonth = std::min(kWomCard - 1, (static_cast<int>(d) - 1 + dow_first) / 7);
    return out;
}

int delta_bucket(int64_t delta_ms) {
    if (delta_ms < 0) throw std::invalid_argument("delta_bucket: negative gap");
    const double sec = static_cast<double>(delta_ms) / 1000.0;
    const int b = static_cast<int>(std::log2(sec + 1.0) / 2.0);
    return std::min(kDeltaCard - 1, b);
}

TemporalFeatures temporal_encode(const std::vector<int64_t>& ts_ms) {
    TemporalFeatures out;
    const size_t n = ts_ms.size();
    out.dayofweek.resize(n);
    out.weekofmonth.resize(n);
    out.hourofday.resize(n);
    out.monthofyear.resize(n);
    out.delta.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const auto parts = calendar_parts(ts_ms[i]);
        out.dayofweek[i] = static_cast<uint8_t>(parts.dayofweek);
        out.weekofmonth[i] = static_cast<uint8_t>(parts.weekofmonth);
        out.hourofday[i] = static_cast<uint8_t>(parts.hourofday);
        out.monthofyear[i] = static_cast<uint8_t>(parts.monthofyear);
        out.delta[i] =
            static_cast<uint8_t>(i == 0 ? 0 : delta_bucket(ts_ms[i] - ts_ms[i - 1]));
    }
    return out;
}

namespace {

// Builds the token/timestamp stream for the event range [begin, end), with a
// session-break token wherever the session id changes, then keeps the most
// recent max_len tokens. event_pos maps event index -> token position (or -1
// once truncated).
void build_tokens(const pipeline::SessionizedLog& log, size_t begin, size_t end,
                  const pipeline::TokenVocabulary& vocab, int max_len, UserSequence& seq,
                  std::vector<int32_t>* event_pos) {
    std::vector<int32_t> tokens;
    std::vector<int64_t> ts;
    std::vector<int32_t> owner;  // event index per token, -1 for breaks
    int32_t prev_session = -1;
    for (size_t k = begin; k < end; ++k) {
        const Event& e = log.events[k];
        if (prev_session != -1 && e.session_id != prev_session) {
            tokens.push_back(pipeline::TokenVocabulary::kSessionBreak);
            ts.push_back(e.ts);
            owner.push_back(-1);
        }
        prev_session = e.session_id;
        tokens.push_back(vocab.lookup(e));
        ts.push_back(e.ts);
        owner.push_back(static_cast<int32_t>(k - begin));
    }
    size_t offset = 0;
    if (static_cast<int>(tokens.size()) > max_len) {
        offset = tokens.size() - static_cast<size_t>(max_len);
    }
    seq.tokens.assign(tokens.begin() + static_cast<long>(offset), tokens.end());
    seq.ts_ms.assign(ts.begin() + static_cast<long>(offset), ts.end());
    seq.day.resize(seq.ts_ms.size());
    for (size_t i = 0; i < seq.ts_ms.size(); ++i) {
        seq.day[i] = static_cast<uint16_t>(seq.ts_ms[i] / kDayMs);
    }
    seq.temporal = temporal_encode(seq.ts_ms);
    if (event_pos != nullptr) {
        event_pos->assign(end - begin, -1);
        for (size_t p = offset; p < owner.size(); ++p) {
            if (owner[p] >= 0) {
                (*event_pos)[static_cast<size_t>(owner[p])] = static_cast<int32_t>(p - offset);
            }
        }
    }
}

// Mean standardized dynamic vector over the endpoint's session, covering the
// event range [session start, agg_end).
std::array<float, pipeline::kDynamicDim> session_aggregate(const pipeline::SessionizedLog& log,
                                                           size_t span_begin, size_t endpoint_idx,
                                                           size_t agg_end,
                                                           const pipeline::ContextTransformer& ctx) {
    std::array<float, pipeline::kDynamicDim> out{};
    const int32_t session = log.events[endpoint_idx].session_id;
    size_t first = endpoint_idx;
    while (first > span_begin && log.events[first - 1].session_id == session) --first;
    const int64_t session_start = log.events[first].ts;
    int n = 0;
    for (size_t k = first; k < agg_end; ++k) {
        const auto v = ctx.event_dynamic(log.events[k], session_start);
        for (int i = 0; i < pipeline::kDynamicDim; ++i) out[static_cast<size_t>(i)] += v[static_cast<size_t>(i)];
        ++n;
    }
    if (n > 0) {
        for (auto& v : out) v /= static_cast<float>(n);
    }
    return out;
}

}  // namespace

std::vector<UserSequence> assemble_cvr(const pipeline::SessionizedLog& log,
                                       const std::vector<pipeline::CvrWindow>& windows,
                                       const pipeline::TokenVocabulary& vocab,
                                       const pipeline::ContextTransformer& ctx, int max_len,
                                       AssemblyStats* stats) {
    if (max_len < 1) throw std::invalid_argument("assemble: max_len must be positive");
    std::vector<UserSequence> out;
    AssemblyStats local;
    for (const auto& w : windows) {
        if (w.split == pipeline::kNone) continue;
        if (w.ctx_begin >= w.ctx_end) {
            ++local.skipped_empty;
            continue;
        }
        UserSequence seq;
        seq.user_id = w.user_id;
        seq.split = w.split;
        seq.cvr_label = w.label;
        seq.endpoint_item = w.item_id;
        seq.endpoint_ms = w.endpoint_ms;
        seq.product_id = log.events[w.endpoint_idx].product_id;
        build_tokens(log, w.ctx_begin, w.ctx_end, vocab, max_len, seq, nullptr);
        const auto [span_begin, span_end] = log.span(w.user_id);
        (void)span_end;
        seq.fd = session_aggregate(log, span_begin, w.endpoint_idx, w.ctx_end, ctx);
        out.push_back(std::move(seq));
    }
    if (stats != nullptr) *stats = local;
    return out;
}

std::vector<UserSequence> assemble_ctr(const pipeline::SessionizedLog& log,
                                       const std::vector<pipeline::CtrWindow>& windows,
                                       const pipeline::TokenVocabulary& vocab,
                                       const pipeline::ContextTransformer& ctx, int max_len,
                                       AssemblyStats* stats) {
    if (max_len < 1) throw std::invalid_argument("assemble: max_len must be positive");
    std::vector<UserSequence> out;
    AssemblyStats local;
    std::vector<int32_t> event_pos;
    for (const auto& w : windows) {
        if (w.split == pipeline::kNone) continue;
        if (w.ctx_begin >= w.ctx_end) {
            ++local.skipped_empty;
            continue;
        }
        UserSequence seq;
        seq.user_id = w.user_id;
        seq.split = w.split;
        seq.endpoint_ms = log.events[w.ctx_end - 1].ts;
        build_tokens(log, w.ctx_begin, w.ctx_end, vocab, max_len, seq, &event_pos);
        for (size_t i = 0; i < w.label_pos.size(); ++i) {
            const auto rel = static_cast<size_t>(w.label_pos[i]) - w.ctx_begin;
            const int32_t pos = event_pos[rel];
            if (pos < 0) {
                ++local.labels_dropped;
                continue;
            }
            seq.label_pos.push_back(pos);
            seq.label_item.push_back(w.label_item[i]);
        }
        if (seq.label_pos.empty()) {
            ++local.skipped_empty;
            continue;
        }
        const auto [span_begin, span_end] = log.span(w.user_id);
        (void)span_end;
        seq.fd = session_aggregate(log, span_begin, w.ctx_end - 1, w.ctx_end, ctx);
        out.push_back(std::move(seq));
    }
    if (stats != nullptr) *stats = local;
    return out;
}

Tensor positional_masked(int rows, int dim, int content_len) {
    if (rows < 1 || dim < 1) throw std::invalid_argument("positional: bad shape");
    if (content_len < 0 || content_len > rows) {
        throw std::invalid_argument("positional: content length out of range");
    }
    Tensor t = Tensor::zeros({rows, dim});
    auto& data = t.mutable_data();
    for (int i = rows - content_len; i < rows; ++i) {
        const int pos = rows - 1 - i;  // distance from the sequence end
        for (int j = 0; j < dim; ++j) {
            const double exponent = static_cast<double>(2 * (j / 2)) / dim;
            const double angle = pos / std::pow(10000.0, exponent);
            data[i * dim + j] =
                static_cast<float>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return t;
}

Tensor fuse_position_time(const Tensor& token_embeds, const Tensor& p_t,
                          const Tensor& e_t_embeds) {
    if (token_embeds.shape() != p_t.shape() || token_embeds.shape() != e_t_embeds.shape()) {
        throw std::invalid_argument("fuse_position_time: shape mismatch");
    }
    return add(token_embeds, mul(p_t, e_t_embeds));
}

}  // namespace fintrec::sequence
