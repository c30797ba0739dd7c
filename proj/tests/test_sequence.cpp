// SPDX-License-Identifier: Apache-2.0
//
// Calendar decomposition, gap bucketing, sequence assembly (truncation,
// session breaks, label remapping, dynamic aggregates), and position-time
// fusion with its padding-depth equivariance.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <ctime>
#include <vector>

#include "fintrec/pipeline.hpp"
#include "fintrec/rng.hpp"
#include "fintrec/sequence.hpp"
#include "fintrec/tensor.hpp"

using namespace fintrec;
using namespace fintrec::sequence;
using pipeline::CtrWindow;
using pipeline::CvrWindow;
using pipeline::sessionize;
using pipeline::TokenVocabulary;

namespace {

constexpr int64_t kDayMs = 86400000;

Event ev(int32_t user, int64_t ts_sec, EventKind kind, int32_t item = -1, uint16_t page = 0,
         uint16_t placement = 0, uint16_t layout = 0) {
    Event e;
    e.user_id = user;
    e.ts = ts_sec;
    e.kind = kind;
    e.item_id = item;
    e.page_id = page;
    e.placement_id = placement;
    e.layout_id = layout;
    return e;
}

// 2025-01-06T00:00:00Z, a Monday, in epoch milliseconds.
constexpr int64_t kMondayMs = 1736121600000LL;

}  // namespace

TEST_CASE("calendar decomposition matches known dates") {
    // Monday 2025-01-06 13:00 UTC: first full week of January.
    auto monday = calendar_parts(kMondayMs + 13 * 3600 * 1000);
    CHECK(monday.dayofweek == 0);
    CHECK(monday.hourofday == 13);
    CHECK(monday.weekofmonth == 1);
    CHECK(monday.monthofyear == 0);

    // Midnight on Sunday 2025-01-12.
    auto sunday = calendar_parts(kMondayMs + 6 * kDayMs);
    CHECK(sunday.dayofweek == 6);
    CHECK(sunday.hourofday == 0);

    CHECK_THROWS_AS(calendar_parts(-1), std::invalid_argument);
}

TEST_CASE("calendar decomposition matches the C library over random timestamps") {
    Rng rng(404);
    for (int i = 0; i < 10000; ++i) {
        // 1970..~2080, second resolution.
        const int64_t ts_sec = static_cast<int64_t>(rng.next_u64() % 3500000000ULL);
        const auto got = calendar_parts(ts_sec * 1000);
        std::tm tm{};
        const time_t t = static_cast<time_t>(ts_sec);
        gmtime_r(&t, &tm);
        CHECK(got.dayofweek == (tm.tm_wday + 6) % 7);  // tm counts Sunday = 0
        CHECK(got.hourofday == tm.tm_hour);
        CHECK(got.monthofyear == tm.tm_mon);
        const int dow_first = ((tm.tm_wday + 6) % 7 - (tm.tm_mday - 1) % 7 + 7) % 7;
        const int wom = std::min(4, (tm.tm_mday - 1 + dow_first) / 7);
        CHECK(got.weekofmonth == wom);
    }
}

TEST_CASE("delta buckets grow logarithmically and stay in range") {
    CHECK(delta_bucket(0) == 0);
    CHECK(delta_bucket(1000) == 0);      // 1 s
    CHECK(delta_bucket(3000) == 1);      // 3 s
    CHECK(delta_bucket(60000) == 2);     // 1 min
    CHECK(delta_bucket(3600000) == 5);   // 1 h
    CHECK(delta_bucket(86400000) == 8);  // 1 day
    CHECK(delta_bucket(1LL << 45) == kDeltaCard - 1);
    CHECK_THROWS_AS(delta_bucket(-5), std::invalid_argument);

    Rng rng(7);
    int prev = 0;
    for (int64_t d = 0; d < 50; ++d) {
        const int b = delta_bucket(d * d * 997);
        CHECK(b >= prev);  // non-decreasing in the gap
        CHECK(b < kDeltaCard);
        prev = b;
    }
}

TEST_CASE("temporal encoding emits aligned in-range components") {
    std::vector<int64_t> ts = {kMondayMs, kMondayMs + 5000, kMondayMs + 2 * kDayMs};
    auto f = temporal_encode(ts);
    REQUIRE(f.size() == 3);
    CHECK(f.delta[0] == 0);
    CHECK(f.delta[1] == delta_bucket(5000));
    CHECK(f.dayofweek[0] == 0);
    CHECK(f.dayofweek[2] == 2);
    for (size_t i = 0; i < f.size(); ++i) {
        CHECK(f.dayofweek[i] < kDowCard);
        CHECK(f.weekofmonth[i] < kWomCard);
        CHECK(f.hourofday[i] < kHodCard);
        CHECK(f.monthofyear[i] < kMoyCard);
        CHECK(f.delta[i] < kDeltaCard);
    }
}

TEST_CASE("conversion assembly truncates to the most recent tokens") {
    // 130 impressions ten seconds apart: one session, one token per event.
    std::vector<Event> in;
    for (int i = 0; i < 130; ++i) in.push_back(ev(1, 1000 + 10 * i, EventKind::impression, 5, 21));
    in.push_back(ev(1, 1000 + 10 * 130, EventKind::conversion, 5, 21));
    auto log = sessionize(in);
    auto vocab = pipeline::build_vocab(log, log.events.back().ts + 1);

    CvrWindow w;
    w.user_id = 1;
    w.item_id = 5;
    w.ctx_begin = 0;
    w.ctx_end = 130;
    w.endpoint_idx = 130;
    w.endpoint_ms = log.events[130].ts;
    w.label = 1.0f;
    w.split = pipeline::kTrain;

    auto seqs = assemble_cvr(log, {w}, vocab, pipeline::ContextTransformer{}, 120);
    REQUIRE(seqs.size() == 1);
    CHECK(seqs[0].len() == 120);
    // Oldest ten events dropped: the first kept token is event index 10.
    CHECK(seqs[0].ts_ms.front() == log.events[10].ts);
    CHECK(seqs[0].ts_ms.back() == log.events[129].ts);
    CHECK(seqs[0].cvr_label == 1.0f);
    CHECK(seqs[0].endpoint_item == 5);

    // Single-event window: length 1 (padding is applied at batch time).
    CvrWindow single = w;
    single.ctx_begin = 129;
    single.ctx_end = 130;
    auto one = assemble_cvr(log, {single}, vocab, pipeline::ContextTransformer{}, 120);
    REQUIRE(one.size() == 1);
    CHECK(one[0].len() == 1);

    // Empty window: skipped and counted.
    CvrWindow empty = w;
    empty.ctx_begin = 10;
    empty.ctx_end = 10;
    AssemblyStats stats;
    auto none = assemble_cvr(log, {empty}, vocab, pipeline::ContextTransformer{}, 120, &stats);
    CHECK(none.empty());
    CHECK(stats.skipped_empty == 1);
}

TEST_CASE("session breaks separate sessions and carry the next timestamp") {
    std::vector<Event> in = {
        ev(1, 1000, EventKind::impression, 5, 21),
        ev(1, 1030, EventKind::click, 5, 21),
        ev(1, 9000, EventKind::impression, 6, 22),  // new session after long idle
        ev(1, 9100, EventKind::conversion, 6, 22),
    };
    auto log = sessionize(in);
    auto vocab = pipeline::build_vocab(log, log.events.back().ts + 1);

    CvrWindow w;
    w.user_id = 1;
    w.item_id = 6;
    w.ctx_begin = 0;
    w.ctx_end = 3;
    w.endpoint_idx = 3;
    w.endpoint_ms = log.events[3].ts;
    w.label = 1.0f;
    w.split = pipeline::kTrain;
    auto seqs = assemble_cvr(log, {w}, vocab, pipeline::ContextTransformer{}, 16);
    REQUIRE(seqs.size() == 1);
    const auto& s = seqs[0];
    REQUIRE(s.len() == 4);  // imp, click, break, imp
    CHECK(s.tokens[2] == TokenVocabulary::kSessionBreak);
    CHECK(s.ts_ms[2] == log.events[2].ts);
    CHECK(s.tokens[0] >= TokenVocabulary::kFirstTuple);
    // The break inherits the opening event's calendar but a fresh gap bucket.
    CHECK(s.temporal.delta[2] == delta_bucket(log.events[2].ts - log.events[1].ts));
    CHECK(s.temporal.delta[3] == 0);  // same millisecond as the break
}

TEST_CASE("dynamic aggregate averages the endpoint session") {
    // Endpoint session: login, impression, click, then the conversion.
    std::vector<Event> in = {
        ev(1, 500, EventKind::impression, 6, 22),  // earlier session, excluded
        ev(1, 10000, EventKind::login),
        ev(1, 10060, EventKind::impression, 6, 22),
        ev(1, 10090, EventKind::click, 6, 22),
        ev(1, 10120, EventKind::conversion, 6, 22),
    };
    auto log = sessionize(in);
    auto vocab = pipeline::build_vocab(log, log.events.back().ts + 1);
    pipeline::ContextTransformer identity;  // mean 0, std 1

    CvrWindow w;
    w.user_id = 1;
    w.item_id = 6;
    w.ctx_begin = 0;
    w.ctx_end = 4;  // positive: conversion excluded from context
    w.endpoint_idx = 4;
    w.endpoint_ms = log.events[4].ts;
    w.label = 1.0f;
    w.split = pipeline::kTrain;
    auto seqs = assemble_cvr(log, {w}, vocab, identity, 16);
    REQUIRE(seqs.size() == 1);

    // Hand-computed mean over the three session events (login@0s, imp@60s,
    // click@90s): one-hot thirds plus mean log-gap.
    const auto& fd = seqs[0].fd;
    CHECK(fd[static_cast<size_t>(EventKind::login)] == doctest::Approx(1.0 / 3));
    CHECK(fd[static_cast<size_t>(EventKind::impression)] == doctest::Approx(1.0 / 3));
    CHECK(fd[static_cast<size_t>(EventKind::click)] == doctest::Approx(1.0 / 3));
    CHECK(fd[static_cast<size_t>(EventKind::conversion)] == 0.0f);  // label never leaks
    const double gaps = (std::log1p(0.0) + std::log1p(1.0) + std::log1p(1.5)) / 3.0;
    CHECK(fd[pipeline::kDynamicDim - 1] == doctest::Approx(gaps).epsilon(1e-5));

    // Negative windows include their endpoint impression in the aggregate.
    CvrWindow neg = w;
    neg.ctx_end = 3;
    neg.endpoint_idx = 2;
    neg.endpoint_ms = log.events[2].ts;
    neg.label = 0.0f;
    auto negs = assemble_cvr(log, {neg}, vocab, identity, 16);
    REQUIRE(negs.size() == 1);
    CHECK(negs[0].fd[static_cast<size_t>(EventKind::impression)] == doctest::Approx(0.5));
    CHECK(negs[0].fd[static_cast<size_t>(EventKind::login)] == doctest::Approx(0.5));
    CHECK(negs[0].cvr_label == 0.0f);
}

TEST_CASE("click assembly remaps labels to token positions") {
    std::vector<Event> in = {
        ev(1, 1000, EventKind::impression, 5, 21),
        ev(1, 1030, EventKind::click, 5, 21),
        ev(1, 9000, EventKind::impression, 6, 22),
        ev(1, 9040, EventKind::click, 6, 22),
        ev(1, 9050, EventKind::impression, 7, 23),
    };
    auto log = sessionize(in);
    auto vocab = pipeline::build_vocab(log, log.events.back().ts + 1);

    CtrWindow w;
    w.user_id = 1;
    w.ctx_begin = 0;
    w.ctx_end = 5;
    w.label_pos = {0, 2};  // events whose next event is a click
    w.label_item = {5, 6};
    w.split = pipeline::kTrain;

    auto seqs = assemble_ctr(log, {w}, vocab, pipeline::ContextTransformer{}, 16);
    REQUIRE(seqs.size() == 1);
    const auto& s = seqs[0];
    REQUIRE(s.len() == 6);  // five events plus one break
    REQUIRE(s.label_pos.size() == 2);
    // Token stream: imp5, click5, BREAK, imp6, click6, imp7.
    CHECK(s.label_pos[0] == 0);
    CHECK(s.label_pos[1] == 3);
    CHECK(s.label_item[0] == 5);
    CHECK(s.label_item[1] == 6);
    CHECK(s.tokens[2] == TokenVocabulary::kSessionBreak);
    CHECK(s.endpoint_ms == log.events[4].ts);

    // Truncation to the last 3 tokens drops the first label and keeps the
    // second at its shifted position.
    AssemblyStats stats;
    auto cut = assemble_ctr(log, {w}, vocab, pipeline::ContextTransformer{}, 3, &stats);
    REQUIRE(cut.size() == 1);
    CHECK(stats.labels_dropped == 1);
    REQUIRE(cut[0].label_pos.size() == 1);
    CHECK(cut[0].label_pos[0] == 0);  // imp6 is now the first kept token
    CHECK(cut[0].label_item[0] == 6);

    // Truncating away every label skips the window entirely.
    AssemblyStats gone;
    auto none = assemble_ctr(log, {w}, vocab, pipeline::ContextTransformer{}, 1, &gone);
    CHECK(none.empty());
    CHECK(gone.skipped_empty == 1);
    CHECK(gone.labels_dropped == 2);
}

TEST_CASE("positional encodings anchor at the sequence end and zero the padding") {
    auto p = positional_masked(8, 4, 5);
    // Rows 0..2 are padding.
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 4; ++j) CHECK(p.at(i, j) == 0.0f);
    }
    // Last row is position 0: sin(0)=0, cos(0)=1 alternating.
    CHECK(p.at(7, 0) == doctest::Approx(0.0));
    CHECK(p.at(7, 1) == doctest::Approx(1.0));
    CHECK(p.at(7, 2) == doctest::Approx(0.0));
    CHECK(p.at(7, 3) == doctest::Approx(1.0));
    // Second-to-last row is position 1 in the standard formulation.
    CHECK(p.at(6, 0) == doctest::Approx(std::sin(1.0)));
    CHECK(p.at(6, 1) == doctest::Approx(std::cos(1.0)));
    CHECK(p.at(6, 2) == doctest::Approx(std::sin(1.0 / 100.0)));

    CHECK_THROWS_AS(positional_masked(4, 4, 5), std::invalid_argument);
}

TEST_CASE("fusion identities: ones add positions, zeros pass tokens through") {
    const int L = 6, d = 4, content = 4;
    std::vector<float> tok_data(L * d);
    Rng rng(11);
    for (auto& v : tok_data) v = static_cast<float>(rng.range(-1.0, 1.0));
    Tensor tok = Tensor::from({L, d}, tok_data);
    Tensor p = positional_masked(L, d, content);

    Tensor fused_ones = fuse_position_time(tok, p, Tensor::full({L, d}, 1.0f));
    Tensor fused_zero = fuse_position_time(tok, p, Tensor::zeros({L, d}));
    for (int i = 0; i < L; ++i) {
        for (int j = 0; j < d; ++j) {
            CHECK(fused_ones.at(i, j) == doctest::Approx(tok.at(i, j) + p.at(i, j)));
            CHECK(fused_zero.at(i, j) == tok.at(i, j));
        }
    }
    CHECK_THROWS_AS(fuse_position_time(tok, p, Tensor::zeros({L, d + 1})),
                    std::invalid_argument);
}

TEST_CASE("temporal component gradients reach non-pad positions only") {
    const int L = 5, d = 4, content = 3;
    // Component table: row 0 is reserved for padding positions in this test.
    std::vector<float> table(3 * d);
    for (size_t i = 0; i < table.size(); ++i) table[i] = 0.1f * static_cast<float>(i + 1);
    Tensor comp = Tensor::param({3, d}, table);
    std::vector<int> ids = {0, 0, 1, 2, 1};  // pads use 0; content uses 1 and 2

    Tensor tok = Tensor::full({L, d}, 0.5f);
    Tensor p = positional_masked(L, d, content);
    Tensor e_t = embedding_lookup(comp, ids);
    Tensor loss = sum_all(fuse_position_time(tok, p, e_t));
    auto grads = forward_backward(loss);

    REQUIRE(grads.count(comp.id()) == 1);
    const auto& g = grads.at(comp.id());
    float row0 = 0, row1 = 0, row2 = 0;
    for (int j = 0; j < d; ++j) {
        row0 += std::fabs(g[static_cast<size_t>(j)]);
        row1 += std::fabs(g[static_cast<size_t>(d + j)]);
        row2 += std::fabs(g[static_cast<size_t>(2 * d + j)]);
    }
    CHECK(row0 == 0.0f);  // padding rows are silenced by the zeroed p_t
    CHECK(row1 > 0.0f);
    CHECK(row2 > 0.0f);
}

TEST_CASE("fusion is equivariant to padding depth") {
    // The same 4 content tokens embedded under two different padding depths
    // produce identical content rows.
    const int d = 6;
    std::vector<float> row = {0.3f, -0.2f, 0.8f, 0.1f, -0.5f, 0.9f};
    auto build = [&](int L) {
        std::vector<float> tok(static_cast<size_t>(L) * d, 0.0f);
        std::vector<float> et(static_cast<size_t>(L) * d, 0.0f);
        for (int i = L - 4; i < L; ++i) {
            for (int j = 0; j < d; ++j) {
                tok[static_cast<size_t>(i * d + j)] = row[static_cast<size_t>(j)] * (i % 3 + 1);
                et[static_cast<size_t>(i * d + j)] = 0.25f * static_cast<float>(j + 1);
            }
        }
        return fuse_position_time(Tensor::from({L, d}, tok), positional_masked(L, d, 4),
                                  Tensor::from({L, d}, et));
    };
    // Content rows at depth L=8 vs L=16; i % 3 phase must match for the token
    // data itself to be identical, so compare L and L+6.
    Tensor a = build(8);
    Tensor b = build(14);
    for (int r = 0; r < 4; ++r) {
        for (int j = 0; j < d; ++j) {
            CHECK(a.at(4 + r, j) == doctest::Approx(b.at(10 + r, j)));
        }
    }
}
