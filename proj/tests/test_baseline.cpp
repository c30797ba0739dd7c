// SPDX-License-Identifier: Apache-2.0
//
// Tabular anchor model: time-aligned engineered features (no future leakage)
// and the Gini random forest with bootstrap sampling and per-split feature
// subsampling.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "fintrec/baseline.hpp"
#include "fintrec/events.hpp"
#include "fintrec/pca.hpp"
#include "fintrec/pipeline.hpp"
#include "fintrec/rng.hpp"

using namespace fintrec;
using baseline::FeatureRow;
using baseline::ForestModel;
using baseline::RfConfig;
using baseline::Snapshot;

namespace {

constexpr int64_t kDay = 86400000;
constexpr int64_t kBase = 100 * kDay;

Event ev(int32_t user, EventKind kind, int64_t ts_ms) {
    Event e;
    e.user_id = user;
    e.kind = kind;
    e.ts = ts_ms;
    e.page_id = 1;
    return e;
}

pipeline::SessionizedLog log_of(std::vector<Event> events) {
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        return a.user_id != b.user_id ? a.user_id < b.user_id : a.ts < b.ts;
    });
    pipeline::SessionizedLog log;
    log.events = std::move(events);
    size_t begin = 0;
    for (size_t i = 0; i <= log.events.size(); ++i) {
        if (i == log.events.size() || (i > 0 && log.events[i].user_id != log.events[i - 1].user_id)) {
            if (i > begin) {
                log.user_slot.emplace(log.events[begin].user_id, log.user_spans.size());
                log.user_spans.emplace_back(begin, i);
            }
            begin = i;
        }
    }
    return log;
}

UserProfile profile_of(int32_t user) {
    UserProfile p;
    p.user_id = user;
    p.enrollments = {1, 0};
    p.tenure_days = {120.0f, 0.0f};
    p.fm_seed = 7;
    return p;
}

pipeline::ContextTransformer small_ctx() {
    pipeline::ContextTransformer ctx;
    ctx.fm_dim = 4;
    ctx.enrollment_universe = 2;
    return ctx;
}

PcaModel identity_pca(int d, int k) {
    PcaModel pca;
    pca.in_dim = d;
    pca.out_dim = k;
    pca.mean.assign(static_cast<size_t>(d), 0.0f);
    pca.components.assign(static_cast<size_t>(k) * d, 0.0f);
    for (int i = 0; i < k; ++i) pca.components[static_cast<size_t>(i) * d + i] = 1.0f;
    return pca;
}

// Rows drawn from two overlapping Gaussian-ish blobs in 3 dimensions.
std::vector<FeatureRow> blob_rows(int n, uint64_t seed) {
    Rng rng(seed);
    std::vector<FeatureRow> rows;
    for (int i = 0; i < n; ++i) {
        FeatureRow r;
        r.label = static_cast<float>(i % 2);
        const float center = r.label > 0.5f ? 1.0f : -1.0f;
        for (int d = 0; d < 3; ++d) r.x.push_back(center + rng.truncated_normal(1.0f));
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace

TEST_CASE("trailing window counts are exact") {
    std::vector<Event> events;
    // Three logins inside 7 days, one more at 10 days back, one at 40 days.
    events.push_back(ev(1, EventKind::login, kBase - 1 * kDay));
    events.push_back(ev(1, EventKind::login, kBase - 3 * kDay));
    events.push_back(ev(1, EventKind::login, kBase - 6 * kDay));
    events.push_back(ev(1, EventKind::login, kBase - 10 * kDay));
    events.push_back(ev(1, EventKind::login, kBase - 40 * kDay));
    // Impressions and a conversion for the rate features.
    events.push_back(ev(1, EventKind::impression, kBase - 2 * kDay));
    events.push_back(ev(1, EventKind::impression, kBase - 5 * kDay));
    events.push_back(ev(1, EventKind::impression, kBase - 20 * kDay));
    events.push_back(ev(1, EventKind::conversion, kBase - 5 * kDay + 1000));
    pipeline::SessionizedLog log = log_of(std::move(events));
    std::vector<UserProfile> profiles = {profile_of(1)};
    pipeline::ContextTransformer ctx = small_ctx();
    PcaModel pca = identity_pca(ctx.fm_dim, 2);

    Snapshot at;
    at.user_id = 1;
    at.ts_ms = kBase;
    at.item_id = 3;
    at.label = 1.0f;
    auto rows = baseline::engineer_features(log, profiles, ctx, pca, {at});
    REQUIRE(rows.size() == 1);
    const auto& x = rows[0].x;
    const auto names = baseline::feature_names(ctx, pca.out_dim);
    REQUIRE(names.size() == x.size());

    CHECK(x[0] == 3.0f);  // login_7d
    CHECK(x[1] == 4.0f);  // login_14d
    CHECK(x[2] == 4.0f);  // login_30d (the 40-day login is out of range)
    CHECK(x[3] == 2.0f);  // page_visits_7d
    CHECK(x[4] == 2.0f);  // page_visits_14d
    CHECK(x[5] == 3.0f);  // page_visits_30d
    CHECK(x[6] == doctest::Approx(0.5f));        // conv_rate_7d: 1 of 2
    CHECK(x[7] == doctest::Approx(0.5f));        // conv_rate_14d
    CHECK(x[8] == doctest::Approx(1.0f / 3.0f));  // conv_rate_30d
    CHECK(rows[0].label == 1.0f);
    CHECK(rows[0].item_id == 3);
}

TEST_CASE("an impression at the very start of the data has empty windows") {
    pipeline::SessionizedLog log = log_of({ev(1, EventKind::impression, kBase)});
    std::vector<UserProfile> profiles = {profile_of(1)};
    pipeline::ContextTransformer ctx = small_ctx();
    PcaModel pca = identity_pca(ctx.fm_dim, 2);
    Snapshot at;
    at.user_id = 1;
    at.ts_ms = kBase;
    auto rows = baseline::engineer_features(log, profiles, ctx, pca, {at});
    for (int i = 0; i < 9; ++i) CHECK(rows[0].x[static_cast<size_t>(i)] == 0.0f);
    // Static and embedding blocks are still populated.
    CHECK(rows[0].x.size() == 9 + 4 + 2);
    CHECK(rows[0].x[9] == 1.0f);  // enrollment multi-hot
}

TEST_CASE("features never read events after the impression") {
    Rng rng(99);
    std::vector<Event> events;
    const EventKind kinds[4] = {EventKind::login, EventKind::impression, EventKind::conversion,
                                EventKind::click};
    for (int i = 0; i < 400; ++i) {
        events.push_back(ev(1 + static_cast<int>(rng.below(3)), kinds[rng.below(4)],
                            kBase - 35 * kDay + static_cast<int64_t>(rng.below(70 * kDay))));
    }
    std::vector<UserProfile> profiles = {profile_of(1), profile_of(2), profile_of(3)};
    pipeline::ContextTransformer ctx = small_ctx();
    PcaModel pca = identity_pca(ctx.fm_dim, 3);

    std::vector<Snapshot> at;
    for (int u = 1; u <= 3; ++u) {
        Snapshot s;
        s.user_id = u;
        s.ts_ms = kBase;
        at.push_back(s);
    }
    pipeline::SessionizedLog full = log_of(events);
    auto with_future = baseline::engineer_features(full, profiles, ctx, pca, at);

    std::vector<Event> past_only;
    for (const auto& e : events) {
        if (e.ts <= kBase) past_only.push_back(e);
    }
    pipeline::SessionizedLog censored = log_of(std::move(past_only));
    auto without_future = baseline::engineer_features(censored, profiles, ctx, pca, at);

    REQUIRE(with_future.size() == without_future.size());
    for (size_t i = 0; i < with_future.size(); ++i) {
        CHECK(with_future[i].x == without_future[i].x);
    }
}

TEST_CASE("a depth-1 tree separates separable data perfectly") {
    std::vector<FeatureRow> rows;
    for (int i = 0; i < 40; ++i) {
        FeatureRow r;
        r.label = i < 20 ? 0.0f : 1.0f;
        r.x = {i < 20 ? -1.0f - 0.01f * i : 1.0f + 0.01f * i};
        rows.push_back(std::move(r));
    }
    RfConfig cfg;
    cfg.n_trees = 1;
    cfg.max_depth = 1;
    cfg.bootstrap = false;
    cfg.features_per_split = 1;
    ForestModel m = baseline::train_rf(rows, cfg);
    for (const auto& r : rows) {
        const double p = baseline::predict_rf(m, r.x);
        CHECK((p > 0.5) == (r.label > 0.5f));
    }
}

TEST_CASE("a single fully-sampled tree is deterministic given the seed") {
    std::vector<FeatureRow> rows = blob_rows(60, 11);
    RfConfig cfg;
    cfg.n_trees = 1;
    cfg.bootstrap = false;
    cfg.max_depth = 4;
    cfg.seed = 5;
    ForestModel a = baseline::train_rf(rows, cfg);
    ForestModel b = baseline::train_rf(rows, cfg);
    REQUIRE(a.trees.size() == 1);
    REQUIRE(a.trees[0].nodes.size() == b.trees[0].nodes.size());
    for (size_t i = 0; i < a.trees[0].nodes.size(); ++i) {
        CHECK(a.trees[0].nodes[i].feature == b.trees[0].nodes[i].feature);
        CHECK(a.trees[0].nodes[i].threshold == b.trees[0].nodes[i].threshold);
        CHECK(a.trees[0].nodes[i].prob == b.trees[0].nodes[i].prob);
    }
}

TEST_CASE("depth-2 forests solve the XOR pattern that stumps depth-1") {
    Rng rng(17);
    std::vector<FeatureRow> rows;
    for (int i = 0; i < 200; ++i) {
        FeatureRow r;
        const int a = static_cast<int>(rng.below(2));
        const int b = static_cast<int>(rng.below(2));
        r.label = static_cast<float>(a ^ b);
        r.x = {a * 2.0f - 1.0f + rng.truncated_normal(0.1f),
               b * 2.0f - 1.0f + rng.truncated_normal(0.1f)};
        rows.push_back(std::move(r));
    }
    auto accuracy = [&](const ForestModel& m) {
        int hits = 0;
        for (const auto& r : rows) {
            hits += (baseline::predict_rf(m, r.x) > 0.5) == (r.label > 0.5f);
        }
        return static_cast<double>(hits) / rows.size();
    };
    RfConfig shallow;
    shallow.n_trees = 20;
    shallow.max_depth = 1;
    shallow.features_per_split = 2;
    shallow.seed = 3;
    RfConfig deep = shallow;
    deep.max_depth = 2;
    const double acc_shallow = accuracy(baseline::train_rf(rows, shallow));
    const double acc_deep = accuracy(baseline::train_rf(rows, deep));
    CHECK(acc_deep > 0.8);
    CHECK(acc_deep > acc_shallow + 0.2);
}

TEST_CASE("forest prediction does not depend on tree order") {
    std::vector<FeatureRow> rows = blob_rows(80, 23);
    RfConfig cfg;
    cfg.n_trees = 12;
    cfg.max_depth = 3;
    cfg.seed = 9;
    ForestModel m = baseline::train_rf(rows, cfg);
    ForestModel reversed = m;
    std::reverse(reversed.trees.begin(), reversed.trees.end());
    for (int i = 0; i < 10; ++i) {
        const auto& x = rows[static_cast<size_t>(i * 7)].x;
        CHECK(baseline::predict_rf(m, x) ==
              doctest::Approx(baseline::predict_rf(reversed, x)).epsilon(1e-12));
    }
}

TEST_CASE("more trees shrink the prediction variance across seeds") {
    std::vector<FeatureRow> rows = blob_rows(120, 31);
    const std::vector<float> probe = {0.2f, -0.1f, 0.4f};
    auto variance_at = [&](int n_trees) {
        std::vector<double> preds;
        for (int s = 0; s < 30; ++s) {
            RfConfig cfg;
            cfg.n_trees = n_trees;
            cfg.max_depth = 4;
            cfg.seed = 1000 + static_cast<uint64_t>(s);
            preds.push_back(baseline::predict_rf(baseline::train_rf(rows, cfg), probe));
        }
        double mean = 0.0;
        for (double p : preds) mean += p;
        mean /= preds.size();
        double var = 0.0;
        for (double p : preds) var += (p - mean) * (p - mean);
        return var / (preds.size() - 1);
    };
    const double v1 = variance_at(1);
    const double v5 = variance_at(5);
    const double v25 = variance_at(25);
    CHECK(v5 <= v1 + 1e-4);
    CHECK(v25 <= v5 + 1e-4);
    CHECK(v25 < v1);
}

TEST_CASE("forest training validates its inputs") {
    RfConfig cfg;
    CHECK_THROWS_AS(baseline::train_rf({}, cfg), std::invalid_argument);
    std::vector<FeatureRow> one_class;
    for (int i = 0; i < 10; ++i) {
        FeatureRow r;
        r.label = 1.0f;
        r.x = {static_cast<float>(i)};
        one_class.push_back(std::move(r));
    }
    CHECK_THROWS_AS(baseline::train_rf(one_class, cfg), std::invalid_argument);
    std::vector<FeatureRow> ragged = blob_rows(10, 1);
    ragged[3].x.push_back(0.0f);
    CHECK_THROWS_AS(baseline::train_rf(ragged, cfg), std::invalid_argument);
}

TEST_CASE("scored-log export writes the shared schema") {
    namespace fsys = std::filesystem;
    const fsys::path dir = fsys::temp_directory_path() / "fintrec_baseline_csv";
    fsys::create_directories(dir);
    const std::string path = (dir / "scored.csv").string();

    std::vector<FeatureRow> rows = blob_rows(3, 2);
    rows[0].user_id = 7;
    rows[0].ts_ms = 123;
    rows[0].item_id = 2;
    baseline::write_scored_csv(path, rows, {0.25, 0.5, 0.75});

    std::ifstream f(path);
    std::string line;
    REQUIRE(std::getline(f, line));
    CHECK(line == "user_id,ts,item_id,label,score");
    REQUIRE(std::getline(f, line));
    CHECK(line == "7,123,2,0,0.25");
    CHECK_THROWS_AS(baseline::write_scored_csv(path, rows, {0.1}), std::invalid_argument);
}
