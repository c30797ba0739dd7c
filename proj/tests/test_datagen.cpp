// SPDX-License-Identifier: Apache-2.0
//
// Properties of the synthetic world generator: determinism, click/impression
// consistency, planted conversion bookkeeping, and the learnable preference
// signal the models are later expected to pick up.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "fintrec/datagen.hpp"
#include "fintrec/events.hpp"

using namespace fintrec;
using datagen::WorldConfig;

namespace {

WorldConfig small_world() {
    WorldConfig cfg;
    cfg.n_users = 300;
    cfg.n_items = 40;
    cfg.n_days = 50;
    cfg.latent_dim = 4;
    cfg.seed = 9;
    return cfg;
}

bool events_equal(const Event& a, const Event& b) {
    return a.user_id == b.user_id && a.ts == b.ts && a.kind == b.kind &&
           a.item_id == b.item_id && a.channel == b.channel && a.page_id == b.page_id &&
           a.placement_id == b.placement_id && a.layout_id == b.layout_id &&
           a.device == b.device && a.product_id == b.product_id;
}

}  // namespace

TEST_CASE("same seed yields identical worlds") {
    auto a = datagen::generate_dataset(small_world());
    auto b = datagen::generate_dataset(small_world());
    REQUIRE(a.events.size() == b.events.size());
    for (size_t i = 0; i < a.events.size(); ++i) {
        REQUIRE(events_equal(a.events[i], b.events[i]));
    }
    REQUIRE(a.planted.size() == b.planted.size());
    REQUIRE(a.profiles.size() == b.profiles.size());
    for (size_t i = 0; i < a.profiles.size(); ++i) {
        CHECK(a.profiles[i].fm_seed == b.profiles[i].fm_seed);
        CHECK(a.profiles[i].latent == b.profiles[i].latent);
    }
}

TEST_CASE("different seeds yield different event streams") {
    auto a = datagen::generate_dataset(small_world());
    auto cfg = small_world();
    cfg.seed = 10;
    auto b = datagen::generate_dataset(cfg);
    CHECK(a.events.size() != b.events.size());
}

TEST_CASE("timestamps strictly increase within each user") {
    auto world = datagen::generate_dataset(small_world());
    for (size_t i = 1; i < world.events.size(); ++i) {
        const auto& prev = world.events[i - 1];
        const auto& cur = world.events[i];
        if (prev.user_id == cur.user_id) {
            CHECK(cur.ts > prev.ts);
        } else {
            CHECK(cur.user_id > prev.user_id);
        }
    }
}

TEST_CASE("every click follows an impression of the same item in the same sitting") {
    auto world = datagen::generate_dataset(small_world());
    std::map<std::pair<int32_t, int32_t>, int64_t> last_impression;
    int clicks = 0;
    for (const auto& e : world.events) {
        if (e.kind == EventKind::impression) {
            last_impression[{e.user_id, e.item_id}] = e.ts;
        } else if (e.kind == EventKind::click) {
            ++clicks;
            auto it = last_impression.find({e.user_id, e.item_id});
            REQUIRE(it != last_impression.end());
            CHECK(e.ts - it->second < 1800);
        }
    }
    CHECK(clicks > 0);
}

TEST_CASE("items are partitioned across products with content-type windows") {
    auto world = datagen::generate_dataset(small_world());
    const auto& cat = world.catalog;
    REQUIRE(static_cast<int>(cat.items.size()) == small_world().n_items);
    std::vector<int> per_product(cat.products.size(), 0);
    std::set<uint16_t> pages;
    for (const auto& item : cat.items) {
        per_product[item.product_id]++;
        pages.insert(item.page_id);
        switch (item.content_type) {
            case ContentType::marketing: CHECK(item.attribution_days == 60); break;
            case ContentType::servicing: CHECK(item.attribution_days == 30); break;
            case ContentType::third_party: CHECK(item.attribution_days == 15); break;
        }
        CHECK(item.value > 0.0f);
        CHECK(item.urgency >= 0.0f);
        CHECK_FALSE(item.layouts.empty());
    }
    for (int c : per_product) CHECK(c >= 1);
    CHECK(pages.size() == cat.items.size());  // token space identifies items
}

TEST_CASE("full opt-out produces no recommendation exposure") {
    auto cfg = small_world();
    cfg.opt_out_fraction = 1.0;
    auto world = datagen::generate_dataset(cfg);
    int impressions = 0, clicks = 0;
    for (const auto& e : world.events) {
        if (e.kind == EventKind::impression) ++impressions;
        if (e.kind == EventKind::click) ++clicks;
    }
    CHECK(impressions == 0);
    CHECK(clicks == 0);
    CHECK_FALSE(world.events.empty());  // users still bank
}

TEST_CASE("some conversions lack any preceding click") {
    auto cfg = small_world();
    cfg.n_users = 2000;
    cfg.conversions_per_user = 0.4;
    auto world = datagen::generate_dataset(cfg);
    std::set<std::pair<int32_t, int32_t>> clicked;
    int with_click = 0, without_click = 0;
    for (const auto& e : world.events) {
        if (e.kind == EventKind::click) clicked.insert({e.user_id, e.item_id});
        if (e.kind == EventKind::conversion) {
            (clicked.count({e.user_id, e.item_id}) ? with_click : without_click)++;
        }
    }
    CHECK(with_click > 0);
    CHECK(without_click > 0);
}

TEST_CASE("planted conversions carry their trigger sessions") {
    auto cfg = small_world();
    cfg.n_users = 1500;
    cfg.conversions_per_user = 0.5;
    auto world = datagen::generate_dataset(cfg);
    REQUIRE_FALSE(world.planted.empty());
    int triggered = 0, external = 0;
    for (const auto& pc : world.planted) {
        if (pc.external) {
            ++external;
            continue;
        }
        if (!pc.has_trigger) continue;
        ++triggered;
        CHECK(pc.trigger_session_ts < pc.conversion_ts);
        // the trigger session contains impressions of the converted item
        bool seen = false;
        for (const auto& e : world.events) {
            if (e.user_id != pc.user_id) continue;
            if (e.ts < pc.trigger_session_ts || e.ts > pc.trigger_session_ts + 3600) continue;
            if (e.kind == EventKind::impression && e.item_id == pc.item_id) seen = true;
        }
        CHECK(seen);
    }
    CHECK(triggered > 20);
    CHECK(external > 0);
}

TEST_CASE("empirical click rates follow latent affinity") {
    WorldConfig cfg;
    cfg.n_users = 1000;
    cfg.n_items = 40;
    cfg.n_days = 60;
    cfg.latent_dim = 4;
    cfg.seed = 12;
    auto world = datagen::generate_dataset(cfg);

    // pooled over users: impressions/clicks of each user's top- and
    // bottom-affinity item (per-user rates are unmeasurable at uniform exposure)
    auto dot = [](const std::vector<float>& a, const std::vector<float>& b) {
        float acc = 0;
        for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
        return acc;
    };
    std::vector<int32_t> top(cfg.n_users), bottom(cfg.n_users);
    for (const auto& prof : world.profiles) {
        float best = -1e9f, worst = 1e9f;
        for (const auto& item : world.catalog.items) {
            const float d = dot(prof.latent, item.latent);
            if (d > best) {
                best = d;
                top[prof.user_id] = item.item_id;
            }
            if (d < worst) {
                worst = d;
                bottom[prof.user_id] = item.item_id;
            }
        }
    }
    int64_t top_imp = 0, top_clk = 0, bot_imp = 0, bot_clk = 0;
    for (const auto& e : world.events) {
        if (e.kind == EventKind::impression) {
            if (e.item_id == top[e.user_id]) top_imp++;
            if (e.item_id == bottom[e.user_id]) bot_imp++;
        } else if (e.kind == EventKind::click) {
            if (e.item_id == top[e.user_id]) top_clk++;
            if (e.item_id == bottom[e.user_id]) bot_clk++;
        }
    }
    REQUIRE(top_imp > 100);
    REQUIRE(bot_imp > 100);
    const double ctr_top = static_cast<double>(top_clk) / top_imp;
    const double ctr_bot = static_cast<double>(bot_clk) / bot_imp;
    CHECK(ctr_top > ctr_bot);
    CHECK(ctr_top > 2.0 * ctr_bot);  // the signal is strong, not marginal
}

TEST_CASE("fm embeddings are daily-constant and deterministic") {
    auto world = datagen::generate_dataset(small_world());
    const auto& prof = world.profiles[3];
    auto a = fm_embedding(prof, 10, 32);
    auto b = fm_embedding(prof, 10, 32);
    auto c = fm_embedding(prof, 11, 32);
    CHECK(a == b);
    CHECK(a != c);
    CHECK(static_cast<int>(a.size()) == 32);
}

TEST_CASE("dataset files round-trip") {
    namespace fs = std::filesystem;
    auto cfg = small_world();
    cfg.n_users = 40;
    auto world = datagen::generate_dataset(cfg);
    const fs::path dir = fs::temp_directory_path() / "fintrec_datagen_roundtrip";
    fs::create_directories(dir);

    write_events((dir / "events.jsonl").string(), world.events);
    auto events = read_events((dir / "events.jsonl").string());
    REQUIRE(events.size() == world.events.size());
    for (size_t i = 0; i < events.size(); ++i) REQUIRE(events_equal(events[i], world.events[i]));

    write_profiles((dir / "profiles.jsonl").string(), world.profiles);
    auto profiles = read_profiles((dir / "profiles.jsonl").string());
    REQUIRE(profiles.size() == world.profiles.size());
    for (size_t i = 0; i < profiles.size(); ++i) {
        CHECK(profiles[i].user_id == world.profiles[i].user_id);
        CHECK(profiles[i].enrollments == world.profiles[i].enrollments);
        CHECK(profiles[i].latent == world.profiles[i].latent);
        CHECK(profiles[i].fm_seed == world.profiles[i].fm_seed);
        CHECK(profiles[i].opt_out == world.profiles[i].opt_out);
    }

    write_catalog((dir / "catalog.jsonl").string(), world.catalog);
    auto catalog = read_catalog((dir / "catalog.jsonl").string());
    REQUIRE(catalog.items.size() == world.catalog.items.size());
    REQUIRE(catalog.products.size() == world.catalog.products.size());
    for (size_t i = 0; i < catalog.items.size(); ++i) {
        CHECK(catalog.items[i].item_id == world.catalog.items[i].item_id);
        CHECK(catalog.items[i].page_id == world.catalog.items[i].page_id);
        CHECK(catalog.items[i].latent == world.catalog.items[i].latent);
        CHECK(catalog.items[i].value == world.catalog.items[i].value);
        CHECK(catalog.items[i].attribution_days == world.catalog.items[i].attribution_days);
    }

    write_planted((dir / "planted.jsonl").string(), world.planted);
    auto planted = read_planted((dir / "planted.jsonl").string());
    REQUIRE(planted.size() == world.planted.size());
    for (size_t i = 0; i < planted.size(); ++i) {
        CHECK(planted[i].user_id == world.planted[i].user_id);
        CHECK(planted[i].conversion_ts == world.planted[i].conversion_ts);
        CHECK(planted[i].trigger_session_ts == world.planted[i].trigger_session_ts);
    }

    auto bad_path = (dir / "bad.jsonl").string();
    std::FILE* f = std::fopen(bad_path.c_str(), "w");
    std::fputs("#wrong-header v9\n", f);
    std::fclose(f);
    CHECK_THROWS(read_events(bad_path));
    fs::remove_all(dir);
}

TEST_CASE("config validation rejects bad values") {
    WorldConfig cfg = small_world();
    cfg.n_products = 5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_world();
    cfg.opt_out_fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_world();
    cfg.n_items = 2;  // fewer items than products
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
