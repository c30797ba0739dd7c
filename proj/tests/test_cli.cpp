// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fintrec/adapt.hpp"
#include "fintrec/checkpoint.hpp"
#include "fintrec/cli.hpp"

using namespace fintrec;
namespace fs = std::filesystem;

namespace {

const std::string kBase = (fs::temp_directory_path() / "fintrec_cli_test").string();

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

// Small world + small model that still produce data in every split.
cli::RunConfig tiny_config(const std::string& out) {
    cli::RunConfig cfg;
    cfg.seed = 3;
    cfg.out = out;
    cfg.world.n_users = 120;
    cfg.world.n_items = 24;
    cfg.world.n_days = 40;
    cfg.world.fm_dim = 8;
    cfg.split = {30, 5, 5};
    cfg.net.n_layers = 1;
    cfg.net.d_embed = 16;
    cfg.net.d_hidden = 8;
    cfg.net.head_hidden = 16;
    cfg.net.max_len = 32;
    cfg.trainer.epochs = 1;
    return cfg;
}

// Shared artifacts: generate + preprocess + train exactly once per test run.
const cli::RunConfig& smoke_run() {
    static const cli::RunConfig cfg = [] {
        cli::RunConfig c = tiny_config(kBase + "/smoke");
        fs::remove_all(c.out);
        cli::cmd_generate(c);
        cli::cmd_preprocess(c);
        cli::cmd_train(c);
        return c;
    }();
    return cfg;
}

}  // namespace

TEST_CASE("config parses, dumps canonically, and hashes its dump") {
    cli::RunConfig cfg = cli::parse_config(
        "seed = 7\n"
        "[data]\n"
        "users = 50\n"
        "product_share = 0.5, 0.5\n"
        "; a comment\n"
        "[model]\n"
        "n_layers = 3\n");
    CHECK(cfg.seed == 7);
    CHECK(cfg.world.n_users == 50);
    CHECK(cfg.world.product_share == std::vector<double>{0.5, 0.5});
    CHECK(cfg.net.n_layers == 3);
    // untouched knobs keep their defaults
    CHECK(cfg.world.n_items == 200);
    CHECK(cfg.trainer.epochs == 2);

    // the dump parses back to an identical dump
    std::string dump = cli::dump_config(cfg);
    CHECK(cli::dump_config(cli::parse_config(dump)) == dump);
    CHECK(cli::config_hash(cfg) == cli::config_hash(cli::parse_config(dump)));
}

TEST_CASE("unknown keys, sections, and malformed lines are rejected") {
    CHECK_THROWS_AS(cli::parse_config("[data]\nuserz = 5\n"), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_config("[dataz]\n"), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_config("[data]\nusers\n"), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_config("[data]\nusers = ten\n"), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_config("users = 5\n"), std::invalid_argument);  // no section

    cli::RunConfig cfg;
    CHECK_THROWS_AS(cli::apply_override(cfg, "data.users"), std::invalid_argument);
    CHECK_THROWS_AS(cli::apply_override(cfg, "nope.users=5"), std::invalid_argument);
}

TEST_CASE("overrides hit nested knobs and the hash tracks every knob but the out dir") {
    cli::RunConfig a, b;
    CHECK(cli::config_hash(a) == cli::config_hash(b));

    cli::apply_override(b, "seed=9");
    CHECK(b.seed == 9);
    CHECK(cli::config_hash(a) != cli::config_hash(b));

    b = a;
    cli::apply_override(b, "finetune.mode=fft");
    CHECK(b.ft.mode == adapt::FinetuneMode::fft);
    CHECK(cli::config_hash(a) != cli::config_hash(b));

    b = a;
    cli::apply_override(b, "explain.method=averaged");
    CHECK(b.ex.method == explain::ImportanceMethod::averaged);

    // the output directory is location, not experiment identity
    b = a;
    b.out = "somewhere/else";
    CHECK(cli::config_hash(a) == cli::config_hash(b));
    CHECK(cli::dump_config(a) == cli::dump_config(b));
}

TEST_CASE("finalize propagates the seed and context widths") {
    cli::RunConfig cfg;
    cfg.seed = 42;
    cfg.world.fm_dim = 12;
    cfg.world.enrollment_universe = 4;
    cfg.finalize();
    CHECK(cfg.world.seed == 42);
    CHECK(cfg.trainer.seed == 42);
    CHECK(cfg.ft.trainer.seed == 42);
    CHECK(cfg.net.fm_dim == 12);
    CHECK(cfg.net.static_dim == 8);
}

TEST_CASE("smoke path: generate, preprocess, train produce their artifacts") {
    const cli::RunConfig& cfg = smoke_run();
    cli::Paths p{cfg.out};
    CHECK(fs::exists(p.events()));
    CHECK(fs::exists(p.profiles()));
    CHECK(fs::exists(p.catalog()));
    CHECK(fs::exists(p.planted()));
    CHECK(fs::exists(p.dataset()));
    CHECK(fs::exists(p.pctr_ckpt()));
    CHECK(fs::exists(p.pcvr_ckpt()));
    CHECK(fs::exists(p.effective_config()));
    CHECK(fs::exists(cfg.out + "/train_metrics.txt"));

    // the effective config carries the hash and parses back to the same dump
    std::string eff = read_bytes(p.effective_config());
    CHECK(eff.find("# config_hash=") == 0);
    std::string body = eff.substr(eff.find('\n') + 1);
    CHECK(cli::dump_config(cli::parse_config(body)) == cli::dump_config(cfg));
}

TEST_CASE("missing prerequisites name the command that produces them") {
    cli::RunConfig cfg = tiny_config(kBase + "/empty");
    fs::remove_all(cfg.out);

    CHECK_THROWS_WITH_AS(cli::cmd_preprocess(cfg),
                         doctest::Contains("run `fintrec generate`"), std::runtime_error);
    CHECK_THROWS_WITH_AS(cli::cmd_train(cfg), doctest::Contains("run `fintrec preprocess`"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(cli::cmd_bench(cfg), doctest::Contains("run `fintrec preprocess`"),
                         std::runtime_error);

    // dataset present but checkpoints absent: evaluate names train
    const cli::RunConfig& smoke = smoke_run();
    cli::RunConfig half = smoke;
    half.out = kBase + "/half";
    fs::remove_all(half.out);
    fs::create_directories(half.out);
    fs::copy_file(cli::Paths{smoke.out}.dataset(), cli::Paths{half.out}.dataset());
    CHECK_THROWS_WITH_AS(cli::cmd_evaluate(half), doctest::Contains("run `fintrec train`"),
                         std::runtime_error);
}

TEST_CASE("dataset round-trips bit-exactly through its binary artifact") {
    const cli::RunConfig& cfg = smoke_run();
    cli::Paths p{cfg.out};
    cli::Dataset ds = cli::load_dataset(p.dataset());
    CHECK(ds.vocab.size() > pipeline::TokenVocabulary::kFirstTuple);
    CHECK(ds.n_items == cfg.world.n_items);
    CHECK(!ds.ctr.empty());
    CHECK(!ds.cvr.empty());
    CHECK(ds.profiles.size() == static_cast<size_t>(cfg.world.n_users));

    std::string copy = cfg.out + "/dataset_copy.bin";
    cli::save_dataset(copy, ds);
    CHECK(read_bytes(copy) == read_bytes(p.dataset()));

    // a truncated artifact is reported as such
    std::string bytes = read_bytes(p.dataset());
    std::ofstream trunc(cfg.out + "/dataset_trunc.bin", std::ios::binary);
    trunc.write(bytes.data(), bytes.size() / 2);
    trunc.close();
    CHECK_THROWS_WITH_AS(cli::load_dataset(cfg.out + "/dataset_trunc.bin"),
                         doctest::Contains("truncated"), std::runtime_error);
    CHECK_THROWS_AS(cli::load_dataset(p.events()), std::runtime_error);  // wrong magic
}

TEST_CASE("training twice with one config and seed is bitwise identical") {
    const cli::RunConfig& cfg = smoke_run();
    cli::Paths p{cfg.out};
    std::string ctr_first = read_bytes(p.pctr_ckpt());
    std::string cvr_first = read_bytes(p.pcvr_ckpt());
    std::string metrics_first = read_bytes(cfg.out + "/train_metrics.txt");

    // rerun in a different directory: same artifacts, byte for byte
    cli::RunConfig again = cfg;
    again.out = kBase + "/smoke_again";
    fs::remove_all(again.out);
    fs::create_directories(again.out);
    fs::copy_file(p.dataset(), cli::Paths{again.out}.dataset());
    cli::cmd_train(again);
    CHECK(read_bytes(cli::Paths{again.out}.pctr_ckpt()) == ctr_first);
    CHECK(read_bytes(cli::Paths{again.out}.pcvr_ckpt()) == cvr_first);
    CHECK(read_bytes(again.out + "/train_metrics.txt") == metrics_first);
}

TEST_CASE("model checkpoints round-trip with a forward diff of exactly zero") {
    const cli::RunConfig& cfg = smoke_run();
    cli::Paths p{cfg.out};
    cli::Dataset ds = cli::load_dataset(p.dataset());
    auto m = cli::load_model(p.pctr_ckpt());
    auto inputs = cli::dataset_inputs(ds, model::HeadKind::pctr, pipeline::kVal, m.config());
    REQUIRE(!inputs.empty());

    std::string copy = cfg.out + "/pctr_roundtrip.ckpt";
    cli::save_model(copy, m, cli::config_hash(cfg));
    auto m2 = cli::load_model(copy);
    Tensor a = m.pctr_logits(inputs[0]);
    Tensor b = m2.pctr_logits(inputs[0]);
    REQUIRE(a.data().size() == b.data().size());
    for (size_t i = 0; i < a.data().size(); ++i) CHECK(a.data()[i] == b.data()[i]);

    SUBCASE("a truncated checkpoint is reported as corrupt") {
        std::string bytes = read_bytes(p.pctr_ckpt());
        std::string broken = cfg.out + "/pctr_broken.ckpt";
        std::ofstream f(broken, std::ios::binary);
        f.write(bytes.data(), bytes.size() / 2);
        f.close();
        CHECK_THROWS_AS(cli::load_model(broken), std::runtime_error);
    }

    SUBCASE("an adapter delta is refused on a mismatched base") {
        auto base = cli::load_model(p.pctr_ckpt());
        auto frozen = adapt::apply_mode(base, adapt::FinetuneMode::lp);
        (void)frozen;
        std::string path = cfg.out + "/adapter_mismatch.ckpt";
        adapt::save_adapter(path, base, adapt::FinetuneMode::lp,
                            params_hash(base.params()));
        auto other = model::FinTRecModel::init(base.config(), cfg.seed + 17);
        CHECK_THROWS_AS(adapt::load_adapter(path, other), std::runtime_error);
    }
}

TEST_CASE("an untrained model evaluates at chance-level recall") {
    // 200 items; recall@1 of random rankings concentrates around 1/200
    cli::RunConfig cfg = tiny_config(kBase + "/chance");
    cfg.world.n_users = 300;
    cfg.world.n_items = 200;
    cfg.world.n_days = 35;
    cfg.split = {25, 5, 5};
    fs::remove_all(cfg.out);
    cli::cmd_generate(cfg);
    cli::cmd_preprocess(cfg);

    cli::RunConfig resolved = cfg;
    resolved.finalize();
    cli::Paths p{cfg.out};
    cli::Dataset ds = cli::load_dataset(p.dataset());
    uint64_t hash = cli::config_hash(cfg);
    auto net_ctr = cli::resolve_net(resolved, ds, model::HeadKind::pctr);
    cli::save_model(p.pctr_ckpt(), model::FinTRecModel::init(net_ctr, cfg.seed + 9), hash);
    auto net_cvr = cli::resolve_net(resolved, ds, model::HeadKind::pcvr);
    cli::save_model(p.pcvr_ckpt(), model::FinTRecModel::init(net_cvr, cfg.seed + 9), hash);

    auto res = cli::cmd_evaluate(cfg);
    REQUIRE(res.pctr_val.labels >= 50);
    double p0 = 1.0 / 200.0;
    double sigma = std::sqrt(p0 * (1 - p0) / res.pctr_val.labels);
    CHECK(res.pctr_val.recall1 <= p0 + 5 * sigma + 0.01);
    // recall@k grows with k even for random scores
    CHECK(res.pctr_val.recall10 >= res.pctr_val.recall1);
}

TEST_CASE("scorer ranks requests exactly like the offline blend") {
    const cli::RunConfig& base = smoke_run();
    cli::RunConfig cfg = base;
    cfg.weights = {0.3, 1.0, 0.5};  // exercise all three terms

    cli::Paths p{cfg.out};
    cli::Dataset ds = cli::load_dataset(p.dataset());
    auto m_ctr = cli::load_model(p.pctr_ckpt());
    auto m_cvr = cli::load_model(p.pcvr_ckpt());
    Catalog catalog = read_catalog(p.catalog());
    auto events = read_events(p.events());
    auto log = pipeline::sessionize(std::move(events), cfg.session_gap_minutes);
    auto store = cli::build_feature_store(log, ds.profiles, ds.vocab, ds.ctx,
                                          m_ctr.config().max_len, ds.bounds.val_end_ms);
    REQUIRE(!store.users.empty());
    cli::Scorer scorer(std::move(m_ctr), std::move(m_cvr), catalog, cfg.weights,
                       std::move(store));
    int32_t user = scorer.known_users().front();
    int64_t ts = ds.bounds.val_end_ms + 60'000;

    SUBCASE("empty candidate sets succeed with an empty slate") {
        auto resp = scorer.score({user, ts, {}});
        CHECK(resp.slate.candidates.empty());
        CHECK(resp.slate.user_id == user);
        CHECK(resp.timings.feature_ms >= 0.0);
        CHECK(resp.timings.total_ms() >= 0.0);
    }

    SUBCASE("a single candidate comes back first") {
        auto resp = scorer.score({user, ts, {5}});
        REQUIRE(resp.slate.candidates.size() == 1);
        CHECK(resp.slate.candidates[0].item_id == 5);
    }

    SUBCASE("slate order equals the offline ranking score") {
        std::vector<int32_t> cands = {1, 4, 7, 9, 12, 15, 18, 21};
        auto resp = scorer.score({user, ts, cands});
        REQUIRE(resp.slate.candidates.size() == cands.size());

        // the response never invents candidates
        std::vector<int32_t> got;
        for (const auto& c : resp.slate.candidates) got.push_back(c.item_id);
        std::sort(got.begin(), got.end());
        CHECK(got == cands);

        // blend recomputed offline from the logged model outputs
        for (size_t i = 0; i < resp.slate.candidates.size(); ++i) {
            const auto& c = resp.slate.candidates[i];
            CHECK(c.rs == doctest::Approx(ranksim::ranking_score(c.pctr, c.pcvr, c.us,
                                                                 c.value, cfg.weights))
                              .epsilon(1e-12));
            if (i > 0) CHECK(resp.slate.candidates[i - 1].rs >= c.rs);
        }

        // per-stage timings are populated and non-negative
        CHECK(resp.timings.feature_ms >= 0.0);
        CHECK(resp.timings.forward_ms > 0.0);
        CHECK(resp.timings.rank_ms >= 0.0);
    }

    SUBCASE("unknown users fall back to a cold-start context") {
        auto resp = scorer.score({987654, ts, {2, 3}});
        CHECK(resp.cold_start);
        CHECK(resp.slate.candidates.size() == 2);
    }

    SUBCASE("candidates outside the catalog are rejected") {
        CHECK_THROWS_AS(scorer.score({user, ts, {9999}}), std::invalid_argument);
        CHECK_THROWS_AS(scorer.score({user, ts, {-1}}), std::invalid_argument);
    }

    SUBCASE("events after the batch cutoff cannot change a response") {
        auto resp_before = scorer.score({user, ts, {1, 2, 3}});
        auto events2 = read_events(p.events());
        Event late = events2.back();
        late.user_id = user;
        late.ts = ds.bounds.val_end_ms + 1;
        late.kind = EventKind::click;
        events2.push_back(late);
        std::stable_sort(events2.begin(), events2.end(), [](const Event& a, const Event& b) {
            if (a.user_id != b.user_id) return a.user_id < b.user_id;
            return a.ts < b.ts;
        });
        auto log2 = pipeline::sessionize(std::move(events2), cfg.session_gap_minutes);
        auto store2 = cli::build_feature_store(log2, ds.profiles, ds.vocab, ds.ctx,
                                               scorer.catalog().items.empty() ? 32 : 32,
                                               ds.bounds.val_end_ms);
        auto m1 = cli::load_model(p.pctr_ckpt());
        auto m2 = cli::load_model(p.pcvr_ckpt());
        cli::Scorer scorer2(std::move(m1), std::move(m2), catalog, cfg.weights,
                            std::move(store2));
        auto resp_after = scorer2.score({user, ts, {1, 2, 3}});
        REQUIRE(resp_after.slate.candidates.size() == resp_before.slate.candidates.size());
        for (size_t i = 0; i < resp_before.slate.candidates.size(); ++i) {
            CHECK(resp_after.slate.candidates[i].item_id ==
                  resp_before.slate.candidates[i].item_id);
            CHECK(resp_after.slate.candidates[i].rs == resp_before.slate.candidates[i].rs);
        }
    }
}

TEST_CASE("bench reports ordered percentiles and scales with model depth") {
    const cli::RunConfig& base = smoke_run();
    cli::Paths p{base.out};
    cli::Dataset ds = cli::load_dataset(p.dataset());
    Catalog catalog = read_catalog(p.catalog());
    auto events = read_events(p.events());
    auto log = pipeline::sessionize(std::move(events), base.session_gap_minutes);

    cli::RunConfig resolved = base;
    resolved.finalize();
    auto make_scorer = [&](int n_layers, uint64_t seed) {
        auto net = cli::resolve_net(resolved, ds, model::HeadKind::pctr);
        net.n_layers = n_layers;
        auto net_cvr = cli::resolve_net(resolved, ds, model::HeadKind::pcvr);
        net_cvr.n_layers = n_layers;
        auto store = cli::build_feature_store(log, ds.profiles, ds.vocab, ds.ctx, net.max_len,
                                              ds.bounds.val_end_ms);
        return cli::Scorer(model::FinTRecModel::init(net, seed),
                           model::FinTRecModel::init(net_cvr, seed), catalog, base.weights,
                           std::move(store));
    };

    cli::BenchConfig bc;
    bc.duration_ms = 10'000;
    bc.threads = 2;
    bc.candidates = 8;
    bc.max_requests = 60;
    bc.seed = 11;

    auto shallow = make_scorer(1, 5);
    auto users = shallow.known_users();
    auto rep1 = cli::run_bench(shallow, users, bc);
    REQUIRE(rep1.requests > 0);
    CHECK(rep1.requests <= bc.max_requests + bc.threads);  // cap, modulo in-flight calls
    CHECK(rep1.p50_ms <= rep1.p90_ms);
    CHECK(rep1.p90_ms <= rep1.p99_ms);
    CHECK(rep1.throughput_rps > 0.0);
    CHECK(rep1.stage_mean.forward_ms > 0.0);

    SUBCASE("zero duration yields an empty report, not a crash") {
        cli::BenchConfig zero = bc;
        zero.duration_ms = 0;
        auto rep = cli::run_bench(shallow, users, zero);
        CHECK(rep.empty());
        cli::write_bench_report(base.out + "/bench_zero.txt", rep, 0);
        CHECK(read_bytes(base.out + "/bench_zero.txt").find("no requests issued") !=
              std::string::npos);
    }

    SUBCASE("doubling the layer count strictly increases mean forward time") {
        auto deep = make_scorer(2, 5);
        auto rep2 = cli::run_bench(deep, users, bc);
        REQUIRE(rep2.requests > 0);
        CHECK(rep2.stage_mean.forward_ms > rep1.stage_mean.forward_ms);
    }
}

TEST_CASE("sweep, explain, and score commands write their artifacts") {
    const cli::RunConfig& base = smoke_run();
    cli::RunConfig cfg = base;
    cfg.sweep.grid = 2;
    cfg.ex.sequences = 3;
    cfg.serve.candidates = 6;

    auto sweep = cli::cmd_sweep(cfg);
    CHECK(sweep.points.size() == 8);  // 2^3 grid
    CHECK(fs::exists(cfg.out + "/sweep.csv"));
    CHECK(fs::exists(cfg.out + "/sweep.svg"));

    auto ex = cli::cmd_explain(cfg);
    CHECK(ex.sequences == 3);
    CHECK(fs::exists(cfg.out + "/importance.csv"));

    auto resp = cli::cmd_score(cfg);
    CHECK(resp.slate.candidates.size() == 6);
    CHECK(fs::exists(cfg.out + "/score_slate.csv"));

    auto ev = cli::cmd_evaluate(cfg);
    CHECK(ev.logloss_val > 0.0);
    CHECK(fs::exists(cfg.out + "/scored_val.csv"));
    CHECK(fs::exists(cfg.out + "/recall_curve.svg"));
    CHECK(fs::exists(cfg.out + "/calibration.svg"));

    std::string csv = read_bytes(cfg.out + "/scored_val.csv");
    CHECK(csv.find("user_id,ts,item_id,label,score") != std::string::npos);
}

TEST_CASE("finetune adapts a held-out product end to end") {
    const cli::RunConfig& base = smoke_run();
    cli::RunConfig cfg = base;
    cfg.ft.product = 1;
    cfg.ft.trainer.epochs = 1;
    cfg.ft.mode = adapt::FinetuneMode::lora;

    auto report = cli::cmd_finetune(cfg);
    CHECK(report.trainable_params > 0);
    CHECK(report.recall1 >= 0.0);
    cli::Paths p{cfg.out};
    CHECK(fs::exists(p.adapter(adapt::FinetuneMode::lora)));

    // the stored delta replays onto the very base that produced it
    auto ck = load_checkpoint(p.adapter(adapt::FinetuneMode::lora));
    CHECK(ck.kind == "adapter");
    CHECK(ck.base_hash == report.base_hash);
}
