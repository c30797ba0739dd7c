// SPDX-License-Identifier: Apache-2.0
//
// fintrec — one binary for the whole experiment loop: synthesize a world,
// preprocess it, train and adapt the two heads, evaluate, sweep ranking
// weights, explain conversions, and benchmark the in-process scorer.
// Every subcommand accepts the same four flags; knobs not overridden fall
// back to built-in defaults, and the resolved configuration is written next
// to the artifacts as effective_config.ini.
#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "fintrec/cli.hpp"

namespace {

using fintrec::cli::RunConfig;

struct CommonArgs {
    std::string config;
    std::string out;
    uint64_t seed = 0;
    std::vector<std::string> sets;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* out_opt = nullptr;

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config.empty()) cfg = fintrec::cli::load_config_file(config);
        for (const auto& s : sets) fintrec::cli::apply_override(cfg, s);
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (out_opt->count() > 0) cfg.out = out;
        return cfg;
    }
};

std::shared_ptr<CommonArgs> add_common(CLI::App* sub) {
    auto args = std::make_shared<CommonArgs>();
    sub->add_option("--config", args->config, "configuration file (INI sections)");
    args->seed_opt = sub->add_option("--seed", args->seed, "override the top-level seed");
    args->out_opt = sub->add_option("--out", args->out, "artifact directory");
    sub->add_option("--set", args->sets, "override one knob as section.key=value");
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fintrec: transformer recommendation workbench"};
    app.require_subcommand(1);

    auto* c_gen = app.add_subcommand("generate", "synthesize a world and write its logs");
    auto a_gen = add_common(c_gen);
    c_gen->callback([a_gen] {
        auto res = fintrec::cli::cmd_generate(a_gen->resolve());
        std::printf("generate: %zu events, %d users, %d items (config %016llx)\n", res.events,
                    res.users, res.items, static_cast<unsigned long long>(res.hash));
    });

    auto* c_pre = app.add_subcommand("preprocess", "sessionize, label, and assemble sequences");
    auto a_pre = add_common(c_pre);
    c_pre->callback([a_pre] {
        auto res = fintrec::cli::cmd_preprocess(a_pre->resolve());
        std::printf("preprocess: vocab %d, clicks %d/%d/%d, conversions %d/%d/%d\n",
                    res.vocab_size, res.ctr_sequences[0], res.ctr_sequences[1],
                    res.ctr_sequences[2], res.cvr_sequences[0], res.cvr_sequences[1],
                    res.cvr_sequences[2]);
    });

    auto* c_train = app.add_subcommand("train", "train both heads and write checkpoints");
    auto a_train = add_common(c_train);
    c_train->callback([a_train] {
        auto res = fintrec::cli::cmd_train(a_train->resolve());
        std::printf("train: click loss %.4f recall@1 %.4f | conversion loss %.4f "
                    "logloss %.4f\n",
                    res.pctr_loss, res.val_pctr.recall1, res.pcvr_loss, res.val_logloss);
    });

    auto* c_ft = app.add_subcommand("finetune", "adapt a pretrained base to a held-out product");
    auto a_ft = add_common(c_ft);
    c_ft->callback([a_ft] {
        auto res = fintrec::cli::cmd_finetune(a_ft->resolve());
        std::printf("finetune: recall@1 %.4f -> %.4f (zero-shot -> adapted), %lld trainable\n",
                    res.recall1_zero_shot, res.recall1,
                    static_cast<long long>(res.trainable_params));
    });

    auto* c_eval = app.add_subcommand("evaluate", "score the checkpoints on held-out windows");
    auto a_eval = add_common(c_eval);
    c_eval->callback([a_eval] {
        auto res = fintrec::cli::cmd_evaluate(a_eval->resolve());
        std::printf("evaluate: recall@1 %.4f, logloss %.4f, auroc %.4f, ece %.4f -> %.4f\n",
                    res.pctr_val.recall1, res.logloss_val, res.auroc_val, res.ece_raw,
                    res.ece_calibrated);
    });

    auto* c_sweep = app.add_subcommand("sweep", "grid-search the ranking-score weights");
    auto a_sweep = add_common(c_sweep);
    c_sweep->callback([a_sweep] {
        auto res = fintrec::cli::cmd_sweep(a_sweep->resolve());
        std::printf("sweep: %zu grid points written\n", res.points.size());
    });

    auto* c_ex = app.add_subcommand("explain", "rank session visits by model importance");
    auto a_ex = add_common(c_ex);
    c_ex->callback([a_ex] {
        auto res = fintrec::cli::cmd_explain(a_ex->resolve());
        std::printf("explain: %d sequences attributed, %d uniform fallbacks\n", res.sequences,
                    res.fallbacks);
    });

    auto* c_ab = app.add_subcommand("ablate", "retrain on truncated visit subsets");
    auto a_ab = add_common(c_ab);
    c_ab->callback([a_ab] {
        auto res = fintrec::cli::cmd_ablate(a_ab->resolve());
        std::printf("ablate: full auroc %.4f over %zu selections\n", res.full_auroc,
                    res.rows.size());
    });

    auto* c_bench = app.add_subcommand("bench", "hammer the scorer and report latency");
    auto a_bench = add_common(c_bench);
    c_bench->callback([a_bench] {
        auto res = fintrec::cli::cmd_bench(a_bench->resolve());
        std::printf("bench: %d requests, p50 %.2fms p99 %.2fms, %.0f rps\n", res.requests,
                    res.p50_ms, res.p99_ms, res.throughput_rps);
    });

    auto* c_score = app.add_subcommand("score", "rank one synthetic request and print the slate");
    auto a_score = add_common(c_score);
    c_score->callback([a_score] {
        auto res = fintrec::cli::cmd_score(a_score->resolve());
        std::printf("score: user %d, %zu candidates ranked in %.2fms%s\n", res.slate.user_id,
                    res.slate.candidates.size(), res.timings.total_ms(),
                    res.cold_start ? " (cold start)" : "");
        for (size_t i = 0; i < res.slate.candidates.size(); ++i) {
            const auto& c = res.slate.candidates[i];
            std::printf("  %2zu. item %3d  rs %.6f  pctr %.4f  pcvr %.4f\n", i + 1, c.item_id,
                        c.rs, c.pctr, c.pcvr);
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
