// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "fintrec/adapt.hpp"
#include "fintrec/datagen.hpp"
#include "fintrec/explain.hpp"
#include "fintrec/model.hpp"
#include "fintrec/pca.hpp"
#include "fintrec/pipeline.hpp"
#include "fintrec/ranksim.hpp"
#include "fintrec/sequence.hpp"
#include "fintrec/train.hpp"

namespace fintrec::cli {

// ---- run configuration ----

// Every knob of the experiment surface, grouped the way the config file is:
// a flat INI-style text with sections [data], [model], [train], [finetune],
// [rank], [sweep], [explain], [serve], plus the top-level `seed`. Unknown
// sections or keys are rejected so typos cannot silently fall back to
// defaults. The output directory is deliberately not part of the dump (or
// the hash): two runs of the same experiment in different directories must
// produce byte-identical artifacts.
struct RunConfig {
    uint64_t seed = 1;
    std::string out = "runs/default";

    // [data]: world generation plus the preprocessing knobs
    datagen::WorldConfig world;
    int session_gap_minutes = 30;
    pipeline::SplitSpec split;
    double negative_ratio = 4.0;
    int pca_dim = 8;  // embedding reduction for engineered-feature baselines

    // [model]
    model::TransformerConfig net;  // vocab/item/context widths filled from data

    // [train]
    train::TrainConfig trainer;

    // [finetune]
    struct Finetune {
        adapt::FinetuneMode mode = adapt::FinetuneMode::lora;
        adapt::LoraSpec lora;
        int16_t product = 2;  // held-out product id
        train::TrainConfig trainer;
    } ft;

    // [rank]
    ranksim::RankingWeights weights;
    int slate_size = 5;

    // [sweep]
    struct Sweep {
        int grid = 5;            // points per lambda axis
        double lambda_max = 1.0;
        int top_n = 1;           // shown items per slate
    } sweep;

    // [explain]
    struct Explain {
        explain::ImportanceMethod method = explain::ImportanceMethod::grad_sam;
        int sequences = 50;  // validation sequences to attribute
    } ex;

    // [serve]
    struct Serve {
        int duration_ms = 2000;
        int threads = 4;
        int candidates = 10;   // eligible items per synthetic request
        int max_requests = 0;  // 0 = bounded by duration only
        int32_t user = -1;     // score command target; -1 picks the first user
    } serve;

    // Propagates the top-level seed into the generator and trainer streams
    // and the world's context widths into the network config. Idempotent;
    // every command applies it on entry.
    void finalize();
};

// Parse / serialize / identify configurations. parse_config accepts the
// file syntax ('#' and ';' comments, [section] headers, key = value);
// dump_config emits every knob in canonical order with defaults resolved,
// and config_hash fingerprints that dump.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);
// One `section.key=value` assignment (top-level keys use the bare name).
void apply_override(RunConfig& cfg, const std::string& assignment);
std::string dump_config(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);

// ---- artifact layout ----

// File names each command reads and writes beneath the output directory.
struct Paths {
    std::string out;

    std::string events() const { return out + "/events.ndjson"; }
    std::string profiles() const { return out + "/profiles.ndjson"; }
    std::string catalog() const { return out + "/catalog.ndjson"; }
    std::string planted() const { return out + "/planted.ndjson"; }
    std::string dataset() const { return out + "/dataset.bin"; }
    std::string pctr_ckpt() const { return out + "/pctr.ckpt"; }
    std::string pcvr_ckpt() const { return out + "/pcvr.ckpt"; }
    std::string adapter(adapt::FinetuneMode mode) const;
    std::string effective_config() const { return out + "/effective_config.ini"; }
};

// Throws a runtime_error naming the command that produces `path` when the
// file is absent.
void require_artifact(const std::string& path, const std::string& producer);

// ---- preprocessed dataset ----

// Everything training and evaluation need, decoupled from the raw event
// log: vocabulary, fitted feature transforms, user profiles (for the daily
// embeddings), and the assembled click / conversion sequences of all three
// splits. Round-trips bit-exactly through dataset.bin.
struct Dataset {
    pipeline::TokenVocabulary vocab;
    pipeline::ContextTransformer ctx;
    PcaModel pca;
    pipeline::SplitBounds bounds;
    int n_items = 0;
    uint64_t config_hash = 0;
    std::vector<UserProfile> profiles;
    std::vector<sequence::UserSequence> ctr;  // click sequences, split field set
    std::vector<sequence::UserSequence> cvr;  // conversion sequences
};

Dataset build_dataset(const datagen::World& world, const RunConfig& cfg);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// Model-ready inputs for one head and split (pipeline::kTrain/kVal/kTest).
std::vector<model::ModelInput> dataset_inputs(const Dataset& ds, model::HeadKind head,
                                              int split, const model::TransformerConfig& cfg);

// Network config with the data-dependent widths resolved from the dataset.
model::TransformerConfig resolve_net(const RunConfig& cfg, const Dataset& ds,
                                     model::HeadKind head);

// ---- checkpoint helpers ----

// Full-model snapshot whose manifest records the network config and the run
// config hash, so evaluation can rebuild the exact architecture.
void save_model(const std::string& path, const model::FinTRecModel& m, uint64_t cfg_hash);
model::FinTRecModel load_model(const std::string& path);

// ---- evaluation helpers ----

struct PctrEval {
    double recall1 = 0.0;
    double recall5 = 0.0;
    double recall10 = 0.0;
    int labels = 0;
    std::array<double, 10> at{};  // recall@k for k = 1..10, saturated at n_items
};

// Recall@{1,5,10} over every labeled position; ties rank by ascending item.
PctrEval eval_pctr(const model::FinTRecModel& m, const std::vector<model::ModelInput>& inputs);

struct PcvrEval {
    double logloss = 0.0;
    double auroc = 0.0;  // NaN when a class is absent
    std::vector<double> probs;
    std::vector<float> labels;
    std::vector<int32_t> items;  // endpoint item per example
};

PcvrEval eval_pcvr(const model::FinTRecModel& m, const std::vector<model::ModelInput>& inputs);

// ---- leave-product-out assembly ----

// Pre-training and adaptation inputs for one held-out product: the base
// vocabulary never saw the product (its tuples surface as <unk>), the
// returned vocabulary carries the product's tuples as appended extension
// ids, and adaptation labels are remapped to dense per-product indices.
struct LpoData {
    pipeline::TokenVocabulary vocab;  // base + appended product extension
    int base_vocab_size = 0;
    int new_tokens = 0;
    int new_item_count = 0;                 // items of the held-out product
    std::vector<int32_t> product_items;     // ascending; index = local label
    std::vector<model::ModelInput> pre_train, pre_val;
    std::vector<model::ModelInput> adapt_train, adapt_val;
};

LpoData build_lpo(const datagen::World& world, const RunConfig& cfg);

// ---- scoring harness ----

// Nightly-batch view of one user: the token tail since history began
// (capped at the model window), per-token daily embeddings, the static
// vector, and the latest session's dynamic aggregate. Everything the scorer
// may touch at request time lives here; raw events do not.
struct UserFeatures {
    std::vector<int> tokens;
    std::vector<int64_t> ts_ms;
    std::vector<uint16_t> day;
    std::vector<float> fm_rows;  // [len * fm_dim] aligned with tokens
    std::vector<float> fm_day;   // [fm_dim] at the batch day
    std::vector<float> fs;
    std::array<float, pipeline::kDynamicDim> fd{};
};

struct FeatureStore {
    int64_t built_ms = 0;  // batch time; history after it is invisible
    int fm_dim = 0;
    std::unordered_map<int32_t, UserFeatures> users;
};

FeatureStore build_feature_store(const pipeline::SessionizedLog& log,
                                 const std::vector<UserProfile>& profiles,
                                 const pipeline::TokenVocabulary& vocab,
                                 const pipeline::ContextTransformer& ctx, int max_len,
                                 int64_t at_ms);

struct ScoreRequest {
    int32_t user_id = -1;
    int64_t ts_ms = 0;
    std::vector<int32_t> candidates;  // eligible item ids
};

struct StageTimings {
    double feature_ms = 0.0;  // store lookup + input assembly
    double forward_ms = 0.0;  // both heads
    double rank_ms = 0.0;     // blend + sort

    double total_ms() const { return feature_ms + forward_ms + rank_ms; }
};

struct ScoreResponse {
    ranksim::RankedSlate slate;
    StageTimings timings;
    bool cold_start = false;  // user absent from the store
};

// In-process scorer. Construction captures the models, the catalog
// constants (urgency, dollar value), and the precomputed feature store; a
// score call sees nothing else, which is what enforces the no-recomputation
// contract at the interface. score() is const and safe to call from
// multiple threads.
class Scorer {
  public:
    Scorer(model::FinTRecModel pctr, model::FinTRecModel pcvr, Catalog catalog,
           ranksim::RankingWeights weights, FeatureStore store);

    // Unknown users score against a zero-context sequence (one session
    // marker at the request time); candidate ids outside the catalog throw.
    ScoreResponse score(const ScoreRequest& req) const;

    const Catalog& catalog() const { return catalog_; }
    std::vector<int32_t> known_users() const;  // ascending

  private:
    model::FinTRecModel pctr_;
    model::FinTRecModel pcvr_;
    Catalog catalog_;
    ranksim::RankingWeights weights_;
    FeatureStore store_;
};

// ---- latency benchmark ----

struct BenchConfig {
    int duration_ms = 2000;
    int threads = 4;
    int candidates = 10;
    int max_requests = 0;  // 0 = unbounded within the duration
    uint64_t seed = 1;
};

struct BenchReport {
    int requests = 0;
    double wall_ms = 0.0;
    double throughput_rps = 0.0;
    double p50_ms = 0.0;
    double p90_ms = 0.0;
    double p99_ms = 0.0;
    StageTimings stage_mean;

    bool empty() const { return requests == 0; }
};

// Hammers the scorer from `threads` workers with synthetic requests (random
// known user, random candidate set) until the duration or request cap is
// reached. A zero duration yields an empty report.
BenchReport run_bench(const Scorer& scorer, const std::vector<int32_t>& user_pool,
                      const BenchConfig& cfg);

void write_bench_report(const std::string& path, const BenchReport& report,
                        uint64_t cfg_hash);

// ---- commands ----

struct GenerateResult {
    size_t events = 0;
    int users = 0;
    int items = 0;
    uint64_t hash = 0;
};

struct PreprocessResult {
    int vocab_size = 0;
    std::array<int, 3> ctr_sequences{};  // per split
    std::array<int, 3> cvr_sequences{};
    uint64_t hash = 0;
};

struct TrainResult {
    float pctr_loss = 0.0f;
    float pcvr_loss = 0.0f;
    PctrEval val_pctr;
    double val_logloss = 0.0;
    uint64_t pctr_hash = 0;  // parameter hashes of the saved checkpoints
    uint64_t pcvr_hash = 0;
};

struct EvaluateResult {
    PctrEval pctr_val;
    double logloss_val = 0.0;
    double auroc_val = 0.0;
    double ece_raw = 0.0;
    double ece_calibrated = 0.0;
    bool has_test = false;
    PctrEval pctr_test;
    double logloss_test = 0.0;
};

struct ExplainResult {
    int sequences = 0;
    int fallbacks = 0;  // rows that degenerated to the uniform distribution
};

// Each command resolves the config, writes the effective-config dump plus
// its artifacts under cfg.out, and returns its headline numbers. Missing
// prerequisites raise a runtime_error naming the command to run first.
GenerateResult cmd_generate(RunConfig cfg);
PreprocessResult cmd_preprocess(RunConfig cfg);
TrainResult cmd_train(RunConfig cfg);
adapt::FinetuneReport cmd_finetune(RunConfig cfg);
EvaluateResult cmd_evaluate(RunConfig cfg);
ranksim::SweepResult cmd_sweep(RunConfig cfg);
ExplainResult cmd_explain(RunConfig cfg);
explain::AblationReport cmd_ablate(RunConfig cfg);
BenchReport cmd_bench(RunConfig cfg);
ScoreResponse cmd_score(RunConfig cfg);

}  // namespace fintrec::cli
