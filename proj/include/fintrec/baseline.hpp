// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fintrec/events.hpp"
#include "fintrec/pca.hpp"
#include "fintrec/pipeline.hpp"

namespace fintrec::baseline {

// A labeled impression to snapshot features at.
struct Snapshot {
    int32_t user_id = 0;
    int64_t ts_ms = 0;
    int32_t item_id = -1;
    float label = 0.0f;
};

// One engineered, time-aligned row: trailing 7/14/30-day login counts, page
// visits and conversion rates, the static context vector, and the
// PCA-reduced daily embedding. Trailing windows cover [ts - w, ts): history
// strictly before the impression being scored, never after it.
struct FeatureRow {
    int32_t user_id = 0;
    int64_t ts_ms = 0;
    int32_t item_id = -1;
    float label = 0.0f;
    std::vector<float> x;
};

std::vector<std::string> feature_names(const pipeline::ContextTransformer& ctx, int pca_dim);

std::vector<FeatureRow> engineer_features(const pipeline::SessionizedLog& log,
                                          const std::vector<UserProfile>& profiles,
                                          const pipeline::ContextTransformer& ctx,
                                          const PcaModel& pca,
                                          const std::vector<Snapshot>& at);

// ---- random forest ----

struct RfConfig {
    int n_trees = 100;
    int max_depth = 8;
    int min_leaf = 2;
    // Candidate features per split; <= 0 picks floor(sqrt(n_features)).
    int features_per_split = 0;
    bool bootstrap = true;
    uint64_t seed = 1;
};

// feature < 0 marks a leaf carrying the class-1 probability.
struct SplitNode {
    int feature = -1;
    float threshold = 0.0f;
    int left = -1;
    int right = -1;
    float prob = 0.0f;
};

struct Tree {
    std::vector<SplitNode> nodes;  // node 0 is the root
};

struct ForestModel {
    RfConfig cfg;
    int n_features = 0;
    std::vector<Tree> trees;
};

// Greedy Gini-impurity trees on bootstrap samples with per-split feature
// subsampling; labels come from the rows. Throws when the rows are empty,
// ragged, or carry a single class.
ForestModel train_rf(const std::vector<FeatureRow>& rows, const RfConfig& cfg);

// Mean of the leaf probabilities across trees.
double predict_rf(const ForestModel& m, const std::vector<float>& x);

// Scored-log export shared with the ranking tooling for head-to-head
// comparisons: user_id,ts,item_id,label,score per row.
void write_scored_csv(const std::string& path, const std::vector<FeatureRow>& rows,
                      const std::vector<double>& scores);

}  // namespace fintrec::baseline
