// SPDX-License-Identifier: Apache-2.0
#include "fintrec/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "fintrec/rng.hpp"

namespace fintrec::baseline {

namespace {

constexpr int64_t kDayMs = 86400000;
constexpr int kWindows[3] = {7, 14, 30};

}  // namespace

std::vector<std::string> feature_names(const pipeline::ContextTransformer& ctx, int pca_dim) {
    std::vector<std::string> names;
    for (int w : kWindows) names.push_back("login_" + std::to_string(w) + "d");
    for (int w : kWindows) names.push_back("page_visits_" + std::to_string(w) + "d");
    for (int w : kWindows) names.push_back("conv_rate_" + std::to_string(w) + "d");
    for (int i = 0; i < ctx.static_dim(); ++i) names.push_back("fs_" + std::to_string(i));
    for (int i = 0; i < pca_dim; ++i) names.push_back("fm_pc_" + std::to_string(i));
    return names;
}

std::vector<FeatureRow> engineer_features(const pipeline::SessionizedLog& log,
                                          const std::vector<UserProfile>& profiles,
                                          const pipeline::ContextTransformer& ctx,
                                          const PcaModel& pca,
                                          const std::vector<Snapshot>& at) {
    std::unordered_map<int32_t, const UserProfile*> by_id;
    by_id.reserve(profiles.size());
    for (const auto& p : profiles) by_id.emplace(p.user_id, &p);

    std::vector<FeatureRow> rows;
    rows.reserve(at.size());
    for (const Snapshot& s : at) {
        auto pit = by_id.find(s.user_id);
        if (pit == by_id.end()) {
            throw std::invalid_argument("baseline: no profile for user " +
                                        std::to_string(s.user_id));
        }
        const auto [begin, end] = log.span(s.user_id);

        // One pass over the last 30 days strictly before the impression.
        int logins[3] = {0, 0, 0};
        int visits[3] = {0, 0, 0};
        int conversions[3] = {0, 0, 0};
        int impressions[3] = {0, 0, 0};
        const int64_t floor_ts = s.ts_ms - 30 * kDayMs;
        size_t i = begin;
        while (i < end && log.events[i].ts < floor_ts) ++i;
        for (; i < end && log.events[i].ts < s.ts_ms; ++i) {
            const Event& e = log.events[i];
            for (int w = 0; w < 3; ++w) {
                if (e.ts < s.ts_ms - kWindows[w] * kDayMs) continue;
                switch (e.kind) {
                    case EventKind::login: ++logins[w]; break;
                    case EventKind::impression:
                        ++visits[w];
                        ++impressions[w];
                        break;
                    case EventKind::conversion: ++conversions[w]; break;
                    default: break;
                }
            }
        }

        FeatureRow row;
        row.user_id = s.user_id;
        row.ts_ms = s.ts_ms;
        row.item_id = s.item_id;
        row.label = s.label;
        for (int w = 0; w < 3; ++w) row.x.push_back(static_cast<float>(logins[w]));
        for (int w = 0; w < 3; ++w) row.x.push_back(static_cast<float>(visits[w]));
        for (int w = 0; w < 3; ++w) {
            row.x.push_back(impressions[w] > 0
                                ? static_cast<float>(conversions[w]) / impressions[w]
                                : 0.0f);
        }
        const std::vector<float> fs = ctx.user_static(*pit->second);
        row.x.insert(row.x.end(), fs.begin(), fs.end());
        const std::vector<float> fm = ctx.fm(*pit->second, s.ts_ms);
        const std::vector<float> pcs = pca.transform(fm);
        row.x.insert(row.x.end(), pcs.begin(), pcs.end());
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

struct TreeBuilder {
    const std::vector<FeatureRow>& rows;
    const RfConfig& cfg;
    int n_features;
    int k_candidates;
    Rng rng;
    Tree tree;

    // Gini impurity of a (size, positives) split side times its size.
    static double weighted_gini(int n, int pos) {
        if (n == 0) return 0.0;
        const double p = static_cast<double>(pos) / n;
        return n * 2.0 * p * (1.0 - p);
    }

    int build(std::vector<int>& idx, int lo, int hi, int depth) {
        const int n = hi - lo;
        int pos = 0;
        for (int i = lo; i < hi; ++i) pos += rows[static_cast<size_t>(idx[i])].label > 0.5f;

        const int node_at = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[node_at].prob = static_cast<float>(pos) / n;
        if (depth >= cfg.max_depth || pos == 0 || pos == n || n < 2 * cfg.min_leaf) {
            return node_at;  // leaf
        }

        // Per-split candidate features: partial Fisher-Yates over all of them.
        std::vector<int> feats(static_cast<size_t>(n_features));
        std::iota(feats.begin(), feats.end(), 0);
        for (int j = 0; j < k_candidates; ++j) {
            const int pick = j + static_cast<int>(rng.below(
                                     static_cast<uint64_t>(n_features - j)));
            std::swap(feats[static_cast<size_t>(j)], feats[static_cast<size_t>(pick)]);
        }

        int best_feature = -1;
        float best_threshold = 0.0f;
        double best_score = weighted_gini(n, pos);  // must strictly improve
        std::vector<int> order(idx.begin() + lo, idx.begin() + hi);
        for (int j = 0; j < k_candidates; ++j) {
            const int f = feats[static_cast<size_t>(j)];
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return rows[static_cast<size_t>(a)].x[static_cast<size_t>(f)] <
                       rows[static_cast<size_t>(b)].x[static_cast<size_t>(f)];
            });
            int left_pos = 0;
            for (int i = 0; i < n - 1; ++i) {
                left_pos += rows[static_cast<size_t>(order[static_cast<size_t>(i)])].label > 0.5f;
                const float lv = rows[static_cast<size_t>(order[static_cast<size_t>(i)])]
                                     .x[static_cast<size_t>(f)];
                const float rv = rows[static_cast<size_t>(order[static_cast<size_t>(i + 1)])]
                                     .x[static_cast<size_t>(f)];
                if (lv == rv) continue;  // no boundary between equal values
                const int nl = i + 1;
                if (nl < cfg.min_leaf || n - nl < cfg.min_leaf) continue;
                const double score =
                    weighted_gini(nl, left_pos) + weighted_gini(n - nl, pos - left_pos);
                if (score < best_score - 1e-12) {
                    best_score = score;
                    best_feature = f;
                    best_threshold = lv + (rv - lv) * 0.5f;
                }
            }
        }
        if (best_feature < 0) return node_at;  // nothing improves: stay a leaf

        const auto mid = std::partition(idx.begin() + lo, idx.begin() + hi, [&](int a) {
            return rows[static_cast<size_t>(a)].x[static_cast<size_t>(best_feature)] <=
                   best_threshold;
        });
        const int cut = static_cast<int>(mid - idx.begin());
        tree.nodes[node_at].feature = best_feature;
        tree.nodes[node_at].threshold = best_threshold;
        const int left = build(idx, lo, cut, depth + 1);
        tree.nodes[node_at].left = left;
        const int right = build(idx, cut, hi, depth + 1);
        tree.nodes[node_at].right = right;
        return node_at;
    }
};

}  // namespace

ForestModel train_rf(const std::vector<FeatureRow>& rows, const RfConfig& cfg) {
    if (rows.empty()) throw std::invalid_argument("baseline: no training rows");
    if (cfg.n_trees < 1 || cfg.max_depth < 1 || cfg.min_leaf < 1) {
        throw std::invalid_argument("baseline: forest config must be positive");
    }
    const int d = static_cast<int>(rows.front().x.size());
    int pos = 0;
    for (const auto& r : rows) {
        if (static_cast<int>(r.x.size()) != d) {
            throw std::invalid_argument("baseline: ragged feature rows");
        }
        pos += r.label > 0.5f;
    }
    if (pos == 0 || pos == static_cast<int>(rows.size())) {
        throw std::invalid_argument("baseline: training rows carry a single class");
    }

    ForestModel m;
    m.cfg = cfg;
    m.n_features = d;
    const int k = cfg.features_per_split > 0
                      ? std::min(cfg.features_per_split, d)
                      : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(d))));
    const int n = static_cast<int>(rows.size());
    for (int t = 0; t < cfg.n_trees; ++t) {
        Rng rng = Rng(cfg.seed).fork(0xf0 + static_cast<uint64_t>(t));
        std::vector<int> idx(static_cast<size_t>(n));
        if (cfg.bootstrap) {
            for (auto& v : idx) v = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
        } else {
            std::iota(idx.begin(), idx.end(), 0);
        }
        TreeBuilder builder{rows, cfg, d, k, std::move(rng), Tree{}};
        builder.build(idx, 0, n, 0);
        m.trees.push_back(std::move(builder.tree));
    }
    return m;
}

double predict_rf(const ForestModel& m, const std::vector<float>& x) {
    if (static_cast<int>(x.size()) != m.n_features) {
        throw std::invalid_argument("baseline: feature width mismatch");
    }
    double sum = 0.0;
    for (const Tree& t : m.trees) {
        int at = 0;
        while (t.nodes[static_cast<size_t>(at)].feature >= 0) {
            const SplitNode& nd = t.nodes[static_cast<size_t>(at)];
            at = x[static_cast<size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        sum += t.nodes[static_cast<size_t>(at)].prob;
    }
    return sum / static_cast<double>(m.trees.size());
}

void write_scored_csv(const std::string& path, const std::vector<FeatureRow>& rows,
                      const std::vector<double>& scores) {
    if (rows.size() != scores.size()) {
        throw std::invalid_argument("baseline: rows and scores must align");
    }
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) {
        throw std::runtime_error("baseline: cannot open " + path + " for writing");
    }
    std::fputs("user_id,ts,item_id,label,score\n", f);
    for (size_t i = 0; i < rows.size(); ++i) {
        std::fprintf(f, "%d,%lld,%d,%g,%.9g\n", rows[i].user_id,
                     static_cast<long long>(rows[i].ts_ms), rows[i].item_id,
                     static_cast<double>(rows[i].label), scores[i]);
    }
    std::fclose(f);
}

}  // namespace fintrec::baseline
