// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fintrec::ranksim {

// Blend weights for the final ranking score; all three must be non-negative.
struct RankingWeights {
    double lambda_us = 0.0;
    double lambda_ctr = 1.0;
    double lambda_cvr = 0.0;
};

// score = lambda_us * us + lambda_ctr * pctr + lambda_cvr * pcvr * value.
// Probabilities live in [0, 1]; urgency and dollar value are non-negative.
double ranking_score(double pctr, double pcvr, double us, double value,
                     const RankingWeights& w);

struct Candidate {
    int32_t item_id = -1;
    double pctr = 0.0;
    double pcvr = 0.0;
    double us = 0.0;     // stakeholder urgency, unnormalized
    double value = 0.0;  // dollars per conversion
    double rs = 0.0;     // filled by rank_slate
};

// Candidates sorted by score descending; ties break on ascending item id so
// reruns are reproducible.
struct RankedSlate {
    int32_t user_id = -1;
    int64_t ts_ms = 0;
    std::vector<Candidate> candidates;
};

RankedSlate rank_slate(int32_t user_id, int64_t ts_ms, std::vector<Candidate> candidates,
                       const RankingWeights& w);

// Fraction of cases whose true next item appears in the first k entries of
// its ranked list. Every list must carry at least k items.
double recall_at_k(const std::vector<std::vector<int32_t>>& ranked,
                   const std::vector<int32_t>& truth, int k);

// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
double log_loss(const std::vector<double>& probs, const std::vector<float>& labels);

// Probability that a random positive outscores a random negative; ties count
// one half. Throws when either class is absent.
double auroc(const std::vector<double>& scores, const std::vector<float>& labels);

// One impression opportunity: the eligible candidates with model scores.
struct ScoredSlate {
    std::vector<Candidate> candidates;
};

struct SweepPoint {
    RankingWeights weights;
    double expected_clicks = 0.0;
    double expected_pv = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
};

// Re-ranks every slate under each weight triple of the grid and accumulates
// the direct-method totals over the shown (top_n) items: expected clicks sum
// the shown click probabilities, expected PV sums pcvr * value.
SweepResult sweep_coefficients(const std::vector<ScoredSlate>& slates,
                               const std::vector<double>& us_grid,
                               const std::vector<double>& ctr_grid,
                               const std::vector<double>& cvr_grid, int top_n = 1);

// Relative PV change (in percent) of the test scoring over the control
// scoring on the same impression log, both ranked with the same weights.
// Throws when the control PV is zero.
double estimate_pv_lift(const std::vector<ScoredSlate>& control,
                        const std::vector<ScoredSlate>& test, const RankingWeights& w,
                        int top_n = 1);

// CSV with one row per grid point: lambda_us, lambda_ctr, lambda_cvr,
// expected_clicks, expected_pv.
void write_sweep_csv(const std::string& path, const SweepResult& result);

// Line chart of the clicks/PV tradeoff across the grid.
void write_sweep_svg(const std::string& path, const SweepResult& result);

// Ordered key/value metric summary. Guardrail slots (fraud_rate, call_rate,
// on_time_payment_rate) are always present; absent measurements print "n/a".
// The trailing note records that simulated totals rank options but do not
// promise magnitudes.
void write_metric_report(const std::string& path,
                         const std::vector<std::pair<std::string, double>>& metrics);

}  // namespace fintrec::ranksim
