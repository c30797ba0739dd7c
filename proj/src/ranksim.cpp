// SPDX-License-Identifier: Apache-2.0
#include "fintrec/ranksim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fintrec::ranksim {

namespace {

void check_weights(const RankingWeights& w) {
    if (w.lambda_us < 0.0 || w.lambda_ctr < 0.0 || w.lambda_cvr < 0.0) {
        throw std::invalid_argument("ranking: negative weight");
    }
}

}  // namespace

double ranking_score(double pctr, double pcvr, double us, double value,
                     const RankingWeights& w) {
    check_weights(w);
    if (pctr < 0.0 || pctr > 1.0 || pcvr < 0.0 || pcvr > 1.0) {
        throw std::invalid_argument("ranking: probability outside [0,1]");
    }
    if (us < 0.0 || value < 0.0) {
        throw std::invalid_argument("ranking: negative urgency or value");
    }
    return w.lambda_us * us + w.lambda_ctr * pctr + w.lambda_cvr * pcvr * value;
}

RankedSlate rank_slate(int32_t user_id, int64_t ts_ms, std::vector<Candidate> candidates,
                       const RankingWeights& w) {
    for (auto& c : candidates) c.rs = ranking_score(c.pctr, c.pcvr, c.us, c.value, w);
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.rs != b.rs) return a.rs > b.rs;
        return a.item_id < b.item_id;
    });
    return RankedSlate{user_id, ts_ms, std::move(candidates)};
}

double recall_at_k(const std::vector<std::vector<int32_t>>& ranked,
                   const std::vector<int32_t>& truth, int k) {
    if (k < 1) throw std::invalid_argument("recall: k must be positive");
    if (ranked.size() != truth.size()) throw std::invalid_argument("recall: size mismatch");
    if (ranked.empty()) throw std::invalid_argument("recall: no cases");
    size_t hits = 0;
    for (size_t i = 0; i < ranked.size(); ++i) {
        const auto& list = ranked[i];
        if (static_cast<int>(list.size()) < k) {
            throw std::invalid_argument("recall: ranked list shorter than k");
        }
        for (int j = 0; j < k; ++j) {
            if (list[static_cast<size_t>(j)] == truth[i]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

double log_loss(const std::vector<double>& probs, const std::vector<float>& labels) {
    if (probs.size() != labels.size()) throw std::invalid_argument("log_loss: size mismatch");
    if (probs.empty()) throw std::invalid_argument("log_loss: empty input");
    double total = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], 1e-7, 1.0 - 1e-7);
        total += labels[i] > 0.5f ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(probs.size());
}

double auroc(const std::vector<double>& scores, const std::vector<float>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Mid-ranks over tie groups make tied pairs count one half.
    std::vector<double> rank(scores.size(), 0.0);
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }

    double pos_rank_sum = 0.0;
    size_t n_pos = 0;
    for (size_t t = 0; t < scores.size(); ++t) {
        if (labels[t] > 0.5f) {
            pos_rank_sum += rank[t];
            ++n_pos;
        }
    }
    const size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("auroc: needs both classes");
    }
    const double np = static_cast<double>(n_pos);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

namespace {

// Direct-method totals of one slate under one weight triple.
void accumulate_slate(const ScoredSlate& slate, const RankingWeights& w, int top_n,
                      double& clicks, double& pv) {
    RankedSlate ranked = rank_slate(-1, 0, slate.candidates, w);
    const int shown = std::min<int>(top_n, static_cast<int>(ranked.candidates.size()));
    for (int i = 0; i < shown; ++i) {
        const Candidate& c = ranked.candidates[static_cast<size_t>(i)];
        clicks += c.pctr;
        pv += c.pcvr * c.value;
    }
}

}  // namespace

SweepResult sweep_coefficients(const std::vector<ScoredSlate>& slates,
                               const std::vector<double>& us_grid,
                               const std::vector<double>& ctr_grid,
                               const std::vector<double>& cvr_grid, int top_n) {
    if (slates.empty()) throw std::invalid_argument("sweep: empty impression log");
    if (us_grid.empty() || ctr_grid.empty() || cvr_grid.empty()) {
        throw std::invalid_argument("sweep: empty weight grid");
    }
    if (top_n < 1) throw std::invalid_argument("sweep: top_n must be positive");
    SweepResult result;
    result.points.reserve(us_grid.size() * ctr_grid.size() * cvr_grid.size());
    for (double lu : us_grid) {
        for (double lc : ctr_grid) {
            for (double lv : cvr_grid) {
                SweepPoint point;
                point.weights = RankingWeights{lu, lc, lv};
                for (const auto& slate : slates) {
                    accumulate_slate(slate, point.weights, top_n, point.expected_clicks,
                                     point.expected_pv);
                }
                if (!std::isfinite(point.expected_clicks) || !std::isfinite(point.expected_pv)) {
                    throw std::runtime_error("sweep: non-finite totals");
                }
                result.points.push_back(point);
            }
        }
    }
    return result;
}

double estimate_pv_lift(const std::vector<ScoredSlate>& control,
                        const std::vector<ScoredSlate>& test, const RankingWeights& w,
                        int top_n) {
    if (control.empty() || test.empty()) throw std::invalid_argument("pv_lift: empty log");
    double control_clicks = 0.0, control_pv = 0.0;
    for (const auto& s : control) accumulate_slate(s, w, top_n, control_clicks, control_pv);
    double test_clicks = 0.0, test_pv = 0.0;
    for (const auto& s : test) accumulate_slate(s, w, top_n, test_clicks, test_pv);
    if (control_pv == 0.0) throw std::invalid_argument("pv_lift: control PV is zero");
    return (test_pv - control_pv) / control_pv * 100.0;
}

void write_sweep_csv(const std::string& path, const SweepResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("sweep: cannot write " + path);
    out << "lambda_us,lambda_ctr,lambda_cvr,expected_clicks,expected_pv\n";
    char line[256];
    for (const auto& p : result.points) {
        std::snprintf(line, sizeof(line), "%.6g,%.6g,%.6g,%.10g,%.10g\n", p.weights.lambda_us,
                      p.weights.lambda_ctr, p.weights.lambda_cvr, p.expected_clicks,
                      p.expected_pv);
        out << line;
    }
}

void write_sweep_svg(const std::string& path, const SweepResult& result) {
    if (result.points.empty()) throw std::invalid_argument("sweep: nothing to plot");
    const double width = 640.0, height = 480.0, margin = 56.0;
    double min_x = result.points[0].expected_clicks, max_x = min_x;
    double min_y = result.points[0].expected_pv, max_y = min_y;
    for (const auto& p : result.points) {
        min_x = std::min(min_x, p.expected_clicks);
        max_x = std::max(max_x, p.expected_clicks);
        min_y = std::min(min_y, p.expected_pv);
        max_y = std::max(max_y, p.expected_pv);
    }
    const double span_x = max_x > min_x ? max_x - min_x : 1.0;
    const double span_y = max_y > min_y ? max_y - min_y : 1.0;
    auto sx = [&](double v) { return margin + (v - min_x) / span_x * (width - 2 * margin); };
    auto sy = [&](double v) { return height - margin - (v - min_y) / span_y * (height - 2 * margin); };

    // Plot the efficient upper edge left to right, plus every grid point.
    std::vector<const SweepPoint*> sorted;
    sorted.reserve(result.points.size());
    for (const auto& p : result.points) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(), [](const SweepPoint* a, const SweepPoint* b) {
        if (a->expected_clicks != b->expected_clicks) {
            return a->expected_clicks < b->expected_clicks;
        }
        return a->expected_pv < b->expected_pv;
    });

    std::ofstream out(path);
    if (!out) throw std::runtime_error("sweep: cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
        << width - margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
        << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    out << "  <text x=\"" << width / 2 << "\" y=\"" << height - margin / 3
        << "\" text-anchor=\"middle\" font-size=\"13\">expected clicks</text>\n";
    out << "  <text x=\"" << margin / 3 << "\" y=\"" << height / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 " << margin / 3
        << " " << height / 2 << ")\">expected PV</text>\n";
    out << "  <polyline fill=\"none\" stroke=\"#2266cc\" stroke-width=\"1.5\" points=\"";
    for (const auto* p : sorted) {
        out << sx(p->expected_clicks) << "," << sy(p->expected_pv) << " ";
    }
    out << "\"/>\n";
    for (const auto* p : sorted) {
        out << "  <circle cx=\"" << sx(p->expected_clicks) << "\" cy=\"" << sy(p->expected_pv)
            << "\" r=\"2.5\" fill=\"#cc4422\"/>\n";
    }
    out << "</svg>\n";
}

void write_metric_report(const std::string& path,
                         const std::vector<std::pair<std::string, double>>& metrics) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("report: cannot write " + path);
    char line[160];
    std::vector<std::string> seen;
    for (const auto& [key, value] : metrics) {
        std::snprintf(line, sizeof(line), "%s: %.10g\n", key.c_str(), value);
        out << line;
        seen.push_back(key);
    }
    for (const char* guard : {"fraud_rate", "call_rate", "on_time_payment_rate"}) {
        if (std::find(seen.begin(), seen.end(), guard) == seen.end()) {
            out << guard << ": n/a\n";
        }
    }
    out << "# simulated totals rank alternatives; magnitudes are not guaranteed\n";
}

}  // namespace fintrec::ranksim
