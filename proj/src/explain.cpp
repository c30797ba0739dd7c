// SPDX-License-Identifier: Apache-2.0
#include "fintrec/explain.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "fintrec/pipeline.hpp"
#include "fintrec/ranksim.hpp"

namespace fintrec::explain {

namespace {

using model::FinTRecModel;
using model::ModelInput;

// Zero positions at padding, then normalize into a distribution; an all-zero
// relevance map falls back to uniform over the live positions with a flag.
VisitImportance finalize(std::vector<double> raw, const ModelInput& in,
                         ImportanceMethod method) {
    for (int i = 0; i < in.pad_len; ++i) raw[static_cast<size_t>(i)] = 0.0;
    double total = 0.0;
    for (int i = in.pad_len; i < in.len(); ++i) total += raw[static_cast<size_t>(i)];

    VisitImportance out;
    out.method = method;
    const int live = in.len() - in.pad_len;
    if (total <= 0.0) {
        out.uniform_fallback = true;
        std::fill(raw.begin(), raw.end(), 0.0);
        for (int i = in.pad_len; i < in.len(); ++i) {
            raw[static_cast<size_t>(i)] = 1.0 / live;
        }
    } else {
        for (int i = in.pad_len; i < in.len(); ++i) raw[static_cast<size_t>(i)] /= total;
    }
    out.score = std::move(raw);
    return out;
}

model::AttentionMask mask_for(const FinTRecModel& m, const ModelInput& in) {
    return m.config().head == model::HeadKind::pctr
               ? model::causal_time_mask(in.ts_ms, in.pad_len)
               : model::full_mask(in.len(), in.pad_len);
}

// Runs the traced forward pass and, for gradient-weighted relevance, builds
// the scalar target: conversion probability for the encoder head, the labeled
// clicked item's logit at the last labeled position for the decoder head.
Tensor traced_target(FinTRecModel& m, const ModelInput& in,
                     FinTRecModel::ForwardTrace& trace) {
    if (m.config().head == model::HeadKind::pcvr) {
        return m.pcvr_prob(in, nullptr, &trace);
    }
    if (in.label_pos.empty()) {
        throw std::invalid_argument(
            "explain: decoder relevance needs a labeled click position");
    }
    Tensor logits = m.pctr_logits(in, nullptr, &trace);
    const int pos = in.label_pos.back();
    const int item = in.label_item.back();
    return sum_all(slice_cols(select_row(logits, pos), item, item + 1));
}

void check_capture(const FinTRecModel& m, const FinTRecModel::ForwardTrace& trace) {
    if (m.config().n_layers < 1 || trace.attention.empty()) {
        throw std::invalid_argument("explain: model captures no attention matrices");
    }
}

}  // namespace

const char* to_string(ImportanceMethod method) {
    switch (method) {
        case ImportanceMethod::attention: return "attention";
        case ImportanceMethod::grad_sam: return "grad_sam";
        case ImportanceMethod::averaged: return "averaged";
    }
    throw std::logic_error("explain: unknown importance method");
}

const char* to_string(VisitSelection sel) {
    switch (sel) {
        case VisitSelection::most_important: return "most_important";
        case VisitSelection::second_most: return "second_most";
        case VisitSelection::first_two: return "first_two";
    }
    throw std::logic_error("explain: unknown visit selection");
}

VisitImportance attention_importance(FinTRecModel& m, const ModelInput& in) {
    FinTRecModel::ForwardTrace trace;
    if (m.config().head == model::HeadKind::pcvr) {
        m.pcvr_prob(in, nullptr, &trace);
    } else {
        m.pctr_logits(in, nullptr, &trace);
    }
    check_capture(m, trace);

    const model::AttentionMask mask = mask_for(m, in);
    const int len = in.len();
    std::vector<double> raw(static_cast<size_t>(len), 0.0);
    for (const Tensor& probs : trace.attention) {
        const auto& p = probs.data();
        for (int k = 0; k < len; ++k) {
            double sum = 0.0;
            int allowed = 0;
            for (int q = 0; q < len; ++q) {
                if (!mask.at(q, k)) continue;
                sum += p[static_cast<size_t>(q) * len + k];
                ++allowed;
            }
            if (allowed > 0) raw[static_cast<size_t>(k)] += sum / allowed;
        }
    }
    const double scale = 1.0 / static_cast<double>(trace.attention.size());
    for (auto& v : raw) v *= scale;
    return finalize(std::move(raw), in, ImportanceMethod::attention);
}

VisitImportance grad_sam_importance(FinTRecModel& m, const ModelInput& in) {
    FinTRecModel::ForwardTrace trace;
    Tensor target = traced_target(m, in, trace);
    check_capture(m, trace);
    forward_backward(target);

    const int len = in.len();
    std::vector<double> raw(static_cast<size_t>(len), 0.0);
    for (const Tensor& probs : trace.attention) {
        if (!probs.has_grad()) continue;  // target did not reach this matrix
        const auto& p = probs.data();
        const auto& g = probs.grad();
        for (int q = 0; q < len; ++q) {
            for (int k = 0; k < len; ++k) {
                const size_t at = static_cast<size_t>(q) * len + k;
                const float rectified = g[at] > 0.0f ? g[at] : 0.0f;
                raw[static_cast<size_t>(k)] += static_cast<double>(p[at]) * rectified;
            }
        }
    }
    const double scale = 1.0 / static_cast<double>(trace.attention.size());
    for (auto& v : raw) v *= scale;
    return finalize(std::move(raw), in, ImportanceMethod::grad_sam);
}

VisitImportance averaged_importance(const VisitImportance& a, const VisitImportance& b) {
    if (a.score.size() != b.score.size()) {
        throw std::invalid_argument("explain: cannot average importances of different lengths");
    }
    VisitImportance out;
    out.method = ImportanceMethod::averaged;
    out.uniform_fallback = a.uniform_fallback || b.uniform_fallback;
    out.score.resize(a.score.size());
    for (size_t i = 0; i < a.score.size(); ++i) {
        out.score[i] = 0.5 * (a.score[i] + b.score[i]);
    }
    return out;
}

std::vector<int> visit_ids(const ModelInput& in) {
    std::vector<int> ids(in.tokens.size(), -1);
    int visit = 0;
    bool open = false;  // saw content tokens of the current visit
    for (int i = in.pad_len; i < in.len(); ++i) {
        if (in.tokens[static_cast<size_t>(i)] == pipeline::TokenVocabulary::kSessionBreak) {
            if (open) {
                ++visit;
                open = false;
            }
            ids[static_cast<size_t>(i)] = visit;
        } else {
            ids[static_cast<size_t>(i)] = visit;
            open = true;
        }
    }
    return ids;
}

std::vector<double> visit_scores(const VisitImportance& imp, const std::vector<int>& ids) {
    if (imp.score.size() != ids.size()) {
        throw std::invalid_argument("explain: importance and visit ids must align");
    }
    int n = 0;
    for (int id : ids) n = std::max(n, id + 1);
    std::vector<double> out(static_cast<size_t>(n), 0.0);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= 0) out[static_cast<size_t>(ids[i])] += imp.score[i];
    }
    return out;
}

ModelInput truncate_to_visits(const ModelInput& in, const VisitImportance& imp,
                              VisitSelection sel, model::HeadKind head) {
    if (in.len() <= in.pad_len) {
        throw std::invalid_argument("explain: cannot truncate an all-padding input");
    }
    const std::vector<int> ids = visit_ids(in);
    const std::vector<double> scores = visit_scores(imp, ids);
    const int n_visits = static_cast<int>(scores.size());

    const int wanted = sel == VisitSelection::second_most || sel == VisitSelection::first_two
                           ? 2
                           : 1;
    if (n_visits < wanted) return in;  // too short: keep the full sequence

    std::vector<int> order(static_cast<size_t>(n_visits));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });

    std::set<int> keep;
    switch (sel) {
        case VisitSelection::most_important: keep.insert(order[0]); break;
        case VisitSelection::second_most: keep.insert(order[1]); break;
        case VisitSelection::first_two:
            keep.insert(order[0]);
            keep.insert(order[1]);
            break;
    }
    keep.insert(ids[static_cast<size_t>(in.len() - 1)]);  // the endpoint visit stays

    std::vector<int> kept;
    for (int i = in.pad_len; i < in.len(); ++i) {
        if (keep.count(ids[static_cast<size_t>(i)]) != 0) kept.push_back(i);
    }

    ModelInput out;
    out.fs = in.fs;
    out.fd = in.fd;
    out.cvr_label = in.cvr_label;
    out.endpoint_item = in.endpoint_item;
    out.product_id = in.product_id;
    const int fm_dim = head == model::HeadKind::pctr && in.len() > 0
                           ? static_cast<int>(in.fm.size()) / in.len()
                           : 0;
    if (head == model::HeadKind::pcvr) out.fm = in.fm;
    std::vector<int> new_pos(in.tokens.size(), -1);
    for (int i : kept) {
        new_pos[static_cast<size_t>(i)] = static_cast<int>(out.tokens.size());
        out.tokens.push_back(in.tokens[static_cast<size_t>(i)]);
        out.ts_ms.push_back(in.ts_ms[static_cast<size_t>(i)]);
        out.dow.push_back(in.dow[static_cast<size_t>(i)]);
        out.wom.push_back(in.wom[static_cast<size_t>(i)]);
        out.hod.push_back(in.hod[static_cast<size_t>(i)]);
        out.moy.push_back(in.moy[static_cast<size_t>(i)]);
        out.delta.push_back(in.delta[static_cast<size_t>(i)]);
        if (fm_dim > 0) {
            const auto begin = in.fm.begin() + static_cast<long>(i) * fm_dim;
            out.fm.insert(out.fm.end(), begin, begin + fm_dim);
        }
    }
    for (size_t li = 0; li < in.label_pos.size(); ++li) {
        const int mapped = new_pos[static_cast<size_t>(in.label_pos[li])];
        if (mapped < 0) continue;
        out.label_pos.push_back(mapped);
        out.label_item.push_back(in.label_item[li]);
    }
    return out;
}

AblationReport visit_ablation(const model::TransformerConfig& cfg,
                              const std::vector<ModelInput>& train_inputs,
                              const std::vector<ModelInput>& val_inputs,
                              const std::vector<VisitImportance>& train_importance,
                              const std::vector<VisitImportance>& val_importance,
                              const train::TrainConfig& tc) {
    if (cfg.head != model::HeadKind::pcvr) {
        throw std::invalid_argument("explain: the ablation retrains the conversion model");
    }
    if (train_importance.size() != train_inputs.size() ||
        val_importance.size() != val_inputs.size()) {
        throw std::invalid_argument("explain: importance must align one-to-one with inputs");
    }

    auto val_auroc = [](FinTRecModel& m, const std::vector<ModelInput>& val) {
        std::vector<double> scores;
        std::vector<float> labels;
        scores.reserve(val.size());
        labels.reserve(val.size());
        for (const auto& in : val) {
            scores.push_back(static_cast<double>(m.pcvr_prob(in).data()[0]));
            labels.push_back(in.cvr_label);
        }
        return ranksim::auroc(scores, labels);
    };

    AblationReport rep;
    {
        FinTRecModel full = FinTRecModel::init(cfg, tc.seed);
        train::fit_pcvr(full, train_inputs, tc);
        rep.full_auroc = val_auroc(full, val_inputs);
    }
    for (VisitSelection sel : {VisitSelection::most_important, VisitSelection::second_most,
                               VisitSelection::first_two}) {
        std::vector<ModelInput> tr, va;
        tr.reserve(train_inputs.size());
        va.reserve(val_inputs.size());
        for (size_t i = 0; i < train_inputs.size(); ++i) {
            tr.push_back(truncate_to_visits(train_inputs[i], train_importance[i], sel));
        }
        for (size_t i = 0; i < val_inputs.size(); ++i) {
            va.push_back(truncate_to_visits(val_inputs[i], val_importance[i], sel));
        }
        FinTRecModel m = FinTRecModel::init(cfg, tc.seed);
        train::fit_pcvr(m, tr, tc);
        AblationRow row;
        row.selection = sel;
        row.auroc = val_auroc(m, va);
        row.relative = rep.full_auroc > 0.0 ? row.auroc / rep.full_auroc : 0.0;
        rep.rows.push_back(row);
    }
    return rep;
}

std::vector<ImportanceRow> importance_rows(int32_t user_id, int64_t endpoint_ts,
                                           const ModelInput& in, const VisitImportance& imp) {
    const std::vector<int> ids = visit_ids(in);
    const std::vector<double> scores = visit_scores(imp, ids);
    const int last = static_cast<int>(scores.size()) - 1;
    std::vector<ImportanceRow> rows;
    rows.reserve(scores.size());
    for (int v = last; v >= 0; --v) {
        ImportanceRow row;
        row.user_id = user_id;
        row.endpoint_ts = endpoint_ts;
        row.session_rank = last - v;
        row.score = scores[static_cast<size_t>(v)];
        row.method = imp.method;
        rows.push_back(row);
    }
    return rows;
}

void write_importance_csv(const std::string& path, const std::vector<ImportanceRow>& rows) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) {
        throw std::runtime_error("explain: cannot open " + path + " for writing");
    }
    std::fputs("user_id,endpoint_ts,session_rank,score,method\n", f);
    for (const auto& r : rows) {
        std::fprintf(f, "%d,%lld,%d,%.9g,%s\n", r.user_id, static_cast<long long>(r.endpoint_ts),
                     r.session_rank, r.score, to_string(r.method));
    }
    std::fclose(f);
}

}  // namespace fintrec::explain
