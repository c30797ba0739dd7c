// SPDX-License-Identifier: Apache-2.0
#include "fintrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fintrec/events.hpp"

namespace fintrec::model {

void TransformerConfig::validate() const {
    if (n_layers < 0) throw std::invalid_argument("config: n_layers must be >= 0");
    if (d_embed < 1 || d_hidden < 1 || head_hidden < 1) {
        throw std::invalid_argument("config: dimensions must be positive");
    }
    if (n_heads < 1 || d_hidden % n_heads != 0) {
        throw std::invalid_argument("config: d_hidden must divide by n_heads");
    }
    if (ffn_mult < 1) throw std::invalid_argument("config: ffn_mult must be positive");
    if (dropout < 0.0f || dropout >= 1.0f) throw std::invalid_argument("config: dropout in [0,1)");
    if (vocab_size < pipeline::TokenVocabulary::kFirstTuple) {
        throw std::invalid_argument("config: vocabulary too small");
    }
    if (head == HeadKind::pctr && n_items < 1) {
        throw std::invalid_argument("config: click head needs a positive item vocabulary");
    }
    if (max_len < 1) throw std::invalid_argument("config: max_len must be positive");
    if (fm_dim < 0 || static_dim < 0) throw std::invalid_argument("config: negative feature dim");
}

AttentionMask causal_time_mask(const std::vector<int64_t>& ts_ms, int pad_len) {
    const int l = static_cast<int>(ts_ms.size());
    if (pad_len < 0 || pad_len > l) throw std::invalid_argument("mask: pad length out of range");
    AttentionMask m;
    m.len = l;
    m.allow.assign(static_cast<size_t>(l) * l, 0);
    for (int q = pad_len; q < l; ++q) {
        for (int k = pad_len; k < l; ++k) {
            if (ts_ms[static_cast<size_t>(k)] < ts_ms[static_cast<size_t>(q)] || k == q) {
                m.allow[static_cast<size_t>(q) * l + k] = 1;
            }
        }
    }
    return m;
}

AttentionMask full_mask(int len, int pad_len) {
    if (pad_len < 0 || pad_len > len) throw std::invalid_argument("mask: pad length out of range");
    AttentionMask m;
    m.len = len;
    m.allow.assign(static_cast<size_t>(len) * len, 0);
    for (int q = pad_len; q < len; ++q) {
        for (int k = pad_len; k < len; ++k) m.allow[static_cast<size_t>(q) * len + k] = 1;
    }
    return m;
}

ModelInput make_input(const sequence::UserSequence& seq, const UserProfile& profile,
                      const pipeline::ContextTransformer& ctx, const TransformerConfig& cfg) {
    if (seq.len() == 0) throw std::invalid_argument("make_input: empty sequence");
    if (seq.len() > cfg.max_len) throw std::invalid_argument("make_input: sequence beyond max_len");
    ModelInput in;
    in.tokens.assign(seq.tokens.begin(), seq.tokens.end());
    in.ts_ms = seq.ts_ms;
    in.pad_len = 0;
    const auto& t = seq.temporal;
    auto widen = [](const std::vector<uint8_t>& v) {
        return std::vector<int>(v.begin(), v.end());
    };
    in.dow = widen(t.dayofweek);
    in.wom = widen(t.weekofmonth);
    in.hod = widen(t.hourofday);
    in.moy = widen(t.monthofyear);
    in.delta = widen(t.delta);
    in.fs = ctx.user_static(profile);
    if (cfg.head == HeadKind::pctr) {
        in.fm.reserve(static_cast<size_t>(seq.len()) * cfg.fm_dim);
        for (int i = 0; i < seq.len(); ++i) {
            auto row = fm_embedding(profile, seq.day[static_cast<size_t>(i)], cfg.fm_dim);
            in.fm.insert(in.fm.end(), row.begin(), row.end());
        }
        in.label_pos = std::vector<int>(seq.label_pos.begin(), seq.label_pos.end());
        in.label_item = std::vector<int>(seq.label_item.begin(), seq.label_item.end());
    } else {
        in.fm = fm_embedding(profile, seq.day.back(), cfg.fm_dim);
        in.fd.assign(seq.fd.begin(), seq.fd.end());
        in.cvr_label = seq.cvr_label;
    }
    in.endpoint_item = seq.endpoint_item;
    in.product_id = seq.product_id;
    return in;
}

namespace {

Tensor init_weights(const Shape& shape, Rng& rng, float std_dev = 0.02f) {
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : data) v = rng.truncated_normal(std_dev);
    return Tensor::param(shape, std::move(data));
}

Tensor init_zeros(const Shape& shape) {
    return Tensor::param(shape, std::vector<float>(static_cast<size_t>(shape_numel(shape)), 0.0f));
}

Tensor init_ones(const Shape& shape) {
    return Tensor::param(shape, std::vector<float>(static_cast<size_t>(shape_numel(shape)), 1.0f));
}

}  // namespace

FinTRecModel FinTRecModel::init(const TransformerConfig& cfg, uint64_t seed) {
    cfg.validate();
    FinTRecModel m;
    m.cfg_ = cfg;
    Rng rng = Rng(seed).fork(0x30de1);
    auto push = [&](const std::string& name, Tensor t) {
        m.params_.emplace_back(name, std::move(t));
    };
    push("embed.token", init_weights({cfg.vocab_size, cfg.d_embed}, rng));
    push("embed.dow", init_weights({sequence::kDowCard, cfg.d_embed}, rng));
    push("embed.wom", init_weights({sequence::kWomCard, cfg.d_embed}, rng));
    push("embed.hod", init_weights({sequence::kHodCard, cfg.d_embed}, rng));
    push("embed.moy", init_weights({sequence::kMoyCard, cfg.d_embed}, rng));
    push("embed.delta", init_weights({sequence::kDeltaCard, cfg.d_embed}, rng));
    if (cfg.head == HeadKind::pcvr) {
        push("embed.fd", init_weights({pipeline::kDynamicDim, cfg.d_embed}, rng));
    }
    push("proj.w", init_weights({cfg.d_embed, cfg.d_hidden}, rng));
    push("proj.b", init_zeros({cfg.d_hidden}));
    for (int i = 0; i < cfg.n_layers; ++i) {
        const std::string b = "block" + std::to_string(i) + ".";
        push(b + "ln1.g", init_ones({cfg.d_hidden}));
        push(b + "ln1.b", init_zeros({cfg.d_hidden}));
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            push(b + "attn." + w, init_weights({cfg.d_hidden, cfg.d_hidden}, rng));
        }
        for (const char* bias : {"bq", "bk", "bv", "bo"}) {
            push(b + "attn." + bias, init_zeros({cfg.d_hidden}));
        }
        push(b + "ln2.g", init_ones({cfg.d_hidden}));
        push(b + "ln2.b", init_zeros({cfg.d_hidden}));
        push(b + "ffn.w1", init_weights({cfg.d_hidden, cfg.ffn_mult * cfg.d_hidden}, rng));
        push(b + "ffn.b1", init_zeros({cfg.ffn_mult * cfg.d_hidden}));
        push(b + "ffn.w2", init_weights({cfg.ffn_mult * cfg.d_hidden, cfg.d_hidden}, rng));
        push(b + "ffn.b2", init_zeros({cfg.d_hidden}));
    }
    push("final.g", init_ones({cfg.d_hidden}));
    push("final.b", init_zeros({cfg.d_hidden}));
    // The fusion dense layer keeps one weight block per input pathway so
    // adaptation can freeze or train the hidden-state, daily-embedding, and
    // static-profile contributions independently.
    push("head.w1h", init_weights({cfg.d_hidden, cfg.head_hidden}, rng));
    if (cfg.fm_dim > 0) push("head.w1m", init_weights({cfg.fm_dim, cfg.head_hidden}, rng));
    if (cfg.static_dim > 0) push("head.w1s", init_weights({cfg.static_dim, cfg.head_hidden}, rng));
    push("head.b1", init_zeros({cfg.head_hidden}));
    push("head.w2", init_weights({cfg.head_hidden, cfg.head_out()}, rng));
    push("head.b2", init_zeros({cfg.head_out()}));
    for (size_t i = 0; i < m.params_.size(); ++i) m.index_[m.params_[i].first] = i;
    return m;
}

FinTRecModel FinTRecModel::from_params(const TransformerConfig& cfg, ParamList params) {
    cfg.validate();
    FinTRecModel m;
    m.cfg_ = cfg;
    m.params_ = std::move(params);
    for (size_t i = 0; i < m.params_.size(); ++i) {
        if (!m.index_.emplace(m.params_[i].first, i).second) {
            throw std::invalid_argument("model: duplicate parameter " + m.params_[i].first);
        }
    }
    return m;
}

bool FinTRecModel::has_param(const std::string& name) const { return index_.count(name) != 0; }

const Tensor& FinTRecModel::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("model: no parameter " + name);
    return params_[it->second].second;
}

Tensor& FinTRecModel::param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("model: no parameter " + name);
    return params_[it->second].second;
}

void FinTRecModel::extend_vocab(int extra_tokens, int extra_items, uint64_t seed) {
    if (extra_tokens < 0 || extra_items < 0) {
        throw std::invalid_argument("extend_vocab: negative extension");
    }
    if (has_param("embed.token_ext")) {
        throw std::invalid_argument("extend_vocab: model already extended");
    }
    if (cfg_.head == HeadKind::pcvr && extra_items > 0) {
        throw std::invalid_argument("extend_vocab: conversion head has no item vocabulary");
    }
    Rng rng = Rng(seed).fork(0xe27e4d);
    auto push = [&](const std::string& name, Tensor t) {
        index_[name] = params_.size();
        params_.emplace_back(name, std::move(t));
    };
    if (extra_tokens > 0) {
        push("embed.token_ext", init_weights({extra_tokens, cfg_.d_embed}, rng));
    }
    if (extra_items > 0) {
        push("head.w2_ext", init_weights({cfg_.head_hidden, extra_items}, rng));
        push("head.b2_ext", init_zeros({extra_items}));
    }
}

void FinTRecModel::add_param(const std::string& name, Tensor t) {
    if (has_param(name)) throw std::invalid_argument("model: duplicate parameter " + name);
    if (!t.defined()) throw std::invalid_argument("model: undefined parameter " + name);
    index_[name] = params_.size();
    params_.emplace_back(name, std::move(t));
}

void FinTRecModel::replace_head(int new_output_dim, uint64_t seed) {
    if (cfg_.head != HeadKind::pctr) {
        throw std::invalid_argument("replace_head: only the click head scores items");
    }
    if (new_output_dim < 1) throw std::invalid_argument("replace_head: output dim must be positive");
    Rng rng = Rng(seed).fork(0xad4b7e);
    param("head.w2") = init_weights({cfg_.head_hidden, new_output_dim}, rng);
    param("head.b2") = init_zeros({new_output_dim});
    if (has_param("head.w2_ext")) {
        // Extension columns belonged to the old item space; rebuild the index
        // without them.
        ParamList kept;
        kept.reserve(params_.size());
        for (auto& [name, tensor] : params_) {
            if (name == "head.w2_ext" || name == "head.b2_ext") continue;
            kept.emplace_back(name, std::move(tensor));
        }
        params_ = std::move(kept);
        index_.clear();
        for (size_t i = 0; i < params_.size(); ++i) index_[params_[i].first] = i;
    }
    cfg_.n_items = new_output_dim;
}

int FinTRecModel::token_rows() const {
    int rows = param("embed.token").rows();
    if (has_param("embed.token_ext")) rows += param("embed.token_ext").rows();
    return rows;
}

int FinTRecModel::item_cols() const {
    if (cfg_.head != HeadKind::pctr) return 2;
    int cols = param("head.w2").cols();
    if (has_param("head.w2_ext")) cols += param("head.w2_ext").cols();
    return cols;
}

Tensor FinTRecModel::encode(const ModelInput& in, const AttentionMask& mask, Rng* dropout_rng,
                            ForwardTrace* trace) const {
    const int l = in.len();
    const bool use_dropout = dropout_rng != nullptr && cfg_.dropout > 0.0f;

    Tensor tok = has_param("embed.token_ext")
                     ? embedding_lookup_ext(param("embed.token"), param("embed.token_ext"),
                                            in.tokens)
                     : embedding_lookup(param("embed.token"), in.tokens);
    Tensor e_t = add(add(embedding_lookup(param("embed.dow"), in.dow),
                         embedding_lookup(param("embed.wom"), in.wom)),
                     add(embedding_lookup(param("embed.hod"), in.hod),
                         add(embedding_lookup(param("embed.moy"), in.moy),
                             embedding_lookup(param("embed.delta"), in.delta))));
    Tensor p_t = sequence::positional_masked(l, cfg_.d_embed, l - in.pad_len);
    Tensor x = sequence::fuse_position_time(tok, p_t, e_t);

    if (cfg_.head == HeadKind::pcvr) {
        // Endpoint-only fusion of the session dynamic aggregate.
        Tensor fd_vec = Tensor::from({1, pipeline::kDynamicDim}, in.fd);
        Tensor fd_row = matmul(fd_vec, param("embed.fd"));
        std::vector<float> pick(static_cast<size_t>(l), 0.0f);
        pick.back() = 1.0f;
        x = add(x, matmul(Tensor::from({l, 1}, std::move(pick)), fd_row));
    }

    x = add_bias(matmul(x, param("proj.w")), param("proj.b"));

    const int dk = cfg_.d_hidden / cfg_.n_heads;
    const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(dk));
    // Low-rank adapter deltas ride on top of the frozen projections when an
    // adaptation pass has attached them: W x + s * B(A x).
    const float lora_s = has_param("lora.scale") ? param("lora.scale").data()[0] : 0.0f;
    auto project = [&](const Tensor& h, const std::string& w, const std::string& bias) {
        Tensor out = add_bias(matmul(h, param(w)), param(bias));
        const std::string low = w + ".lora_a";
        if (has_param(low)) {
            Tensor delta = matmul(matmul(h, param(low)), param(w + ".lora_b"));
            out = add(out, scale(delta, lora_s));
        }
        return out;
    };
    for (int i = 0; i < cfg_.n_layers; ++i) {
        const std::string b = "block" + std::to_string(i) + ".";
        Tensor h = layer_norm(x, param(b + "ln1.g"), param(b + "ln1.b"));
        Tensor q = project(h, b + "attn.wq", b + "attn.bq");
        Tensor k = project(h, b + "attn.wk", b + "attn.bk");
        Tensor v = project(h, b + "attn.wv", b + "attn.bv");
        std::vector<Tensor> heads;
        heads.reserve(static_cast<size_t>(cfg_.n_heads));
        for (int hd = 0; hd < cfg_.n_heads; ++hd) {
            Tensor qh = slice_cols(q, hd * dk, (hd + 1) * dk);
            Tensor kh = slice_cols(k, hd * dk, (hd + 1) * dk);
            Tensor vh = slice_cols(v, hd * dk, (hd + 1) * dk);
            Tensor probs =
                masked_softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt_dk), mask.allow);
            if (trace != nullptr) trace->attention.push_back(probs);
            heads.push_back(matmul(probs, vh));
        }
        Tensor attn = add_bias(matmul(concat_cols(heads), param(b + "attn.wo")),
                               param(b + "attn.bo"));
        if (use_dropout) attn = dropout(attn, cfg_.dropout, *dropout_rng);
        x = add(x, attn);

        Tensor h2 = layer_norm(x, param(b + "ln2.g"), param(b + "ln2.b"));
        Tensor f = add_bias(
            matmul(gelu(add_bias(matmul(h2, param(b + "ffn.w1")), param(b + "ffn.b1"))),
                   param(b + "ffn.w2")),
            param(b + "ffn.b2"));
        if (use_dropout) f = dropout(f, cfg_.dropout, *dropout_rng);
        x = add(x, f);
    }
    Tensor out = layer_norm(x, param("final.g"), param("final.b"));
    if (trace != nullptr) trace->encoded = out;
    return out;
}

namespace {

// Per-position context features as constant inputs: the daily embedding rows
// and the static vector repeated across positions.
Tensor rows_const(const std::vector<float>& flat, int rows, int cols, const char* what) {
    if (static_cast<int>(flat.size()) != rows * cols) {
        throw std::invalid_argument(std::string("model: bad ") + what + " feature size");
    }
    return Tensor::from({rows, cols}, flat);
}

Tensor repeat_const(const std::vector<float>& row, int rows, const char* what) {
    std::vector<float> flat;
    flat.reserve(row.size() * static_cast<size_t>(rows));
    for (int i = 0; i < rows; ++i) flat.insert(flat.end(), row.begin(), row.end());
    return rows_const(flat, rows, static_cast<int>(row.size()), what);
}

}  // namespace

Tensor FinTRecModel::pctr_logits(const ModelInput& in, Rng* dropout_rng,
                                 ForwardTrace* trace) const {
    if (cfg_.head != HeadKind::pctr) throw std::invalid_argument("model: not a click head");
    const int l = in.len();
    if (l == 0) throw std::invalid_argument("model: empty input");
    if (l > cfg_.max_len) throw std::invalid_argument("model: sequence beyond max_len");
    Tensor h = encode(in, causal_time_mask(in.ts_ms, in.pad_len), dropout_rng, trace);
    Tensor pre = matmul(h, param("head.w1h"));
    if (has_param("head.w1m")) {
        pre = add(pre, matmul(rows_const(in.fm, l, cfg_.fm_dim, "daily"), param("head.w1m")));
    }
    if (has_param("head.w1s")) {
        pre = add(pre, matmul(repeat_const(in.fs, l, "static"), param("head.w1s")));
    }
    Tensor g = gelu(add_bias(pre, param("head.b1")));
    if (dropout_rng != nullptr && cfg_.dropout > 0.0f) g = dropout(g, cfg_.dropout, *dropout_rng);
    Tensor logits = add_bias(matmul(g, param("head.w2")), param("head.b2"));
    if (has_param("head.w2_ext")) {
        logits = concat_cols(
            {logits, add_bias(matmul(g, param("head.w2_ext")), param("head.b2_ext"))});
    }
    return logits;
}

Tensor FinTRecModel::pcvr_prob(const ModelInput& in, Rng* dropout_rng,
                               ForwardTrace* trace) const {
    if (cfg_.head != HeadKind::pcvr) throw std::invalid_argument("model: not a conversion head");
    const int l = in.len();
    if (l == 0 || in.pad_len >= l) {
        throw std::invalid_argument("model: conversion input needs at least one real token");
    }
    if (l > cfg_.max_len) throw std::invalid_argument("model: sequence beyond max_len");
    Tensor h = encode(in, full_mask(l, in.pad_len), dropout_rng, trace);
    std::vector<uint8_t> keep(static_cast<size_t>(l), 1);
    for (int i = 0; i < in.pad_len; ++i) keep[static_cast<size_t>(i)] = 0;
    Tensor pooled = mean_pool_rows(h, keep);
    if (trace != nullptr) trace->pooled = pooled;
    Tensor pre = matmul(pooled, param("head.w1h"));
    if (has_param("head.w1m")) {
        pre = add(pre, matmul(rows_const(in.fm, 1, cfg_.fm_dim, "daily"), param("head.w1m")));
    }
    if (has_param("head.w1s")) {
        pre = add(pre, matmul(repeat_const(in.fs, 1, "static"), param("head.w1s")));
    }
    Tensor g = gelu(add_bias(pre, param("head.b1")));
    if (dropout_rng != nullptr && cfg_.dropout > 0.0f) g = dropout(g, cfg_.dropout, *dropout_rng);
    Tensor z = add_bias(matmul(g, param("head.w2")), param("head.b2"));
    // Two-way softmax equals a sigmoid over the logit difference.
    return sigmoid(sub(slice_cols(z, 1, 2), slice_cols(z, 0, 1)));
}

Tensor next_item_loss(const std::vector<Tensor>& logits,
                      const std::vector<std::vector<int>>& positions,
                      const std::vector<std::vector<int>>& labels) {
    if (logits.size() != positions.size() || logits.size() != labels.size()) {
        throw std::invalid_argument("next_item_loss: batch arity mismatch");
    }
    size_t total = 0;
    for (const auto& p : positions) total += p.size();
    if (total == 0) {
        std::fprintf(stderr, "warning: next-item batch carries no labeled positions\n");
        return Tensor::zeros({1, 1});
    }
    Tensor sum;
    for (size_t i = 0; i < logits.size(); ++i) {
        if (positions[i].empty()) continue;
        Tensor part = ce_sum(logits[i], positions[i], labels[i]);
        sum = sum.defined() ? add(sum, part) : part;
    }
    return scale(sum, 1.0f / static_cast<float>(total));
}

Tensor bce_loss(const Tensor& probs, const std::vector<float>& labels) {
    return bce_mean(probs, labels);
}

// ---- calibration ----

float IsotonicMap::apply(float score) const {
    if (knot_x.empty()) return score;
    auto it = std::upper_bound(knot_x.begin(), knot_x.end(), score);
    if (it == knot_x.begin()) return knot_y.front();
    const auto idx = static_cast<size_t>(std::distance(knot_x.begin(), it)) - 1;
    return knot_y[idx];
}

IsotonicMap isotonic_fit(std::vector<float> scores, std::vector<float> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("isotonic: size mismatch");
    if (scores.empty()) throw std::invalid_argument("isotonic: empty input");
    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Collapse ties in x, then pool adjacent violators over weighted blocks.
    struct Block {
        float x;
        double sum;
        double weight;
    };
    std::vector<Block> blocks;
    for (size_t i : order) {
        if (!blocks.empty() && blocks.back().x == scores[i]) {
            blocks.back().sum += labels[i];
            blocks.back().weight += 1.0;
        } else {
            blocks.push_back({scores[i], static_cast<double>(labels[i]), 1.0});
        }
    }
    std::vector<Block> pooled;
    for (const auto& b : blocks) {
        pooled.push_back(b);
        while (pooled.size() > 1) {
            auto& prev = pooled[pooled.size() - 2];
            auto& cur = pooled.back();
            if (prev.sum * cur.weight <= cur.sum * prev.weight) break;  // means ordered
            prev.sum += cur.sum;
            prev.weight += cur.weight;
            pooled.pop_back();
        }
    }
    IsotonicMap map;
    map.knot_x.reserve(pooled.size());
    map.knot_y.reserve(pooled.size());
    for (const auto& b : pooled) {
        map.knot_x.push_back(b.x);
        map.knot_y.push_back(static_cast<float>(b.sum / b.weight));
    }
    return map;
}

float CalibrationMap::apply(int32_t item, float score) const {
    auto it = per_item.find(item);
    return it == per_item.end() ? global.apply(score) : it->second.apply(score);
}

CalibrationMap calibrate(const std::vector<float>& scores, const std::vector<float>& labels,
                         const std::vector<int32_t>& items, int min_samples) {
    if (scores.size() != labels.size() || scores.size() != items.size()) {
        throw std::invalid_argument("calibrate: size mismatch");
    }
    if (scores.empty()) throw std::invalid_argument("calibrate: empty validation set");
    CalibrationMap map;
    map.min_samples = min_samples;
    map.global = isotonic_fit(scores, labels);
    std::unordered_map<int32_t, std::vector<size_t>> by_item;
    for (size_t i = 0; i < items.size(); ++i) by_item[items[i]].push_back(i);
    for (const auto& [item, idx] : by_item) {
        if (static_cast<int>(idx.size()) < min_samples) continue;
        std::vector<float> s, y;
        s.reserve(idx.size());
        y.reserve(idx.size());
        for (size_t i : idx) {
            s.push_back(scores[i]);
            y.push_back(labels[i]);
        }
        map.per_item.emplace(item, isotonic_fit(std::move(s), std::move(y)));
    }
    return map;
}

float ece(const std::vector<float>& scores, const std::vector<float>& labels, int bins) {
    if (scores.size() != labels.size()) throw std::invalid_argument("ece: size mismatch");
    if (scores.empty() || bins < 1) throw std::invalid_argument("ece: empty input");
    std::vector<double> conf(static_cast<size_t>(bins), 0.0);
    std::vector<double> acc(static_cast<size_t>(bins), 0.0);
    std::vector<int> count(static_cast<size_t>(bins), 0);
    for (size_t i = 0; i < scores.size(); ++i) {
        const int b = std::min(bins - 1, static_cast<int>(scores[i] * static_cast<float>(bins)));
        const auto bi = static_cast<size_t>(std::max(0, b));
        conf[bi] += scores[i];
        acc[bi] += labels[i];
        ++count[bi];
    }
    double total = 0.0;
    for (int b = 0; b < bins; ++b) {
        const auto bi = static_cast<size_t>(b);
        if (count[bi] == 0) continue;
        const double gap = std::fabs(acc[bi] / count[bi] - conf[bi] / count[bi]);
        total += gap * count[bi] / static_cast<double>(scores.size());
    }
    return static_cast<float>(total);
}

}  // namespace fintrec::model
