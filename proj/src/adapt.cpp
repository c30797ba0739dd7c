// SPDX-License-Identifier: Apache-2.0
#include "fintrec/adapt.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include <json.hpp>

#include "fintrec/checkpoint.hpp"
#include "fintrec/ranksim.hpp"
#include "fintrec/rng.hpp"

namespace fintrec::adapt {

namespace {

bool is_lora_name(const std::string& name) {
    return name == "lora.scale" || name.find(".lora_") != std::string::npos;
}

bool is_extension_name(const std::string& name) {
    return name == "embed.token_ext" || name == "head.w2_ext" || name == "head.b2_ext";
}

bool is_output_adapter_name(const std::string& name) {
    return name == "head.w2" || name == "head.b2" || name == "head.w2_ext" ||
           name == "head.b2_ext";
}

// Per-mode trainability. lp exposes only the fusion dense layer plus the item
// head; lora exposes the low-rank attention paths plus the context pathways of
// the fusion layer; fft exposes everything. The output adapter and the token
// extension are trainable in every mode — they are the product's own weights.
bool trainable_in(FinetuneMode mode, const std::string& name) {
    if (is_output_adapter_name(name) || name == "embed.token_ext") return true;
    switch (mode) {
        case FinetuneMode::fft:
            return name != "lora.scale";
        case FinetuneMode::lp:
            return name == "head.w1h" || name == "head.b1";
        case FinetuneMode::lora:
            return name.find(".lora_") != std::string::npos || name == "head.w1m" ||
                   name == "head.w1s";
    }
    throw std::logic_error("adapt: unknown fine-tune mode");
}

nlohmann::json config_json(const model::TransformerConfig& cfg) {
    return nlohmann::json{
        {"n_layers", cfg.n_layers},     {"d_embed", cfg.d_embed},
        {"d_hidden", cfg.d_hidden},     {"n_heads", cfg.n_heads},
        {"ffn_mult", cfg.ffn_mult},     {"head_hidden", cfg.head_hidden},
        {"dropout", cfg.dropout},       {"vocab_size", cfg.vocab_size},
        {"n_items", cfg.n_items},       {"max_len", cfg.max_len},
        {"fm_dim", cfg.fm_dim},         {"static_dim", cfg.static_dim},
        {"head", cfg.head == model::HeadKind::pctr ? "pctr" : "pcvr"},
    };
}

model::TransformerConfig config_from_json(const nlohmann::json& j) {
    model::TransformerConfig cfg;
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.d_embed = j.at("d_embed").get<int>();
    cfg.d_hidden = j.at("d_hidden").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.ffn_mult = j.at("ffn_mult").get<int>();
    cfg.head_hidden = j.at("head_hidden").get<int>();
    cfg.dropout = j.at("dropout").get<float>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.n_items = j.at("n_items").get<int>();
    cfg.max_len = j.at("max_len").get<int>();
    cfg.fm_dim = j.at("fm_dim").get<int>();
    cfg.static_dim = j.at("static_dim").get<int>();
    const std::string head = j.at("head").get<std::string>();
    if (head != "pctr" && head != "pcvr") {
        throw std::runtime_error("adapt: unknown head kind '" + head + "' in adapter metadata");
    }
    cfg.head = head == "pctr" ? model::HeadKind::pctr : model::HeadKind::pcvr;
    return cfg;
}

}  // namespace

const char* to_string(FinetuneMode mode) {
    switch (mode) {
        case FinetuneMode::lora: return "lora";
        case FinetuneMode::lp: return "lp";
        case FinetuneMode::fft: return "fft";
    }
    throw std::logic_error("adapt: unknown fine-tune mode");
}

FinetuneMode finetune_mode_from_string(const std::string& s) {
    if (s == "lora") return FinetuneMode::lora;
    if (s == "lp") return FinetuneMode::lp;
    if (s == "fft") return FinetuneMode::fft;
    throw std::invalid_argument("adapt: unknown fine-tune mode '" + s +
                                "' (expected lora, lp, or fft)");
}

void apply_lora(model::FinTRecModel& m, const LoraSpec& spec, uint64_t seed) {
    const auto& cfg = m.config();
    if (spec.rank < 1 || spec.rank > cfg.d_hidden) {
        throw std::invalid_argument("adapt: lora rank must lie in [1, d_hidden]");
    }
    if (!(spec.alpha > 0.0f)) {
        throw std::invalid_argument("adapt: lora alpha must be positive");
    }
    if (m.has_param("lora.scale")) {
        throw std::logic_error("adapt: low-rank adapters already attached");
    }
    Rng rng = Rng(seed).fork(0x10aa);
    for (int i = 0; i < cfg.n_layers; ++i) {
        const std::string block = "block" + std::to_string(i) + ".";
        for (const char* target : {"attn.wq", "attn.wv"}) {
            std::vector<float> a(static_cast<size_t>(cfg.d_hidden) * spec.rank);
            for (auto& v : a) v = rng.truncated_normal(0.02f);
            m.add_param(block + target + ".lora_a",
                        Tensor::param({cfg.d_hidden, spec.rank}, std::move(a)));
            m.add_param(block + target + ".lora_b",
                        Tensor::param({spec.rank, cfg.d_hidden},
                                      std::vector<float>(
                                          static_cast<size_t>(spec.rank) * cfg.d_hidden, 0.0f)));
        }
    }
    // The delta scale rides along as a constant so checkpoints carry it.
    Tensor scale = Tensor::param({1, 1}, {spec.alpha / static_cast<float>(spec.rank)});
    scale.set_requires_grad(false);
    m.add_param("lora.scale", scale);
}

void replace_output_adapter(model::FinTRecModel& m, int new_output_dim, uint64_t seed) {
    m.replace_head(new_output_dim, seed);
}

std::vector<std::string> apply_mode(model::FinTRecModel& m, FinetuneMode mode) {
    const bool attached = m.has_param("lora.scale");
    if ((mode == FinetuneMode::lora) != attached) {
        throw std::invalid_argument(
            attached ? "adapt: low-rank adapters attached but mode is not lora"
                     : "adapt: mode lora requires attached low-rank adapters");
    }
    std::vector<std::string> frozen;
    for (auto& [name, t] : m.params()) {
        const bool on = trainable_in(mode, name) && name != "lora.scale";
        t.set_requires_grad(on);
        if (!on) frozen.push_back(name);
    }
    return frozen;
}

ParamCensus census(const model::FinTRecModel& m, FinetuneMode mode, const LoraSpec& spec) {
    const auto& cfg = m.config();
    ParamCensus out;
    int64_t lora_attached = 0;
    int64_t pathway = 0;  // non-lora strategy-specific parameters
    for (const auto& [name, t] : m.params()) {
        if (is_lora_name(name)) {
            if (name != "lora.scale") lora_attached += t.numel();
            continue;
        }
        if (is_extension_name(name)) continue;
        out.base_total += t.numel();
        if (trainable_in(mode, name) && !is_output_adapter_name(name)) pathway += t.numel();
    }
    int64_t lora_count = 0;
    if (mode == FinetuneMode::lora) {
        // Two targets per block, each an A [d_hidden, r] and a B [r, d_hidden].
        lora_count = lora_attached > 0
                         ? lora_attached
                         : 4LL * cfg.n_layers * cfg.d_hidden * spec.rank;
    }
    out.trainable = pathway + lora_count;
    out.ratio = out.base_total > 0
                    ? static_cast<double>(out.trainable) / static_cast<double>(out.base_total)
                    : 0.0;
    return out;
}

ProductSplit leave_product_out(const std::vector<pipeline::CtrWindow>& windows,
                               const Catalog& catalog, int16_t product_id) {
    std::unordered_set<int32_t> held;
    for (const auto& item : catalog.items) {
        if (item.product_id == product_id) held.insert(item.item_id);
    }
    if (held.empty()) {
        throw std::invalid_argument("adapt: product " + std::to_string(product_id) +
                                    " has no items in the catalog");
    }
    ProductSplit split;
    for (const auto& w : windows) {
        const bool touches = std::any_of(w.label_item.begin(), w.label_item.end(),
                                         [&](int32_t item) { return held.count(item) != 0; });
        (touches ? split.adapt : split.pretrain).push_back(w);
    }
    return split;
}

pipeline::TokenVocabulary pretrain_vocab(const pipeline::SessionizedLog& log,
                                         int64_t train_end_ms, int16_t held_out_product) {
    pipeline::TokenVocabulary v;
    std::map<std::array<uint16_t, 4>, int> seen;
    for (const auto& e : log.events) {
        if (e.ts < train_end_ms && e.product_id != held_out_product) {
            seen.emplace(pipeline::TokenVocabulary::tuple_of(e), 0);
        }
    }
    v.id_to_tuple.assign(pipeline::TokenVocabulary::kFirstTuple, {0, 0, 0, 0});
    for (auto& [tuple, id] : seen) {
        id = static_cast<int>(v.id_to_tuple.size());
        v.id_to_tuple.push_back(tuple);
        v.tuple_to_id.emplace(tuple, id);
    }
    return v;
}

int extend_vocab_with_product(pipeline::TokenVocabulary& vocab,
                              const pipeline::SessionizedLog& log, int64_t train_end_ms,
                              int16_t held_out_product) {
    std::set<std::array<uint16_t, 4>> fresh;
    for (const auto& e : log.events) {
        if (e.ts >= train_end_ms || e.product_id != held_out_product) continue;
        const auto tuple = pipeline::TokenVocabulary::tuple_of(e);
        if (vocab.tuple_to_id.find(tuple) == vocab.tuple_to_id.end()) fresh.insert(tuple);
    }
    for (const auto& tuple : fresh) {
        const int id = static_cast<int>(vocab.id_to_tuple.size());
        vocab.id_to_tuple.push_back(tuple);
        vocab.tuple_to_id.emplace(tuple, id);
    }
    return static_cast<int>(fresh.size());
}

FinetuneReport finetune(model::FinTRecModel& m,
                        const std::vector<model::ModelInput>& train_inputs,
                        const std::vector<model::ModelInput>& val_inputs,
                        const FinetuneConfig& cfg) {
    if (m.config().head != model::HeadKind::pctr) {
        throw std::invalid_argument("adapt: fine-tuning drives the click head");
    }
    if (cfg.new_item_count < 1) {
        throw std::invalid_argument("adapt: new item count must be positive");
    }
    if (cfg.trainer.epochs < 0) {
        throw std::invalid_argument("adapt: epochs must be non-negative");
    }
    if (val_inputs.empty()) {
        throw std::invalid_argument("adapt: no validation inputs");
    }

    FinetuneReport rep;
    rep.base_hash = params_hash(m.params());
    if (cfg.new_tokens > 0) m.extend_vocab(cfg.new_tokens, 0, cfg.trainer.seed);
    replace_output_adapter(m, cfg.new_item_count, cfg.trainer.seed);
    if (cfg.mode == FinetuneMode::lora) apply_lora(m, cfg.lora, cfg.trainer.seed);
    const std::vector<std::string> frozen = apply_mode(m, cfg.mode);

    std::vector<std::pair<std::string, std::vector<float>>> snapshot;
    snapshot.reserve(frozen.size());
    for (const auto& name : frozen) snapshot.emplace_back(name, m.param(name).data());
    for (const auto& [name, t] : m.params()) {
        if (t.requires_grad()) rep.trainable_params += t.numel();
    }

    const int n_items = m.config().n_items;
    const int k5 = std::min(5, n_items);
    auto evaluate = [&](double* r1, double* r5) {
        std::vector<std::vector<int32_t>> ranked;
        std::vector<int32_t> truth;
        for (const auto& in : val_inputs) {
            if (in.label_pos.empty()) continue;
            const Tensor logits = m.pctr_logits(in);
            const auto& ld = logits.data();
            for (size_t li = 0; li < in.label_pos.size(); ++li) {
                const int row = in.label_pos[li];
                const int32_t item = in.label_item[li];
                if (item < 0 || item >= n_items) {
                    throw std::invalid_argument(
                        "adapt: label item outside the replaced adapter; remap labels to "
                        "local indices first");
                }
                std::vector<int32_t> ids(static_cast<size_t>(n_items));
                std::iota(ids.begin(), ids.end(), 0);
                std::partial_sort(ids.begin(), ids.begin() + k5, ids.end(),
                                  [&](int32_t a, int32_t b) {
                                      const float la = ld[static_cast<size_t>(row) * n_items + a];
                                      const float lb = ld[static_cast<size_t>(row) * n_items + b];
                                      if (la != lb) return la > lb;
                                      return a < b;
                                  });
                ids.resize(static_cast<size_t>(k5));
                ranked.push_back(std::move(ids));
                truth.push_back(item);
            }
        }
        if (ranked.empty()) {
            throw std::invalid_argument("adapt: validation inputs carry no labels");
        }
        *r1 = ranksim::recall_at_k(ranked, truth, 1);
        *r5 = ranksim::recall_at_k(ranked, truth, k5);
    };

    evaluate(&rep.recall1_zero_shot, &rep.recall5_zero_shot);
    if (cfg.trainer.epochs > 0) {
        rep.final_loss = train::fit_pctr(m, train_inputs, cfg.trainer);
        evaluate(&rep.recall1, &rep.recall5);
    } else {
        rep.recall1 = rep.recall1_zero_shot;
        rep.recall5 = rep.recall5_zero_shot;
    }

    for (size_t i = 0; i < frozen.size(); ++i) {
        const auto& now = m.param(frozen[i]).data();
        const auto& before = snapshot[i].second;
        if (now.size() != before.size() ||
            std::memcmp(now.data(), before.data(), now.size() * sizeof(float)) != 0) {
            throw std::logic_error("adapt: frozen parameter changed: " + frozen[i]);
        }
    }
    return rep;
}

void save_adapter(const std::string& path, const model::FinTRecModel& m, FinetuneMode mode,
                  uint64_t base_hash) {
    Checkpoint ck;
    ck.kind = "adapter";
    nlohmann::json meta;
    meta["mode"] = to_string(mode);
    meta["config"] = config_json(m.config());
    ck.meta = meta.dump();
    ck.base_hash = base_hash;
    if (mode == FinetuneMode::fft) {
        ck.params = m.params();
    } else {
        for (const auto& [name, t] : m.params()) {
            if (trainable_in(mode, name) || name == "lora.scale") ck.params.emplace_back(name, t);
        }
    }
    save_checkpoint(path, ck);
}

model::FinTRecModel load_adapter(const std::string& path, const model::FinTRecModel& base) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "adapter") {
        throw std::runtime_error("adapt: " + path + " is not an adapter checkpoint");
    }
    const nlohmann::json meta = nlohmann::json::parse(ck.meta);
    const FinetuneMode mode = finetune_mode_from_string(meta.at("mode").get<std::string>());
    const model::TransformerConfig cfg = config_from_json(meta.at("config"));

    model::ParamList merged;
    if (mode == FinetuneMode::fft) {
        merged = std::move(ck.params);
    } else {
        if (params_hash(base.params()) != ck.base_hash) {
            throw std::runtime_error(
                "adapt: adapter was trained against a different base (parameter hash mismatch)");
        }
        std::unordered_map<std::string, size_t> delta;
        for (size_t i = 0; i < ck.params.size(); ++i) delta.emplace(ck.params[i].first, i);
        std::vector<bool> used(ck.params.size(), false);
        for (const auto& [name, t] : base.params()) {
            auto it = delta.find(name);
            if (it != delta.end()) {
                merged.push_back(ck.params[it->second]);
                used[it->second] = true;
            } else {
                // Deep copy so training the merged model never mutates the base.
                merged.emplace_back(name, Tensor::param(t.shape(), t.data()));
            }
        }
        for (size_t i = 0; i < ck.params.size(); ++i) {
            if (!used[i]) merged.push_back(ck.params[i]);
        }
    }
    model::FinTRecModel out = model::FinTRecModel::from_params(cfg, std::move(merged));
    apply_mode(out, mode);  // restore the freeze predicate the adapter trained under
    return out;
}

}  // namespace fintrec::adapt
