// SPDX-License-Identifier: Apache-2.0
#include "fintrec/cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fintrec/baseline.hpp"
#include "fintrec/checkpoint.hpp"
#include "fintrec/rng.hpp"

namespace fintrec::cli {
namespace {

using json = nlohmann::json;

constexpr int64_t kDayMs = 86400000;

// ---- small text helpers ----

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw std::invalid_argument("cli: bad value '" + value + "' for config key '" + key + "'");
}

long long to_ll(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long long r = std::stoll(v, &pos);
        if (pos != v.size()) bad_value(key, v);
        return r;
    } catch (const std::invalid_argument&) {
        bad_value(key, v);
    } catch (const std::out_of_range&) {
        bad_value(key, v);
    }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) bad_value(key, v);
        return r;
    } catch (const std::invalid_argument&) {
        bad_value(key, v);
    } catch (const std::out_of_range&) {
        bad_value(key, v);
    }
}

double to_dbl(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) bad_value(key, v);
        return r;
    } catch (const std::invalid_argument&) {
        bad_value(key, v);
    } catch (const std::out_of_range&) {
        bad_value(key, v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(key, v);
}

std::vector<double> to_dlist(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(to_dbl(key, trim(part)));
    if (out.empty()) bad_value(key, v);
    return out;
}

std::string fmt_int(long long v) { return std::to_string(v); }

std::string fmt_dbl(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_flt(float v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt_dlist(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt_dbl(v[i]);
    }
    return out;
}

std::string hex_hash(uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

explain::ImportanceMethod method_from_string(const std::string& s) {
    if (s == "attention") return explain::ImportanceMethod::attention;
    if (s == "grad_sam") return explain::ImportanceMethod::grad_sam;
    if (s == "averaged") return explain::ImportanceMethod::averaged;
    throw std::invalid_argument("cli: unknown importance method '" + s + "'");
}

// ---- config key registry ----

struct KeyDef {
    std::string name;  // "section.key"; top-level keys carry no dot
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::vector<KeyDef> build_key_table() {
    std::vector<KeyDef> t;
    auto add = [&t](const char* name, std::function<void(RunConfig&, const std::string&)> set,
                    std::function<std::string(const RunConfig&)> get) {
        t.push_back({name, std::move(set), std::move(get)});
    };
    auto add_int = [&](const char* name, auto member) {
        add(
            name,
            [name, member](RunConfig& c, const std::string& v) {
                *member(c) = static_cast<int>(to_ll(name, v));
            },
            [member](const RunConfig& c) {
                return fmt_int(*member(const_cast<RunConfig&>(c)));
            });
    };
    auto add_dbl = [&](const char* name, auto member) {
        add(
            name,
            [name, member](RunConfig& c, const std::string& v) { *member(c) = to_dbl(name, v); },
            [member](const RunConfig& c) {
                return fmt_dbl(*member(const_cast<RunConfig&>(c)));
            });
    };
    auto add_flt = [&](const char* name, auto member) {
        add(
            name,
            [name, member](RunConfig& c, const std::string& v) {
                *member(c) = static_cast<float>(to_dbl(name, v));
            },
            [member](const RunConfig& c) {
                return fmt_flt(*member(const_cast<RunConfig&>(c)));
            });
    };

    add(
        "seed",
        [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
        [](const RunConfig& c) { return std::to_string(c.seed); });

    // [data]
    add_int("data.users", [](RunConfig& c) { return &c.world.n_users; });
    add_int("data.items", [](RunConfig& c) { return &c.world.n_items; });
    add_int("data.products", [](RunConfig& c) { return &c.world.n_products; });
    add_int("data.days", [](RunConfig& c) { return &c.world.n_days; });
    add_int("data.latent_dim", [](RunConfig& c) { return &c.world.latent_dim; });
    add_int("data.fm_dim", [](RunConfig& c) { return &c.world.fm_dim; });
    add_dbl("data.opt_out_fraction", [](RunConfig& c) { return &c.world.opt_out_fraction; });
    add_dbl("data.sessions_per_week", [](RunConfig& c) { return &c.world.sessions_per_week; });
    add_dbl("data.click_base", [](RunConfig& c) { return &c.world.click_base; });
    add_dbl("data.click_affinity", [](RunConfig& c) { return &c.world.click_affinity; });
    add_dbl("data.recency_boost", [](RunConfig& c) { return &c.world.recency_boost; });
    add_int("data.recency_days", [](RunConfig& c) { return &c.world.recency_days; });
    add_dbl("data.conversions_per_user",
            [](RunConfig& c) { return &c.world.conversions_per_user; });
    add_dbl("data.external_fraction", [](RunConfig& c) { return &c.world.external_fraction; });
    add_dbl("data.click_before_conversion",
            [](RunConfig& c) { return &c.world.click_before_conversion; });
    add_dbl("data.motif_fraction", [](RunConfig& c) { return &c.world.motif_fraction; });
    add(
        "data.product_share",
        [](RunConfig& c, const std::string& v) {
            c.world.product_share = to_dlist("data.product_share", v);
        },
        [](const RunConfig& c) { return fmt_dlist(c.world.product_share); });
    add_int("data.layout_variants", [](RunConfig& c) { return &c.world.layout_variants; });
    add_int("data.enrollment_universe",
            [](RunConfig& c) { return &c.world.enrollment_universe; });
    add_int("data.session_gap_minutes", [](RunConfig& c) { return &c.session_gap_minutes; });
    add_int("data.train_days", [](RunConfig& c) { return &c.split.train_days; });
    add_int("data.val_days", [](RunConfig& c) { return &c.split.val_days; });
    add_int("data.test_days", [](RunConfig& c) { return &c.split.test_days; });
    add_dbl("data.negative_ratio", [](RunConfig& c) { return &c.negative_ratio; });
    add_int("data.pca_dim", [](RunConfig& c) { return &c.pca_dim; });

    // [model]
    add_int("model.n_layers", [](RunConfig& c) { return &c.net.n_layers; });
    add_int("model.d_embed", [](RunConfig& c) { return &c.net.d_embed; });
    add_int("model.d_hidden", [](RunConfig& c) { return &c.net.d_hidden; });
    add_int("model.n_heads", [](RunConfig& c) { return &c.net.n_heads; });
    add_int("model.ffn_mult", [](RunConfig& c) { return &c.net.ffn_mult; });
    add_int("model.head_hidden", [](RunConfig& c) { return &c.net.head_hidden; });
    add_flt("model.dropout", [](RunConfig& c) { return &c.net.dropout; });
    add_int("model.max_len", [](RunConfig& c) { return &c.net.max_len; });

    // [train]
    add_int("train.epochs", [](RunConfig& c) { return &c.trainer.epochs; });
    add_int("train.batch_size", [](RunConfig& c) { return &c.trainer.batch_size; });
    add_flt("train.lr", [](RunConfig& c) { return &c.trainer.lr; });
    add_flt("train.weight_decay", [](RunConfig& c) { return &c.trainer.weight_decay; });
    add(
        "train.dropout",
        [](RunConfig& c, const std::string& v) {
            c.trainer.dropout = to_bool("train.dropout", v);
        },
        [](const RunConfig& c) { return c.trainer.dropout ? "true" : "false"; });
    add_int("train.progress_every", [](RunConfig& c) { return &c.trainer.progress_every; });

    // [finetune]
    add(
        "finetune.mode",
        [](RunConfig& c, const std::string& v) {
            c.ft.mode = adapt::finetune_mode_from_string(v);
        },
        [](const RunConfig& c) { return adapt::to_string(c.ft.mode); });
    add_int("finetune.rank", [](RunConfig& c) { return &c.ft.lora.rank; });
    add_flt("finetune.alpha", [](RunConfig& c) { return &c.ft.lora.alpha; });
    add(
        "finetune.product",
        [](RunConfig& c, const std::string& v) {
            c.ft.product = static_cast<int16_t>(to_ll("finetune.product", v));
        },
        [](const RunConfig& c) { return fmt_int(c.ft.product); });
    add_int("finetune.epochs", [](RunConfig& c) { return &c.ft.trainer.epochs; });
    add_int("finetune.batch_size", [](RunConfig& c) { return &c.ft.trainer.batch_size; });
    add_flt("finetune.lr", [](RunConfig& c) { return &c.ft.trainer.lr; });

    // [rank]
    add_dbl("rank.lambda_us", [](RunConfig& c) { return &c.weights.lambda_us; });
    add_dbl("rank.lambda_ctr", [](RunConfig& c) { return &c.weights.lambda_ctr; });
    add_dbl("rank.lambda_cvr", [](RunConfig& c) { return &c.weights.lambda_cvr; });
    add_int("rank.slate_size", [](RunConfig& c) { return &c.slate_size; });

    // [sweep]
    add_int("sweep.grid", [](RunConfig& c) { return &c.sweep.grid; });
    add_dbl("sweep.lambda_max", [](RunConfig& c) { return &c.sweep.lambda_max; });
    add_int("sweep.top_n", [](RunConfig& c) { return &c.sweep.top_n; });

    // [explain]
    add(
        "explain.method",
        [](RunConfig& c, const std::string& v) { c.ex.method = method_from_string(v); },
        [](const RunConfig& c) { return explain::to_string(c.ex.method); });
    add_int("explain.sequences", [](RunConfig& c) { return &c.ex.sequences; });

    // [serve]
    add_int("serve.duration_ms", [](RunConfig& c) { return &c.serve.duration_ms; });
    add_int("serve.threads", [](RunConfig& c) { return &c.serve.threads; });
    add_int("serve.candidates", [](RunConfig& c) { return &c.serve.candidates; });
    add_int("serve.max_requests", [](RunConfig& c) { return &c.serve.max_requests; });
    add(
        "serve.user",
        [](RunConfig& c, const std::string& v) {
            c.serve.user = static_cast<int32_t>(to_ll("serve.user", v));
        },
        [](const RunConfig& c) { return fmt_int(c.serve.user); });

    return t;
}

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> t = build_key_table();
    return t;
}

const std::map<std::string, size_t>& key_index() {
    static const std::map<std::string, size_t> idx = [] {
        std::map<std::string, size_t> m;
        for (size_t i = 0; i < key_table().size(); ++i) m[key_table()[i].name] = i;
        return m;
    }();
    return idx;
}

void set_key(RunConfig& cfg, const std::string& name, const std::string& value) {
    auto it = key_index().find(name);
    if (it == key_index().end())
        throw std::invalid_argument("cli: unknown config key '" + name + "'");
    key_table()[it->second].set(cfg, value);
}

// ---- binary dataset io ----

constexpr const char* kDatasetMagic = "#fintrec-dataset v1\n";

struct BinWriter {
    std::ofstream f;

    explicit BinWriter(const std::string& path) : f(path, std::ios::binary) {
        if (!f) throw std::runtime_error("cli: cannot open '" + path + "' for writing");
    }
    void raw(const void* p, size_t n) { f.write(static_cast<const char*>(p), n); }
    template <class T>
    void num(T v) {
        raw(&v, sizeof v);
    }
    template <class T>
    void vec(const std::vector<T>& v) {
        num<uint32_t>(static_cast<uint32_t>(v.size()));
        if (!v.empty()) raw(v.data(), v.size() * sizeof(T));
    }
};

struct BinReader {
    std::ifstream f;
    std::string path;

    explicit BinReader(const std::string& p) : f(p, std::ios::binary), path(p) {
        if (!f) throw std::runtime_error("cli: cannot open '" + p + "' for reading");
    }
    void raw(void* p, size_t n) {
        f.read(static_cast<char*>(p), n);
        if (static_cast<size_t>(f.gcount()) != n)
            throw std::runtime_error("cli: truncated dataset artifact '" + path + "'");
    }
    template <class T>
    T num() {
        T v{};
        raw(&v, sizeof v);
        return v;
    }
    template <class T>
    std::vector<T> vec() {
        auto n = num<uint32_t>();
        std::vector<T> v(n);
        if (n) raw(v.data(), n * sizeof(T));
        return v;
    }
};

void write_profile(BinWriter& w, const UserProfile& p) {
    w.num<int32_t>(p.user_id);
    w.num<uint8_t>(p.opt_out ? 1 : 0);
    w.num<uint64_t>(p.fm_seed);
    w.num<float>(p.activity);
    w.vec(p.enrollments);
    w.vec(p.tenure_days);
    w.vec(p.latent);
}

UserProfile read_profile(BinReader& r) {
    UserProfile p;
    p.user_id = r.num<int32_t>();
    p.opt_out = r.num<uint8_t>() != 0;
    p.fm_seed = r.num<uint64_t>();
    p.activity = r.num<float>();
    p.enrollments = r.vec<uint8_t>();
    p.tenure_days = r.vec<float>();
    p.latent = r.vec<float>();
    return p;
}

void write_sequence(BinWriter& w, const sequence::UserSequence& s) {
    w.num<int32_t>(s.user_id);
    w.num<int32_t>(s.split);
    w.vec(s.tokens);
    w.vec(s.ts_ms);
    w.vec(s.day);
    w.vec(s.temporal.dayofweek);
    w.vec(s.temporal.weekofmonth);
    w.vec(s.temporal.hourofday);
    w.vec(s.temporal.monthofyear);
    w.vec(s.temporal.delta);
    w.raw(s.fd.data(), s.fd.size() * sizeof(float));
    w.vec(s.label_pos);
    w.vec(s.label_item);
    w.num<float>(s.cvr_label);
    w.num<int32_t>(s.endpoint_item);
    w.num<int64_t>(s.endpoint_ms);
    w.num<int16_t>(s.product_id);
}

sequence::UserSequence read_sequence(BinReader& r) {
    sequence::UserSequence s;
    s.user_id = r.num<int32_t>();
    s.split = r.num<int32_t>();
    s.tokens = r.vec<int32_t>();
    s.ts_ms = r.vec<int64_t>();
    s.day = r.vec<uint16_t>();
    s.temporal.dayofweek = r.vec<uint8_t>();
    s.temporal.weekofmonth = r.vec<uint8_t>();
    s.temporal.hourofday = r.vec<uint8_t>();
    s.temporal.monthofyear = r.vec<uint8_t>();
    s.temporal.delta = r.vec<uint8_t>();
    r.raw(s.fd.data(), s.fd.size() * sizeof(float));
    s.label_pos = r.vec<int32_t>();
    s.label_item = r.vec<int32_t>();
    s.cvr_label = r.num<float>();
    s.endpoint_item = r.num<int32_t>();
    s.endpoint_ms = r.num<int64_t>();
    s.product_id = r.num<int16_t>();
    return s;
}

// ---- report plumbing ----

void write_summary(const std::string& path, uint64_t hash,
                   const std::vector<std::pair<std::string, std::string>>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cli: cannot open '" + path + "' for writing");
    f << "# config_hash=" << hex_hash(hash) << "\n";
    for (const auto& [k, v] : rows) f << k << " = " << v << "\n";
}

void write_effective_config(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out);
    Paths p{cfg.out};
    std::ofstream f(p.effective_config());
    if (!f) throw std::runtime_error("cli: cannot open '" + p.effective_config() + "'");
    f << "# config_hash=" << hex_hash(config_hash(cfg)) << "\n" << dump_config(cfg);
}

// ---- svg curves ----

struct Series {
    std::string name;
    std::vector<double> xs, ys;
};

void write_svg_curves(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series, uint64_t cfg_hash) {
    constexpr double x0 = 70, x1 = 680, y0 = 420, y1 = 50;  // plot region, y grows up
    double lo_x = 0, hi_x = 1, lo_y = 0, hi_y = 1;
    bool any = false;
    for (const auto& s : series)
        for (size_t i = 0; i < s.xs.size(); ++i) {
            if (!any) {
                lo_x = hi_x = s.xs[i];
                lo_y = hi_y = s.ys[i];
                any = true;
            }
            lo_x = std::min(lo_x, s.xs[i]);
            hi_x = std::max(hi_x, s.xs[i]);
            lo_y = std::min(lo_y, s.ys[i]);
            hi_y = std::max(hi_y, s.ys[i]);
        }
    if (hi_x <= lo_x) hi_x = lo_x + 1;
    if (hi_y <= lo_y) hi_y = lo_y + 1;
    auto px = [&](double x) { return x0 + (x - lo_x) / (hi_x - lo_x) * (x1 - x0); };
    auto py = [&](double y) { return y0 + (y - lo_y) / (hi_y - lo_y) * (y1 - y0); };
    const char* colors[] = {"#4682b4", "#ff8c00", "#2e8b57", "#b22222"};

    std::ofstream f(path);
    if (!f) throw std::runtime_error("cli: cannot open '" + path + "' for writing");
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
         "viewBox=\"0 0 720 480\">\n";
    f << "  <desc>config_hash=" << hex_hash(cfg_hash) << "</desc>\n";
    f << "  <rect width=\"720\" height=\"480\" fill=\"white\"/>\n";
    f << "  <text x=\"360\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
    f << "  <text x=\"375\" y=\"460\" text-anchor=\"middle\" font-size=\"12\">" << xlabel
      << "</text>\n";
    f << "  <text x=\"18\" y=\"235\" text-anchor=\"middle\" font-size=\"12\" "
         "transform=\"rotate(-90 18 235)\">"
      << ylabel << "</text>\n";
    f << "  <line x1=\"70\" y1=\"420\" x2=\"680\" y2=\"420\" stroke=\"black\"/>\n";
    f << "  <line x1=\"70\" y1=\"50\" x2=\"70\" y2=\"420\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double fx = lo_x + (hi_x - lo_x) * i / 4.0;
        double fy = lo_y + (hi_y - lo_y) * i / 4.0;
        char lbl[32];
        std::snprintf(lbl, sizeof lbl, "%.3g", fx);
        f << "  <text x=\"" << px(fx) << "\" y=\"436\" text-anchor=\"middle\" font-size=\"10\">"
          << lbl << "</text>\n";
        std::snprintf(lbl, sizeof lbl, "%.3g", fy);
        f << "  <text x=\"64\" y=\"" << py(fy) + 3
          << "\" text-anchor=\"end\" font-size=\"10\">" << lbl << "</text>\n";
    }
    int ci = 0;
    for (const auto& s : series) {
        const char* color = colors[ci % 4];
        if (s.xs.size() > 1) {
            f << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" "
                 "points=\"";
            for (size_t i = 0; i < s.xs.size(); ++i)
                f << px(s.xs[i]) << "," << py(s.ys[i]) << " ";
            f << "\"/>\n";
        }
        for (size_t i = 0; i < s.xs.size(); ++i)
            f << "  <circle cx=\"" << px(s.xs[i]) << "\" cy=\"" << py(s.ys[i])
              << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        f << "  <text x=\"676\" y=\"" << 64 + 16 * ci << "\" text-anchor=\"end\" "
             "font-size=\"11\" fill=\""
          << color << "\">" << s.name << "</text>\n";
        ++ci;
    }
    f << "</svg>\n";
}

// ---- model checkpoint manifests ----

json config_to_json(const model::TransformerConfig& cfg) {
    return json{{"n_layers", cfg.n_layers},       {"d_embed", cfg.d_embed},
                {"d_hidden", cfg.d_hidden},       {"n_heads", cfg.n_heads},
                {"ffn_mult", cfg.ffn_mult},       {"head_hidden", cfg.head_hidden},
                {"dropout", cfg.dropout},         {"vocab_size", cfg.vocab_size},
                {"n_items", cfg.n_items},         {"max_len", cfg.max_len},
                {"fm_dim", cfg.fm_dim},           {"static_dim", cfg.static_dim},
                {"head", cfg.head == model::HeadKind::pctr ? "pctr" : "pcvr"}};
}

model::TransformerConfig config_from_json(const json& j) {
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
    cfg.head = j.at("head").get<std::string>() == "pcvr" ? model::HeadKind::pcvr
                                                         : model::HeadKind::pctr;
    return cfg;
}

// ---- shared forward helpers ----

std::vector<int> widen(const std::vector<uint8_t>& v) { return {v.begin(), v.end()}; }

// Stable softmax over one logits row, in double.
std::vector<double> softmax_row(const float* row, int n) {
    double mx = row[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(row[i]));
    std::vector<double> p(n);
    double z = 0;
    for (int i = 0; i < n; ++i) {
        p[i] = std::exp(row[i] - mx);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

// Ranked item ids (best first) for one logits row; ties on ascending id.
std::vector<int> top_items(const float* row, int n, int k) {
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) ids[i] = i;
    k = std::min(k, n);
    std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&](int a, int b) {
        if (row[a] != row[b]) return row[a] > row[b];
        return a < b;
    });
    ids.resize(k);
    return ids;
}

std::unordered_map<int32_t, const UserProfile*> profile_index(
    const std::vector<UserProfile>& profiles) {
    std::unordered_map<int32_t, const UserProfile*> m;
    m.reserve(profiles.size());
    for (const auto& p : profiles) m[p.user_id] = &p;
    return m;
}

// Inputs plus the sequences they came from, for reports that need user ids.
std::pair<std::vector<model::ModelInput>, std::vector<const sequence::UserSequence*>>
inputs_with_sources(const Dataset& ds, model::HeadKind head, int split,
                    const model::TransformerConfig& cfg) {
    auto index = profile_index(ds.profiles);
    const auto& pool = head == model::HeadKind::pctr ? ds.ctr : ds.cvr;
    std::pair<std::vector<model::ModelInput>, std::vector<const sequence::UserSequence*>> out;
    for (const auto& seq : pool) {
        if (seq.split != split) continue;
        auto it = index.find(seq.user_id);
        if (it == index.end()) continue;
        out.first.push_back(model::make_input(seq, *it->second, ds.ctx, cfg));
        out.second.push_back(&seq);
    }
    return out;
}

datagen::World load_world_artifacts(const RunConfig& cfg, bool need_events) {
    Paths p{cfg.out};
    datagen::World w;
    w.config = cfg.world;
    if (need_events) {
        require_artifact(p.events(), "generate");
        w.events = read_events(p.events());
    }
    require_artifact(p.profiles(), "generate");
    require_artifact(p.catalog(), "generate");
    w.profiles = read_profiles(p.profiles());
    w.catalog = read_catalog(p.catalog());
    return w;
}

}  // namespace

// ---- RunConfig ----

void RunConfig::finalize() {
    world.seed = seed;
    trainer.seed = seed;
    ft.trainer.seed = seed;
    net.fm_dim = world.fm_dim;
    net.static_dim = 2 * world.enrollment_universe;
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    static const std::vector<std::string> sections = {"data",  "model",   "train", "finetune",
                                                      "rank",  "sweep",   "explain", "serve"};
    std::string section;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw std::invalid_argument("cli: malformed section header at line " +
                                            std::to_string(lineno) + ": " + s);
            section = trim(s.substr(1, s.size() - 2));
            if (std::find(sections.begin(), sections.end(), section) == sections.end())
                throw std::invalid_argument("cli: unknown config section '[" + section + "]'");
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("cli: malformed config line " + std::to_string(lineno) +
                                        ": " + s);
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        std::string full = section.empty() ? key : section + "." + key;
        set_key(cfg, full, value);
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cli: cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("cli: override must look like section.key=value, got '" +
                                    assignment + "'");
    set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string dump_config(const RunConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& def : key_table()) {
        size_t dot = def.name.find('.');
        std::string sec = dot == std::string::npos ? "" : def.name.substr(0, dot);
        std::string key = dot == std::string::npos ? def.name : def.name.substr(dot + 1);
        if (sec != section) {
            out += "\n[" + sec + "]\n";
            section = sec;
        }
        out += key + " = " + def.get(cfg) + "\n";
    }
    return out;
}

uint64_t config_hash(const RunConfig& cfg) {
    std::string dump = dump_config(cfg);
    return fnv1a64(dump.data(), dump.size());
}

// ---- artifacts ----

std::string Paths::adapter(adapt::FinetuneMode mode) const {
    return out + "/adapter_" + adapt::to_string(mode) + ".ckpt";
}

void require_artifact(const std::string& path, const std::string& producer) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error("cli: missing artifact '" + path + "'; run `fintrec " +
                                 producer + "` first");
}

// ---- dataset ----

Dataset build_dataset(const datagen::World& world, const RunConfig& cfg) {
    Dataset ds;
    ds.config_hash = config_hash(cfg);
    ds.n_items = static_cast<int>(world.catalog.items.size());

    auto log = pipeline::sessionize(world.events, cfg.session_gap_minutes);
    ds.bounds = pipeline::compute_split_bounds(log, cfg.split);
    auto rules = pipeline::attribution_rules(world.catalog);
    auto attr = pipeline::attribute_conversions(log, rules, cfg.negative_ratio, cfg.seed);
    pipeline::temporal_split(attr.windows, ds.bounds);
    auto ctr_windows = pipeline::extract_click_windows(log, ds.bounds, cfg.net.max_len);
    pipeline::filter_opt_outs(attr.windows, ctr_windows, log, world.profiles, world.catalog);

    ds.vocab = pipeline::build_vocab(log, ds.bounds.train_end_ms);
    ds.ctx = pipeline::fit_context_transformer(log, world.profiles, ds.bounds.train_end_ms,
                                               cfg.world.fm_dim);
    ds.cvr = sequence::assemble_cvr(log, attr.windows, ds.vocab, ds.ctx, cfg.net.max_len);
    ds.ctr = sequence::assemble_ctr(log, ctr_windows, ds.vocab, ds.ctx, cfg.net.max_len);
    ds.profiles = world.profiles;

    // Daily-embedding reduction for engineered-feature baselines, fitted on
    // the last training day so no validation embedding leaks in.
    int out_dim = std::min(cfg.pca_dim, cfg.world.fm_dim);
    std::vector<float> X;
    X.reserve(world.profiles.size() * cfg.world.fm_dim);
    for (const auto& p : world.profiles) {
        auto row = ds.ctx.fm(p, ds.bounds.train_end_ms - 1);
        X.insert(X.end(), row.begin(), row.end());
    }
    ds.pca = pca_fit(X, static_cast<int>(world.profiles.size()), cfg.world.fm_dim, out_dim);
    return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
    BinWriter w(path);
    w.raw(kDatasetMagic, std::strlen(kDatasetMagic));
    w.num<uint64_t>(ds.config_hash);
    w.num<int64_t>(ds.bounds.start_ms);
    w.num<int64_t>(ds.bounds.train_end_ms);
    w.num<int64_t>(ds.bounds.val_end_ms);
    w.num<int64_t>(ds.bounds.test_end_ms);
    w.num<int32_t>(ds.n_items);

    w.num<uint32_t>(static_cast<uint32_t>(ds.vocab.size()));
    for (int id = pipeline::TokenVocabulary::kFirstTuple; id < ds.vocab.size(); ++id)
        w.raw(ds.vocab.id_to_tuple[id].data(), 4 * sizeof(uint16_t));

    w.num<int32_t>(ds.ctx.fm_dim);
    w.num<int32_t>(ds.ctx.enrollment_universe);
    w.num<float>(ds.ctx.tenure_mean);
    w.num<float>(ds.ctx.tenure_std);
    w.raw(ds.ctx.dyn_mean.data(), ds.ctx.dyn_mean.size() * sizeof(float));
    w.raw(ds.ctx.dyn_std.data(), ds.ctx.dyn_std.size() * sizeof(float));

    w.num<int32_t>(ds.pca.in_dim);
    w.num<int32_t>(ds.pca.out_dim);
    w.num<float>(ds.pca.total_variance);
    w.vec(ds.pca.mean);
    w.vec(ds.pca.components);
    w.vec(ds.pca.variance);

    w.num<uint32_t>(static_cast<uint32_t>(ds.profiles.size()));
    for (const auto& p : ds.profiles) write_profile(w, p);
    w.num<uint32_t>(static_cast<uint32_t>(ds.ctr.size()));
    for (const auto& s : ds.ctr) write_sequence(w, s);
    w.num<uint32_t>(static_cast<uint32_t>(ds.cvr.size()));
    for (const auto& s : ds.cvr) write_sequence(w, s);
    if (!w.f) throw std::runtime_error("cli: failed writing dataset artifact '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
    BinReader r(path);
    std::string magic(std::strlen(kDatasetMagic), '\0');
    r.raw(magic.data(), magic.size());
    if (magic != kDatasetMagic)
        throw std::runtime_error("cli: '" + path + "' is not a dataset artifact");
    Dataset ds;
    ds.config_hash = r.num<uint64_t>();
    ds.bounds.start_ms = r.num<int64_t>();
    ds.bounds.train_end_ms = r.num<int64_t>();
    ds.bounds.val_end_ms = r.num<int64_t>();
    ds.bounds.test_end_ms = r.num<int64_t>();
    ds.n_items = r.num<int32_t>();

    auto vocab_size = r.num<uint32_t>();
    ds.vocab.id_to_tuple.assign(vocab_size, {0, 0, 0, 0});
    for (uint32_t id = pipeline::TokenVocabulary::kFirstTuple; id < vocab_size; ++id) {
        std::array<uint16_t, 4> t{};
        r.raw(t.data(), 4 * sizeof(uint16_t));
        ds.vocab.id_to_tuple[id] = t;
        ds.vocab.tuple_to_id[t] = static_cast<int>(id);
    }

    ds.ctx.fm_dim = r.num<int32_t>();
    ds.ctx.enrollment_universe = r.num<int32_t>();
    ds.ctx.tenure_mean = r.num<float>();
    ds.ctx.tenure_std = r.num<float>();
    r.raw(ds.ctx.dyn_mean.data(), ds.ctx.dyn_mean.size() * sizeof(float));
    r.raw(ds.ctx.dyn_std.data(), ds.ctx.dyn_std.size() * sizeof(float));

    ds.pca.in_dim = r.num<int32_t>();
    ds.pca.out_dim = r.num<int32_t>();
    ds.pca.total_variance = r.num<float>();
    ds.pca.mean = r.vec<float>();
    ds.pca.components = r.vec<float>();
    ds.pca.variance = r.vec<float>();

    auto n_profiles = r.num<uint32_t>();
    ds.profiles.reserve(n_profiles);
    for (uint32_t i = 0; i < n_profiles; ++i) ds.profiles.push_back(read_profile(r));
    auto n_ctr = r.num<uint32_t>();
    ds.ctr.reserve(n_ctr);
    for (uint32_t i = 0; i < n_ctr; ++i) ds.ctr.push_back(read_sequence(r));
    auto n_cvr = r.num<uint32_t>();
    ds.cvr.reserve(n_cvr);
    for (uint32_t i = 0; i < n_cvr; ++i) ds.cvr.push_back(read_sequence(r));
    return ds;
}

std::vector<model::ModelInput> dataset_inputs(const Dataset& ds, model::HeadKind head,
                                              int split,
                                              const model::TransformerConfig& cfg) {
    return inputs_with_sources(ds, head, split, cfg).first;
}

model::TransformerConfig resolve_net(const RunConfig& cfg, const Dataset& ds,
                                     model::HeadKind head) {
    model::TransformerConfig net = cfg.net;
    net.vocab_size = ds.vocab.size();
    net.n_items = ds.n_items;
    net.fm_dim = ds.ctx.fm_dim;
    net.static_dim = ds.ctx.static_dim();
    net.head = head;
    return net;
}

// ---- checkpoints ----

void save_model(const std::string& path, const model::FinTRecModel& m, uint64_t cfg_hash) {
    Checkpoint ck;
    ck.kind = "model";
    json meta;
    meta["config"] = config_to_json(m.config());
    meta["config_hash"] = cfg_hash;
    ck.meta = meta.dump();
    ck.params = m.params();
    save_checkpoint(path, ck);
}

model::FinTRecModel load_model(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "model")
        throw std::runtime_error("cli: '" + path + "' is a " + ck.kind +
                                 " checkpoint, not a model");
    json meta = json::parse(ck.meta);
    auto cfg = config_from_json(meta.at("config"));
    return model::FinTRecModel::from_params(cfg, std::move(ck.params));
}

// ---- evaluation ----

PctrEval eval_pctr(const model::FinTRecModel& m,
                   const std::vector<model::ModelInput>& inputs) {
    PctrEval ev;
    int n_items = m.config().n_items;
    int kmax = std::min(10, n_items);
    std::array<int, 10> hits{};
    for (const auto& in : inputs) {
        if (in.label_pos.empty()) continue;
        Tensor logits = m.pctr_logits(in);
        const auto& d = logits.data();
        for (size_t li = 0; li < in.label_pos.size(); ++li) {
            const float* row = d.data() + static_cast<size_t>(in.label_pos[li]) * n_items;
            auto ranked = top_items(row, n_items, kmax);
            ++ev.labels;
            for (int k = 0; k < kmax; ++k)
                if (ranked[k] == in.label_item[li]) {
                    for (int j = k; j < 10; ++j) ++hits[j];
                    break;
                }
        }
    }
    if (ev.labels > 0) {
        for (int k = 0; k < 10; ++k) ev.at[k] = static_cast<double>(hits[k]) / ev.labels;
        ev.recall1 = ev.at[0];
        ev.recall5 = ev.at[std::min(5, kmax) - 1];
        ev.recall10 = ev.at[kmax - 1];
    }
    return ev;
}

PcvrEval eval_pcvr(const model::FinTRecModel& m,
                   const std::vector<model::ModelInput>& inputs) {
    PcvrEval ev;
    ev.probs.reserve(inputs.size());
    for (const auto& in : inputs) {
        ev.probs.push_back(m.pcvr_prob(in).data()[0]);
        ev.labels.push_back(in.cvr_label);
        ev.items.push_back(in.endpoint_item);
    }
    ev.logloss = ranksim::log_loss(ev.probs, ev.labels);
    try {
        ev.auroc = ranksim::auroc(ev.probs, ev.labels);
    } catch (const std::exception&) {
        ev.auroc = std::numeric_limits<double>::quiet_NaN();
    }
    return ev;
}

// ---- leave-product-out assembly ----

LpoData build_lpo(const datagen::World& world, const RunConfig& cfg) {
    LpoData out;
    auto log = pipeline::sessionize(world.events, cfg.session_gap_minutes);
    auto bounds = pipeline::compute_split_bounds(log, cfg.split);

    out.vocab = adapt::pretrain_vocab(log, bounds.train_end_ms, cfg.ft.product);
    pipeline::TokenVocabulary base_vocab = out.vocab;
    out.base_vocab_size = base_vocab.size();
    out.new_tokens = adapt::extend_vocab_with_product(out.vocab, log, bounds.train_end_ms,
                                                      cfg.ft.product);

    auto ctx = pipeline::fit_context_transformer(log, world.profiles, bounds.train_end_ms,
                                                 cfg.world.fm_dim);
    auto windows = pipeline::extract_click_windows(log, bounds, cfg.net.max_len);
    std::vector<pipeline::CvrWindow> no_cvr;
    pipeline::filter_opt_outs(no_cvr, windows, log, world.profiles, world.catalog);
    auto split = adapt::leave_product_out(windows, world.catalog, cfg.ft.product);

    for (const auto& item : world.catalog.items)
        if (item.product_id == cfg.ft.product) out.product_items.push_back(item.item_id);
    out.new_item_count = static_cast<int>(out.product_items.size());

    model::TransformerConfig net = cfg.net;
    net.vocab_size = out.base_vocab_size;
    net.n_items = static_cast<int>(world.catalog.items.size());
    net.fm_dim = ctx.fm_dim;
    net.static_dim = ctx.static_dim();
    net.head = model::HeadKind::pctr;

    auto index = profile_index(world.profiles);
    auto emit = [&](const std::vector<pipeline::CtrWindow>& ws,
                    const pipeline::TokenVocabulary& vocab, bool remap,
                    std::vector<model::ModelInput>& train_out,
                    std::vector<model::ModelInput>& val_out) {
        auto seqs = sequence::assemble_ctr(log, ws, vocab, ctx, cfg.net.max_len);
        for (const auto& seq : seqs) {
            auto it = index.find(seq.user_id);
            if (it == index.end()) continue;
            auto in = model::make_input(seq, *it->second, ctx, net);
            if (remap) {
                // Adaptation windows can still carry labels for pretraining
                // products; the product-local head only represents the held-out
                // items, so keep those labels and remap them to dense indices.
                std::vector<int> pos, item;
                for (size_t li = 0; li < in.label_item.size(); ++li) {
                    auto lo = std::lower_bound(out.product_items.begin(),
                                               out.product_items.end(), in.label_item[li]);
                    if (lo == out.product_items.end() || *lo != in.label_item[li]) continue;
                    pos.push_back(in.label_pos[li]);
                    item.push_back(static_cast<int>(lo - out.product_items.begin()));
                }
                if (pos.empty()) continue;
                in.label_pos = std::move(pos);
                in.label_item = std::move(item);
            }
            if (seq.split == pipeline::kTrain)
                train_out.push_back(std::move(in));
            else if (seq.split == pipeline::kVal)
                val_out.push_back(std::move(in));
        }
    };
    emit(split.pretrain, base_vocab, false, out.pre_train, out.pre_val);
    emit(split.adapt, out.vocab, true, out.adapt_train, out.adapt_val);
    return out;
}

// ---- scoring harness ----

FeatureStore build_feature_store(const pipeline::SessionizedLog& log,
                                 const std::vector<UserProfile>& profiles,
                                 const pipeline::TokenVocabulary& vocab,
                                 const pipeline::ContextTransformer& ctx, int max_len,
                                 int64_t at_ms) {
    FeatureStore store;
    store.built_ms = at_ms;
    store.fm_dim = ctx.fm_dim;
    for (const auto& profile : profiles) {
        auto slot = log.user_slot.find(profile.user_id);
        if (slot == log.user_slot.end()) continue;
        auto [begin, end] = log.user_spans[slot->second];

        UserFeatures uf;
        int32_t session = -1;
        int64_t session_start = 0;
        size_t last_session_begin = begin;
        for (size_t i = begin; i < end; ++i) {
            const Event& e = log.events[i];
            if (e.ts >= at_ms) break;
            if (e.session_id != session) {
                if (session != -1) {
                    uf.tokens.push_back(pipeline::TokenVocabulary::kSessionBreak);
                    uf.ts_ms.push_back(e.ts);
                }
                session = e.session_id;
                session_start = e.ts;
                last_session_begin = i;
            }
            uf.tokens.push_back(vocab.lookup(e));
            uf.ts_ms.push_back(e.ts);
        }
        if (uf.tokens.empty()) continue;
        if (static_cast<int>(uf.tokens.size()) > max_len) {
            size_t drop = uf.tokens.size() - max_len;
            uf.tokens.erase(uf.tokens.begin(), uf.tokens.begin() + drop);
            uf.ts_ms.erase(uf.ts_ms.begin(), uf.ts_ms.begin() + drop);
        }
        uf.day.reserve(uf.ts_ms.size());
        for (int64_t ts : uf.ts_ms)
            uf.day.push_back(static_cast<uint16_t>(ts / kDayMs));
        uf.fm_rows.reserve(uf.ts_ms.size() * ctx.fm_dim);
        for (int64_t ts : uf.ts_ms) {
            auto row = ctx.fm(profile, ts);
            uf.fm_rows.insert(uf.fm_rows.end(), row.begin(), row.end());
        }
        uf.fm_day = ctx.fm(profile, at_ms);
        uf.fs = ctx.user_static(profile);

        // Latest session's standardized dynamic aggregate, mirroring the
        // conversion-sequence endpoint feature.
        int count = 0;
        for (size_t i = last_session_begin; i < end; ++i) {
            const Event& e = log.events[i];
            if (e.ts >= at_ms) break;
            auto d = ctx.event_dynamic(e, session_start);
            for (size_t k = 0; k < d.size(); ++k) uf.fd[k] += d[k];
            ++count;
        }
        if (count > 0)
            for (auto& v : uf.fd) v /= static_cast<float>(count);
        store.users.emplace(profile.user_id, std::move(uf));
    }
    return store;
}

Scorer::Scorer(model::FinTRecModel pctr, model::FinTRecModel pcvr, Catalog catalog,
               ranksim::RankingWeights weights, FeatureStore store)
    : pctr_(std::move(pctr)),
      pcvr_(std::move(pcvr)),
      catalog_(std::move(catalog)),
      weights_(weights),
      store_(std::move(store)) {}

std::vector<int32_t> Scorer::known_users() const {
    std::vector<int32_t> out;
    out.reserve(store_.users.size());
    for (const auto& [id, _] : store_.users) out.push_back(id);
    std::sort(out.begin(), out.end());
    return out;
}

ScoreResponse Scorer::score(const ScoreRequest& req) const {
    using clock = std::chrono::steady_clock;
    auto ms_between = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };
    for (int32_t c : req.candidates)
        if (c < 0 || c >= static_cast<int32_t>(catalog_.items.size()))
            throw std::invalid_argument("cli: candidate item " + std::to_string(c) +
                                        " is outside the catalog");

    ScoreResponse resp;
    auto t0 = clock::now();

    // Feature stage: batch-store lookup and input assembly. Cold-start users
    // score against a zero-context sequence (one session marker at the
    // request time) with zeroed context vectors.
    const auto& net = pctr_.config();
    model::ModelInput ctr_in, cvr_in;
    auto it = store_.users.find(req.user_id);
    if (it == store_.users.end()) {
        resp.cold_start = true;
        ctr_in.tokens = {pipeline::TokenVocabulary::kSessionBreak};
        ctr_in.ts_ms = {req.ts_ms};
        ctr_in.fm.assign(net.fm_dim, 0.0f);
        cvr_in.fm.assign(pcvr_.config().fm_dim, 0.0f);
    } else {
        const UserFeatures& uf = it->second;
        ctr_in.tokens = uf.tokens;
        ctr_in.ts_ms = uf.ts_ms;
        ctr_in.fm = uf.fm_rows;
        cvr_in.fm = uf.fm_day;
        cvr_in.fd.assign(uf.fd.begin(), uf.fd.end());
    }
    auto temporal = sequence::temporal_encode(ctr_in.ts_ms);
    ctr_in.dow = widen(temporal.dayofweek);
    ctr_in.wom = widen(temporal.weekofmonth);
    ctr_in.hod = widen(temporal.hourofday);
    ctr_in.moy = widen(temporal.monthofyear);
    ctr_in.delta = widen(temporal.delta);
    ctr_in.fs.assign(net.static_dim, 0.0f);
    if (it != store_.users.end()) ctr_in.fs = it->second.fs;
    cvr_in.tokens = ctr_in.tokens;
    cvr_in.ts_ms = ctr_in.ts_ms;
    cvr_in.dow = ctr_in.dow;
    cvr_in.wom = ctr_in.wom;
    cvr_in.hod = ctr_in.hod;
    cvr_in.moy = ctr_in.moy;
    cvr_in.delta = ctr_in.delta;
    cvr_in.fs = ctr_in.fs;
    if (cvr_in.fd.empty()) cvr_in.fd.assign(pipeline::kDynamicDim, 0.0f);
    auto t1 = clock::now();
    resp.timings.feature_ms = ms_between(t0, t1);

    resp.slate.user_id = req.user_id;
    resp.slate.ts_ms = req.ts_ms;
    if (req.candidates.empty()) return resp;

    // Forward stage: one pass per head; candidates share the sequence.
    Tensor logits = pctr_.pctr_logits(ctr_in);
    const float* last_row =
        logits.data().data() + static_cast<size_t>(ctr_in.len() - 1) * net.n_items;
    auto pctr_prob = softmax_row(last_row, net.n_items);
    double pcvr_prob = pcvr_.pcvr_prob(cvr_in).data()[0];
    auto t2 = clock::now();
    resp.timings.forward_ms = ms_between(t1, t2);

    // Rank stage: blend with the stakeholder constants and sort.
    std::vector<ranksim::Candidate> cands;
    cands.reserve(req.candidates.size());
    for (int32_t c : req.candidates) {
        const ItemInfo& item = catalog_.items[c];
        ranksim::Candidate cand;
        cand.item_id = c;
        cand.pctr = pctr_prob[c];
        cand.pcvr = pcvr_prob;
        cand.us = item.urgency;
        cand.value = item.value;
        cands.push_back(cand);
    }
    resp.slate = ranksim::rank_slate(req.user_id, req.ts_ms, std::move(cands), weights_);
    auto t3 = clock::now();
    resp.timings.rank_ms = ms_between(t2, t3);
    return resp;
}

// ---- latency benchmark ----

BenchReport run_bench(const Scorer& scorer, const std::vector<int32_t>& user_pool,
                      const BenchConfig& cfg) {
    BenchReport report;
    if (cfg.duration_ms <= 0 || cfg.threads <= 0 || user_pool.empty()) return report;
    int n_items = static_cast<int>(scorer.catalog().items.size());
    int k = std::min(cfg.candidates, n_items);
    if (k <= 0) return report;

    using clock = std::chrono::steady_clock;
    auto start = clock::now();
    auto deadline = start + std::chrono::milliseconds(cfg.duration_ms);
    std::atomic<int> issued{0};
    std::mutex merge_mu;
    std::vector<double> latencies;
    StageTimings stage_sum;

    auto worker = [&](int tid) {
        Rng rng = Rng(cfg.seed).fork(0xbe7c + static_cast<uint64_t>(tid));
        std::vector<double> local_lat;
        StageTimings local_sum;
        std::vector<int32_t> ids(n_items);
        for (int i = 0; i < n_items; ++i) ids[i] = i;
        while (clock::now() < deadline) {
            if (cfg.max_requests > 0 && issued.fetch_add(1) >= cfg.max_requests) break;
            if (cfg.max_requests == 0) issued.fetch_add(1);
            ScoreRequest req;
            req.user_id = user_pool[rng.below(user_pool.size())];
            req.ts_ms = 60'000;
            for (int j = 0; j < k; ++j) {
                size_t pick = j + rng.below(static_cast<uint64_t>(n_items - j));
                std::swap(ids[j], ids[pick]);
            }
            req.candidates.assign(ids.begin(), ids.begin() + k);
            auto t0 = clock::now();
            ScoreResponse resp = scorer.score(req);
            auto t1 = clock::now();
            local_lat.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            local_sum.feature_ms += resp.timings.feature_ms;
            local_sum.forward_ms += resp.timings.forward_ms;
            local_sum.rank_ms += resp.timings.rank_ms;
        }
        std::lock_guard<std::mutex> lock(merge_mu);
        latencies.insert(latencies.end(), local_lat.begin(), local_lat.end());
        stage_sum.feature_ms += local_sum.feature_ms;
        stage_sum.forward_ms += local_sum.forward_ms;
        stage_sum.rank_ms += local_sum.rank_ms;
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < cfg.threads; ++t) threads.emplace_back(worker, t);
    for (auto& t : threads) t.join();
    auto wall = std::chrono::duration<double, std::milli>(clock::now() - start).count();

    report.requests = static_cast<int>(latencies.size());
    report.wall_ms = wall;
    if (report.requests == 0) return report;
    report.throughput_rps = report.requests / (wall / 1000.0);
    std::sort(latencies.begin(), latencies.end());
    auto pct = [&](double q) {
        size_t idx = static_cast<size_t>(std::ceil(q * latencies.size()));
        return latencies[std::min(latencies.size() - 1, idx == 0 ? 0 : idx - 1)];
    };
    report.p50_ms = pct(0.50);
    report.p90_ms = pct(0.90);
    report.p99_ms = pct(0.99);
    report.stage_mean.feature_ms = stage_sum.feature_ms / report.requests;
    report.stage_mean.forward_ms = stage_sum.forward_ms / report.requests;
    report.stage_mean.rank_ms = stage_sum.rank_ms / report.requests;
    return report;
}

void write_bench_report(const std::string& path, const BenchReport& report,
                        uint64_t cfg_hash) {
    std::vector<std::pair<std::string, std::string>> rows;
    rows.emplace_back("requests", fmt_int(report.requests));
    rows.emplace_back("wall_ms", fmt_dbl(report.wall_ms));
    rows.emplace_back("throughput_rps", fmt_dbl(report.throughput_rps));
    rows.emplace_back("p50_ms", fmt_dbl(report.p50_ms));
    rows.emplace_back("p90_ms", fmt_dbl(report.p90_ms));
    rows.emplace_back("p99_ms", fmt_dbl(report.p99_ms));
    rows.emplace_back("stage_feature_ms", fmt_dbl(report.stage_mean.feature_ms));
    rows.emplace_back("stage_forward_ms", fmt_dbl(report.stage_mean.forward_ms));
    rows.emplace_back("stage_rank_ms", fmt_dbl(report.stage_mean.rank_ms));
    if (report.empty()) rows.emplace_back("note", "no requests issued");
    write_summary(path, cfg_hash, rows);
}

// ---- commands ----

GenerateResult cmd_generate(RunConfig cfg) {
    cfg.finalize();
    write_effective_config(cfg);
    Paths p{cfg.out};
    auto world = datagen::generate_dataset(cfg.world);
    write_events(p.events(), world.events);
    write_profiles(p.profiles(), world.profiles);
    write_catalog(p.catalog(), world.catalog);
    write_planted(p.planted(), world.planted);

    GenerateResult res;
    res.events = world.events.size();
    res.users = cfg.world.n_users;
    res.items = cfg.world.n_items;
    res.hash = config_hash(cfg);
    write_summary(cfg.out + "/generate_summary.txt", res.hash,
                  {{"events", fmt_int(static_cast<long long>(res.events))},
                   {"users", fmt_int(res.users)},
                   {"items", fmt_int(res.items)},
                   {"planted", fmt_int(static_cast<long long>(world.planted.size()))}});
    return res;
}

PreprocessResult cmd_preprocess(RunConfig cfg) {
    cfg.finalize();
    write_effective_config(cfg);
    Paths p{cfg.out};
    auto world = load_world_artifacts(cfg, /*need_events=*/true);
    Dataset ds = build_dataset(world, cfg);
    save_dataset(p.dataset(), ds);

    PreprocessResult res;
    res.vocab_size = ds.vocab.size();
    for (const auto& s : ds.ctr)
        if (s.split >= 0) ++res.ctr_sequences[s.split];
    for (const auto& s : ds.cvr)
        if (s.split >= 0) ++res.cvr_sequences[s.split];
    res.hash = config_hash(cfg);
    write_summary(cfg.out + "/preprocess_summary.txt", res.hash,
                  {{"vocab_size", fmt_int(res.vocab_size)},
                   {"ctr_train", fmt_int(res.ctr_sequences[0])},
                   {"ctr_val", fmt_int(res.ctr_sequences[1])},
                   {"ctr_test", fmt_int(res.ctr_sequences[2])},
                   {"cvr_train", fmt_int(res.cvr_sequences[0])},
                   {"cvr_val", fmt_int(res.cvr_sequences[1])},
                   {"cvr_test", fmt_int(res.cvr_sequences[2])}});
    return res;
}

TrainResult cmd_train(RunConfig cfg) {
    cfg.finalize();
    write_effective_config(cfg);
    Paths p{cfg.out};
    require_artifact(p.dataset(), "preprocess");
    Dataset ds = load_dataset(p.dataset());
    uint64_t hash = config_hash(cfg);

    TrainResult res;
    auto net_ctr = resolve_net(cfg, ds, model::HeadKind::pctr);
    auto m_ctr = model::FinTRecModel::init(net_ctr, cfg.seed);
    auto ctr_train = dataset_inputs(ds, model::HeadKind::pctr, pipeline::kTrain, net_ctr);
    res.pctr_loss = train::fit_pctr(m_ctr, ctr_train, cfg.trainer);
    auto ctr_val = dataset_inputs(ds, model::HeadKind::pctr, pipeline::kVal, net_ctr);
    res.val_pctr = eval_pctr(m_ctr, ctr_val);
    save_model(p.pctr_ckpt(), m_ctr, hash);
    res.pctr_hash = params_hash(m_ctr.params());

    auto net_cvr = resolve_net(cfg, ds, model::HeadKind::pcvr);
    auto m_cvr = model::FinTRecModel::init(net_cvr, cfg.seed);
    auto cvr_train = dataset_inputs(ds, model::HeadKind::pcvr, pipeline::kTrain, net_cvr);
    res.pcvr_loss = train::fit_pcvr(m_cvr, cvr_train, cfg.trainer);
    auto cvr_val = dataset_inputs(ds, model::HeadKind::pcvr, pipeline::kVal, net_cvr);
    auto cvr_eval = eval_pcvr(m_cvr, cvr_val);
    res.val_logloss = cvr_eval.logloss;
    save_model(p.pcvr_ckpt(), m_cvr, hash);
    res.pcvr_hash = params_hash(m_cvr.params());

    write_summary(cfg.out + "/train_metrics.txt", hash,
                  {{"pctr_final_loss", fmt_flt(res.pctr_loss)},
                   {"pcvr_final_loss", fmt_flt(res.pcvr_loss)},
                   {"val_recall1", fmt_dbl(res.val_pctr.recall1)},
                   {"val_recall5", fmt_dbl(res.val_pctr.recall5)},
                   {"val_recall10", fmt_dbl(res.val_pctr.recall10)},
                   {"val_labels", fmt_int(res.val_pctr.labels)},
                   {"val_logloss", fmt_dbl(res.val_logloss)},
                   {"pctr_params", hex_hash(res.pctr_hash)},
                   {"pcvr_params", hex_hash(res.pcvr_hash)}});
    return res;
}

adapt::FinetuneReport cmd_finetune(RunConfig cfg) {
    cfg.finalize();
    write_effective_config(cfg);
    Paths p{cfg.out};
    auto world = load_world_artifacts(cfg, /*need_events=*/true);
    LpoData lpo = build_lpo(world, cfg);
    if (lpo.adapt_train.empty() || lpo.adapt_val.empty())
        throw std::runtime_error(
            "cli: held-out product has no adaptation sequences in train or validation; pick "
            "another finetune.product or a larger world");

    model::TransformerConfig net = cfg.net;
    net.vocab_size = lpo.base_vocab_size;
    net.n_items = static_cast<int>(world.catalog.items.size());
    net.fm_dim = cfg.world.fm_dim;
    net.static_dim = 2 * cfg.world.enrollment_universe;
    net.head = model::HeadKind::pctr;
    auto m = model::FinTRecModel::init(net, cfg.seed);
    train::fit_pctr(m, lpo.pre_train, cfg.trainer);

    adapt::FinetuneConfig fc;
    fc.mode = cfg.ft.mode;
    fc.lora = cfg.ft.lora;
    fc.trainer = cfg.ft.trainer;
    fc.new_tokens = lpo.new_tokens;
    fc.new_item_count = lpo.new_item_count;
    auto report = adapt::finetune(m, lpo.adapt_train, lpo.adapt_val, fc);
    adapt::save_adapter(p.adapter(cfg.ft.mode), m, cfg.ft.mode, report.base_hash);

    write_summary(cfg.out + "/finetune_report.txt", config_hash(cfg),
                  {{"mode", adapt::to_string(cfg.ft.mode)},
                   {"held_out_product", fmt_int(cfg.ft.product)},
                   {"recall1_zero_shot", fmt_dbl(report.recall1_zero_shot)},
                   {"recall5_zero_shot", fmt_dbl(report.recall5_zero_shot)},
                   {"recall1", fmt_dbl(report.recall1)},
                   {"recall5", fmt_dbl(report.recall5)},
                   {"final_loss", fmt_flt(report.final_loss)},
                   {"trainable_params", fmt_int(report.trainable_params)},
                   {"base_hash", hex_hash(report.base_hash)}});
    return report;
}

EvaluateResult cmd_evaluate(RunConfig cfg) {
    cfg.finalize();
    write_effective_config(cfg);
    Paths p{cfg.out};
    require_artifact(p.dataset(), "preprocess");
    require_artifact(p.pctr_ckpt(), "train");
    require_artifact(p.pcvr_ckpt(), "train");
    Dataset ds = load_dataset(p.dataset());
    auto m_ctr = load_model(p.pctr_ckpt());
    auto m_cvr = load_model(p.pcvr_ckpt());
    uint64_t hash = config_hash(cfg);

    EvaluateResult res;
    auto ctr_val = dataset_inputs(ds, model::HeadKind::pctr, pipeline::kVal, m_ctr.config());
    res.pctr_val = eval_pctr(m_ctr, ctr_val);
    auto [cvr_val, cvr_src] =
        inputs_with_sources(ds, model::HeadKind::pcvr, pipeline::kVal, m_cvr.config());
    auto ev = eval_pcvr(m_cvr, cvr_val);
    res.logloss_val = ev.logloss;
    res.auroc_val = ev.auroc;

    // Per-item isotonic calibration, fitted and measured on validation.
    std::vector<float> scores_f(ev.probs.begin(), ev.probs.end());
    auto cal = model::calibrate(scores_f, ev.labels, ev.items);
    std::vector<float> calibrated(scores_f.size());
    for (size_t i = 0; i < scores_f.size(); ++i)
        calibrated[i] = cal.apply(ev.items[i], scores_f[i]);
    res.ece_raw = model::ece(scores_f, ev.labels);
    res.ece_calibrated = model::ece(calibrated, ev.labels);

    auto ctr_test = dataset_inputs(ds, model::HeadKind::pctr, pipeline::kTest, m_ctr.config());
    auto cvr_test = dataset_inputs(ds, model::HeadKind::pcvr, pipeline::kTest, m_cvr.config());
    res.has_test = !ctr_test.empty() && !cvr_test.empty();
    if (res.has_test) {
        res.pctr_test = eval_pctr(m_ctr, ctr_test);
        res.logloss_test = eval_pcvr(m_cvr, cvr_test).logloss;
    }

    // Scored validation log in the schema shared with the ranking tooling.
    std::vector<baseline::FeatureRow> rows;
    rows.reserve(cvr_src.size());
    for (const auto* seq : cvr_src) {
        baseline::FeatureRow row;
        row.user_id = seq->user_id;
        row.ts_ms = seq->endpoint_ms;
        row.item_id = seq->endpoint_item;
        row.label = seq->cvr_label;
        rows.push_back(std::move(row));
    }
    baseline::write_scored_csv(cfg.out + "/scored_val.csv", rows, ev.probs);

    Series recall_series{"recall@k", {}, {}};
    int kmax = std::min(10, m_ctr.config().n_items);
    for (int k = 1; k <= kmax; ++k) {
        recall_series.xs.push_back(k);
        recall_series.ys.push_back(res.pctr_val.at[k - 1]);
    }
    write_svg_curves(cfg.out + "/recall_curve.svg", "validation recall@k", "k", "recall",
                     {recall_series}, hash);

    Series diag{"ideal", {0, 1}, {0, 1}};
    Series raw{"raw", {}, {}};
    Series iso{"calibrated", {}, {}};
    constexpr int kBins = 10;
    for (int b = 0; b < kBins; ++b) {
        auto bin_point = [&](const std::vector<float>& s, Series& out) {
            double sum_p = 0, sum_y = 0;
            int n = 0;
            for (size_t i = 0; i < s.size(); ++i) {
                int bi = std::min(kBins - 1, static_cast<int>(s[i] * kBins));
                if (bi != b) continue;
                sum_p += s[i];
                sum_y += ev.labels[i];
                ++n;
            }
            if (n > 0) {
                out.xs.push_back(sum_p / n);
                out.ys.push_back(sum_y / n);
            }
        };
        bin_point(scores_f, raw);
        bin_point(calibrated, iso);
    }
    write_svg_curves(cfg.out + "/calibration.svg", "validation reliability", "mean predicted",
                     "fraction positive", {diag, raw, iso}, hash);

    std::vector<std::pair<std::string, std::string>> summary = {
        {"val_recall1", fmt_dbl(res.pctr_val.recall1)},
        {"val_recall5", fmt_dbl(res.pctr_val.recall5)},
        {"val_recall10", fmt_dbl(res.pctr_val.recall10)},
        {"val_labels", fmt_int(res.pctr_val.labels)},
        {"val_logloss", fmt_dbl(res.logloss_val)},
        {"val_auroc", fmt_dbl(res.auroc_val)},
        {"val_ece_raw", fmt_dbl(res.ece_raw)},
        {"val_ece_calibrated", fmt_dbl(res.ece_calibrated)}};
    if (res.has_test) {
        summary.emplace_back("test_recall1", fmt_dbl(res.pctr_test.recall1));
        summary.emplace_back("test_recall5", fmt_dbl(res.pctr_test.recall5));
        summary.emplace_back("test_logloss", fmt_dbl(res.logloss_test));
    }
    write_summary(cfg.out + "/evaluate_metrics.txt", hash, summary);
    return res;
}

ranksim::SweepResult cmd_sweep(RunConfig cfg) {
    cfg.finalize();
    write_effective_config(cfg);
    if (cfg.sweep.grid < 2) throw std::invalid_argument("cli: sweep.grid must be at least 2");
    if (cfg.sweep.lambda_max <= 0)
        throw std::invalid_argument("cli: sweep.lambda_max must be positive");
    Paths p{cfg.out};
    require_artifact(p.dataset(), "preprocess");
    require_artifact(p.pctr_ckpt(), "train");
    require_artifact(p.pcvr_ckpt(), "train");
    Dataset ds = load_dataset(p.dataset());
    auto m_ctr = load_model(p.pctr_ckpt());
    auto m_cvr = load_model(p.pcvr_ckpt());
    require_artifact(p.catalog(), "generate");
    Catalog catalog = read_catalog(p.catalog());
    uint64_t hash = config_hash(cfg);

    // Conversion-window sequences scored by both heads: the click model sees
    // the per-position daily-embedding layout, so its inputs are built with
    // the click config over the same sequence pool.
    auto ctr_in =
        inputs_with_sources(ds, model::HeadKind::pcvr, pipeline::kVal, m_ctr.config()).first;
    auto cvr_in = dataset_inputs(ds, model::HeadKind::pcvr, pipeline::kVal, m_cvr.config());
    if (cvr_in.empty())
        throw std::runtime_error(
            "cli: no validation sequences to sweep over; enlarge the world or the val split");

    int n_items = m_ctr.config().n_items;
    int k = std::min(cfg.serve.candidates, n_items);
    std::vector<ranksim::ScoredSlate> slates;
    slates.reserve(cvr_in.size());
    for (size_t i = 0; i < cvr_in.size(); ++i) {
        Tensor logits = m_ctr.pctr_logits(ctr_in[i]);
        const float* row =
            logits.data().data() + static_cast<size_t>(ctr_in[i].len() - 1) * n_items;
        auto probs = softmax_row(row, n_items);
        double pcvr = m_cvr.pcvr_prob(cvr_in[i]).data()[0];

        Rng rng = Rng(cfg.seed).fork(0x51a7e + i);
        std::vector<int32_t> ids(n_items);
        for (int j = 0; j < n_items; ++j) ids[j] = j;
        for (int j = 0; j < k; ++j) {
            size_t pick = j + rng.below(static_cast<uint64_t>(n_items - j));
            std::swap(ids[j], ids[pick]);
        }
        ranksim::ScoredSlate slate;
        for (int j = 0; j < k; ++j) {
            ranksim::Candidate cand;
            cand.item_id = ids[j];
            cand.pctr = probs[ids[j]];
            cand.pcvr = pcvr;
            cand.us = catalog.items[ids[j]].urgency;
            cand.value = catalog.items[ids[j]].value;
            slate.candidates.push_back(cand);
        }
        slates.push_back(std::move(slate));
    }

    std::vector<double> grid(cfg.sweep.grid);
    for (int i = 0; i < cfg.sweep.grid; ++i)
        grid[i] = cfg.sweep.lambda_max * i / (cfg.sweep.grid - 1);
    auto result = ranksim::sweep_coefficients(slates, grid, grid, grid, cfg.sweep.top_n);
    ranksim::write_sweep_csv(cfg.out + "/sweep.csv", result);
    ranksim::write_sweep_svg(cfg.out + "/sweep.svg", result);

    double best_clicks = 0, best_pv = 0, ctr_corner_clicks = 0, pv_corner_pv = 0;
    for (const auto& pt : result.points) {
        best_clicks = std::max(best_clicks, pt.expected_clicks);
        best_pv = std::max(best_pv, pt.expected_pv);
        if (pt.weights.lambda_us == 0 && pt.weights.lambda_cvr == 0 &&
            pt.weights.lambda_ctr == cfg.sweep.lambda_max)
            ctr_corner_clicks = pt.expected_clicks;
        if (pt.weights.lambda_us == 0 && pt.weights.lambda_ctr == 0 &&
            pt.weights.lambda_cvr == cfg.sweep.lambda_max)
            pv_corner_pv = pt.expected_pv;
    }
    std::string lift_self = "n/a";
    try {
        lift_self = fmt_dbl(
            ranksim::estimate_pv_lift(slates, slates, {0.0, 0.0, 1.0}, cfg.sweep.top_n));
    } catch (const std::exception&) {
    }
    write_summary(cfg.out + "/sweep_report.txt", hash,
                  {{"grid_points", fmt_int(static_cast<long long>(result.points.size()))},
                   {"slates", fmt_int(static_cast<long long>(slates.size()))},
                   {"best_expected_clicks", fmt_dbl(best_clicks)},
                   {"ctr_corner_clicks", fmt_dbl(ctr_corner_clicks)},
                   {"best_expected_pv", fmt_dbl(best_pv)},
                   {"pv_corner_pv", fmt_dbl(pv_corner_pv)},
                   {"pv_lift_self_pct", lift_self}});
    return result;
}

ExplainResult cmd_explain(RunConfig cfg) {
    cfg.finalize();
    write_effective_config(cfg);
    Paths p{cfg.out};
    require_artifact(p.dataset(), "preprocess");
    require_artifact(p.pcvr_ckpt(), "train");
    Dataset ds = load_dataset(p.dataset());
    auto m = load_model(p.pcvr_ckpt());

    auto [inputs, src] =
        inputs_with_sources(ds, model::HeadKind::pcvr, pipeline::kVal, m.config());
    int n = std::min<int>(cfg.ex.sequences, static_cast<int>(inputs.size()));
    ExplainResult res;
    std::vector<explain::ImportanceRow> rows;
    for (int i = 0; i < n; ++i) {
        explain::VisitImportance imp;
        switch (cfg.ex.method) {
            case explain::ImportanceMethod::attention:
                imp = explain::attention_importance(m, inputs[i]);
                break;
            case explain::ImportanceMethod::grad_sam:
                imp = explain::grad_sam_importance(m, inputs[i]);
                break;
            case explain::ImportanceMethod::averaged:
                imp = explain::averaged_importance(explain::attention_importance(m, inputs[i]),
                                                   explain::grad_sam_importance(m, inputs[i]));
                break;
        }
        res.fallbacks += imp.uniform_fallback ? 1 : 0;
        auto seq_rows =
            explain::importance_rows(src[i]->user_id, src[i]->endpoint_ms, inputs[i], imp);
        rows.insert(rows.end(), seq_rows.begin(), seq_rows.end());
    }
    res.sequences = n;
    explain::write_importance_csv(cfg.out + "/importance.csv", rows);
    write_summary(cfg.out + "/explain_summary.txt", config_hash(cfg),
                  {{"method", explain::to_string(cfg.ex.method)},
                   {"sequences", fmt_int(res.sequences)},
                   {"uniform_fallbacks", fmt_int(res.fallbacks)}});
    return res;
}

explain::AblationReport cmd_ablate(RunConfig cfg) {
    cfg.finalize();
    write_effective_config(cfg);
    Paths p{cfg.out};
    require_artifact(p.dataset(), "preprocess");
    require_artifact(p.pcvr_ckpt(), "train");
    Dataset ds = load_dataset(p.dataset());
    auto m = load_model(p.pcvr_ckpt());

    auto train_in = dataset_inputs(ds, model::HeadKind::pcvr, pipeline::kTrain, m.config());
    auto val_in = dataset_inputs(ds, model::HeadKind::pcvr, pipeline::kVal, m.config());
    std::vector<explain::VisitImportance> train_imp, val_imp;
    train_imp.reserve(train_in.size());
    for (const auto& in : train_in) train_imp.push_back(explain::grad_sam_importance(m, in));
    val_imp.reserve(val_in.size());
    for (const auto& in : val_in) val_imp.push_back(explain::grad_sam_importance(m, in));

    auto report = explain::visit_ablation(m.config(), train_in, val_in, train_imp, val_imp,
                                          cfg.trainer);
    std::vector<std::pair<std::string, std::string>> rows = {
        {"full_auroc", fmt_dbl(report.full_auroc)}};
    for (const auto& row : report.rows) {
        rows.emplace_back(std::string(explain::to_string(row.selection)) + "_auroc",
                          fmt_dbl(row.auroc));
        rows.emplace_back(std::string(explain::to_string(row.selection)) + "_relative",
                          fmt_dbl(row.relative));
    }
    write_summary(cfg.out + "/ablation_report.txt", config_hash(cfg), rows);
    return report;
}

namespace {

Scorer make_scorer(const RunConfig& cfg, const Paths& p) {
    require_artifact(p.dataset(), "preprocess");
    require_artifact(p.pctr_ckpt(), "train");
    require_artifact(p.pcvr_ckpt(), "train");
    Dataset ds = load_dataset(p.dataset());
    auto m_ctr = load_model(p.pctr_ckpt());
    auto m_cvr = load_model(p.pcvr_ckpt());
    require_artifact(p.events(), "generate");
    require_artifact(p.catalog(), "generate");
    auto events = read_events(p.events());
    Catalog catalog = read_catalog(p.catalog());
    auto log = pipeline::sessionize(std::move(events), cfg.session_gap_minutes);
    auto store = build_feature_store(log, ds.profiles, ds.vocab, ds.ctx,
                                     m_ctr.config().max_len, ds.bounds.val_end_ms);
    return Scorer(std::move(m_ctr), std::move(m_cvr), std::move(catalog), cfg.weights,
                  std::move(store));
}

}  // namespace

BenchReport cmd_bench(RunConfig cfg) {
    cfg.finalize();
    write_effective_config(cfg);
    Paths p{cfg.out};
    Scorer scorer = make_scorer(cfg, p);
    BenchConfig bc;
    bc.duration_ms = cfg.serve.duration_ms;
    bc.threads = cfg.serve.threads;
    bc.candidates = cfg.serve.candidates;
    bc.max_requests = cfg.serve.max_requests;
    bc.seed = cfg.seed;
    auto report = run_bench(scorer, scorer.known_users(), bc);
    write_bench_report(cfg.out + "/bench_report.txt", report, config_hash(cfg));
    return report;
}

ScoreResponse cmd_score(RunConfig cfg) {
    cfg.finalize();
    write_effective_config(cfg);
    Paths p{cfg.out};
    Scorer scorer = make_scorer(cfg, p);
    auto users = scorer.known_users();

    ScoreRequest req;
    req.user_id = cfg.serve.user >= 0 ? cfg.serve.user : (users.empty() ? 0 : users.front());
    int n_items = static_cast<int>(scorer.catalog().items.size());
    int k = std::min(cfg.serve.candidates, n_items);
    Rng rng(cfg.seed);
    std::vector<int32_t> ids(n_items);
    for (int i = 0; i < n_items; ++i) ids[i] = i;
    for (int j = 0; j < k; ++j) {
        size_t pick = j + rng.below(static_cast<uint64_t>(n_items - j));
        std::swap(ids[j], ids[pick]);
    }
    req.candidates.assign(ids.begin(), ids.begin() + k);
    req.ts_ms = 60'000 * 60;
    auto resp = scorer.score(req);

    std::ofstream f(cfg.out + "/score_slate.csv");
    if (!f) throw std::runtime_error("cli: cannot open score_slate.csv for writing");
    f << "# config_hash=" << hex_hash(config_hash(cfg)) << "\n";
    f << "rank,item_id,rs,pctr,pcvr,us,value\n";
    char buf[160];
    for (size_t i = 0; i < resp.slate.candidates.size(); ++i) {
        const auto& c = resp.slate.candidates[i];
        std::snprintf(buf, sizeof buf, "%zu,%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", i + 1, c.item_id,
                      c.rs, c.pctr, c.pcvr, c.us, c.value);
        f << buf;
    }
    return resp;
}

}  // namespace fintrec::cli
