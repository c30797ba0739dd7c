// SPDX-License-Identifier: Apache-2.0
#include "fintrec/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "fintrec/rng.hpp"

namespace fintrec::datagen {

namespace {

constexpr uint64_t kCatalogSalt = 0xca7a;
constexpr uint64_t kUserSaltBase = 0x100000;

struct ScheduledConversion {
    int32_t item_id = -1;
    int conv_day = 0;
    int trigger_day = 0;
    bool motif = false;
    bool external = false;
    bool with_click = false;
};

float scaled_dot(const std::vector<float>& a, const std::vector<float>& b) {
    float acc = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc * std::sqrt(static_cast<float>(a.size()));
}

int pick_weighted(Rng& rng, const std::vector<double>& w) {
    double total = 0.0;
    for (double v : w) total += v;
    double r = rng.uniform() * total;
    for (size_t i = 0; i < w.size(); ++i) {
        r -= w[i];
        if (r < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1;
}

}  // namespace

void WorldConfig::validate() const {
    if (n_users < 1 || n_items < 1 || n_days < 1 || latent_dim < 1 || fm_dim < 1) {
        throw std::invalid_argument("world config: counts must be >= 1");
    }
    if (n_products < 1 || n_products > 3) {
        throw std::invalid_argument("world config: n_products must be in [1, 3]");
    }
    if (n_items < n_products) {
        throw std::invalid_argument("world config: need at least one item per product");
    }
    if (static_cast<int>(product_share.size()) < n_products) {
        throw std::invalid_argument("world config: product_share shorter than n_products");
    }
    for (int p = 0; p < n_products; ++p) {
        if (product_share[p] <= 0.0) {
            throw std::invalid_argument("world config: product_share entries must be positive");
        }
    }
    for (double f : {opt_out_fraction, external_fraction, click_before_conversion,
                     motif_fraction}) {
        if (f < 0.0 || f > 1.0) {
            throw std::invalid_argument("world config: fractions must lie in [0, 1]");
        }
    }
    if (sessions_per_week <= 0.0 || conversions_per_user < 0.0) {
        throw std::invalid_argument("world config: rates must be positive");
    }
    if (layout_variants < 1 || enrollment_universe < 1) {
        throw std::invalid_argument("world config: variants and universe must be >= 1");
    }
}

Catalog build_catalog(const WorldConfig& cfg) {
    cfg.validate();
    Catalog catalog;
    static const char* kNames[3] = {"pgc_servicing", "mobile_homepage", "third_party"};
    static const ContentType kTypes[3] = {ContentType::servicing, ContentType::marketing,
                                          ContentType::third_party};
    for (int p = 0; p < cfg.n_products; ++p) {
        ProductInfo info;
        info.product_id = static_cast<int16_t>(p);
        info.name = kNames[p];
        info.content_type = kTypes[p];
        catalog.products.push_back(std::move(info));
    }

    // proportional item counts, at least one per product
    double share_total = 0.0;
    for (int p = 0; p < cfg.n_products; ++p) share_total += cfg.product_share[p];
    std::vector<int> counts(cfg.n_products, 1);
    int assigned = cfg.n_products;
    for (int p = 0; p < cfg.n_products && assigned < cfg.n_items; ++p) {
        const int extra = static_cast<int>(
            std::floor((cfg.n_items - cfg.n_products) * cfg.product_share[p] / share_total));
        counts[p] += extra;
        assigned += extra;
    }
    counts[0] += cfg.n_items - assigned;  // remainder to the largest product

    Rng rng = Rng(cfg.seed).fork(kCatalogSalt);
    int32_t next_item = 0;
    for (int p = 0; p < cfg.n_products; ++p) {
        const ContentType type = kTypes[p];
        for (int i = 0; i < counts[p]; ++i, ++next_item) {
            ItemInfo item;
            item.item_id = next_item;
            item.product_id = static_cast<int16_t>(p);
            item.content_type = type;
            item.page_id = static_cast<uint16_t>(kFirstItemPage + next_item);
            const int variants = type == ContentType::third_party ? 1 : cfg.layout_variants;
            for (int v = 0; v < variants; ++v) item.layouts.push_back(static_cast<uint16_t>(v));
            switch (type) {
                case ContentType::marketing: item.attribution_days = 60; break;
                case ContentType::servicing: item.attribution_days = 30; break;
                case ContentType::third_party: item.attribution_days = 15; break;
            }
            item.urgency = rng.chance(0.12) ? static_cast<float>(0.5 + 1.5 * rng.uniform()) : 0.0f;
            item.value = static_cast<float>(20.0 + 380.0 * rng.uniform());
            item.latent.resize(cfg.latent_dim);
            const float inv = 1.0f / std::sqrt(static_cast<float>(cfg.latent_dim));
            for (float& v : item.latent) v = static_cast<float>(rng.normal()) * inv;
            catalog.items.push_back(std::move(item));
        }
    }
    return catalog;
}

World generate_dataset(const WorldConfig& cfg) {
    cfg.validate();
    World world;
    world.config = cfg;
    world.catalog = build_catalog(cfg);
    const auto& items = world.catalog.items;

    // item id ranges per product (items are laid out product-contiguously)
    std::vector<int> p_begin(cfg.n_products, 0), p_count(cfg.n_products, 0);
    for (const auto& item : items) p_count[item.product_id]++;
    for (int p = 1; p < cfg.n_products; ++p) p_begin[p] = p_begin[p - 1] + p_count[p - 1];

    std::vector<double> exposure = {0.50, 0.42, 0.08};
    exposure.resize(cfg.n_products);

    world.profiles.reserve(cfg.n_users);
    world.events.reserve(static_cast<size_t>(cfg.n_users) *
                         static_cast<size_t>(cfg.sessions_per_week / 7.0 * cfg.n_days * 10 + 8));

    const Rng root(cfg.seed);
    for (int32_t uid = 0; uid < cfg.n_users; ++uid) {
        Rng rng = root.fork(kUserSaltBase + static_cast<uint64_t>(uid));

        UserProfile prof;
        prof.user_id = uid;
        prof.latent.resize(cfg.latent_dim);
        const float inv = 1.0f / std::sqrt(static_cast<float>(cfg.latent_dim));
        for (float& v : prof.latent) v = static_cast<float>(rng.normal()) * inv;
        prof.enrollments.assign(cfg.enrollment_universe, 0);
        prof.tenure_days.assign(cfg.enrollment_universe, 0.0f);
        const int n_enroll = 1 + static_cast<int>(rng.below(
                                     std::min(4u, static_cast<unsigned>(cfg.enrollment_universe))));
        for (int e = 0; e < n_enroll; ++e) {
            const int slot = static_cast<int>(rng.below(cfg.enrollment_universe));
            if (!prof.enrollments[slot]) {
                prof.enrollments[slot] = 1;
                prof.tenure_days[slot] = static_cast<float>(30.0 + 2970.0 * rng.uniform());
            }
        }
        if (std::none_of(prof.enrollments.begin(), prof.enrollments.end(),
                         [](uint8_t e) { return e != 0; })) {
            prof.enrollments[0] = 1;
            prof.tenure_days[0] = static_cast<float>(30.0 + 2970.0 * rng.uniform());
        }
        prof.activity = static_cast<float>(std::clamp(
            cfg.sessions_per_week / 7.0 * std::exp(0.4 * rng.normal()), 0.02, 0.5));
        prof.opt_out = rng.chance(cfg.opt_out_fraction);
        prof.fm_seed = rng.next_u64();
        const uint8_t device = static_cast<uint8_t>(rng.below(3));
        const Channel channel = device == 0 ? Channel::web : Channel::mobile;

        // conversion schedule: only exposed (non-opted-out) users convert on-platform
        std::vector<ScheduledConversion> schedule;
        if (!prof.opt_out) {
            int want = 0;
            if (rng.chance(std::min(1.0, cfg.conversions_per_user * 0.8))) want++;
            if (rng.chance(std::min(1.0, cfg.conversions_per_user * 0.25))) want++;
            for (int c = 0; c < want; ++c) {
                const int p = static_cast<int>(rng.below(cfg.n_products));
                int best = -1;
                float best_dot = -1e9f;
                for (int t = 0; t < 3; ++t) {
                    const int cand = p_begin[p] + static_cast<int>(rng.below(p_count[p]));
                    const float d = scaled_dot(prof.latent, items[cand].latent);
                    if (d > best_dot) {
                        best_dot = d;
                        best = cand;
                    }
                }
                ScheduledConversion sc;
                sc.item_id = best;
                const int window = items[best].attribution_days;
                if (cfg.n_days >= window + 2) {
                    sc.conv_day = window + static_cast<int>(rng.below(cfg.n_days - window));
                } else {
                    const int lo = cfg.n_days / 2;
                    sc.conv_day = lo + static_cast<int>(rng.below(std::max(1, cfg.n_days - lo)));
                }
                const int reach = std::min(window, sc.conv_day);
                sc.external = rng.chance(cfg.external_fraction);
                sc.motif = !sc.external && rng.chance(cfg.motif_fraction);
                sc.with_click = !sc.external && rng.chance(cfg.click_before_conversion);
                const int delta = std::max(
                    1, static_cast<int>(std::lround(reach * (0.30 + 0.30 * rng.uniform()))));
                sc.trigger_day = std::max(0, sc.conv_day - delta);
                schedule.push_back(sc);
            }
        }

        std::unordered_map<int32_t, int> last_click_day;
        std::vector<int64_t> trigger_login(schedule.size(), 0);
        int64_t next_free_ts = 0;

        auto emit = [&](EventKind kind, int64_t ts, int32_t item, uint16_t page,
                        uint16_t placement, uint16_t layout, int16_t product) {
            Event e;
            e.user_id = uid;
            e.ts = ts;
            e.kind = kind;
            e.item_id = item;
            e.channel = channel;
            e.page_id = page;
            e.placement_id = placement;
            e.layout_id = layout;
            e.device = device;
            e.product_id = product;
            world.events.push_back(e);
        };

        for (int day = 0; day < cfg.n_days; ++day) {
            struct SessionPlan {
                int64_t start = 0;
                int kind = 0;  // 0 ordinary, 1 trigger, 2 conversion
                int sched = -1;
            };
            std::vector<SessionPlan> plans;
            int n_ordinary = rng.chance(prof.activity) ? 1 : 0;
            if (rng.chance(prof.activity * 0.15)) n_ordinary++;
            for (int s = 0; s < n_ordinary; ++s) {
                plans.push_back({kWorldEpoch + static_cast<int64_t>(day) * kDaySeconds + 21600 +
                                     static_cast<int64_t>(rng.below(57600)),
                                 0, -1});
            }
            for (size_t si = 0; si < schedule.size(); ++si) {
                const auto& sc = schedule[si];
                if (sc.motif && sc.trigger_day == day) {
                    plans.push_back({kWorldEpoch + static_cast<int64_t>(day) * kDaySeconds +
                                         21600 + static_cast<int64_t>(rng.below(57600)),
                                     1, static_cast<int>(si)});
                }
                if (sc.conv_day == day) {
                    plans.push_back({kWorldEpoch + static_cast<int64_t>(day) * kDaySeconds +
                                         21600 + static_cast<int64_t>(rng.below(57600)),
                                     2, static_cast<int>(si)});
                }
            }
            if (plans.empty()) continue;
            std::sort(plans.begin(), plans.end(),
                      [](const SessionPlan& a, const SessionPlan& b) {
                          return a.start != b.start ? a.start < b.start : a.kind < b.kind;
                      });

            for (auto& plan : plans) {
                int64_t t = std::max(plan.start, next_free_ts + 1860);
                const ScheduledConversion* sc =
                    plan.sched >= 0 ? &schedule[plan.sched] : nullptr;

                if (plan.kind == 2 && sc->external) {
                    // off-platform conversion: a bare event, no session around it
                    const auto& item = items[sc->item_id];
                    emit(EventKind::conversion, t, item.item_id, item.page_id, 0, 0,
                         item.product_id);
                    world.planted.push_back({uid, item.item_id, t, 0, false, true, false});
                    next_free_ts = t;
                    continue;
                }

                emit(EventKind::login, t, -1, kLoginPage, 0, 0, -1);
                if (plan.kind == 1) trigger_login[plan.sched] = t;

                if (plan.kind == 1) {
                    // dormant-interest trigger: repeated views of one item plus a
                    // burst of account activity, long before the conversion
                    const auto& item = items[sc->item_id];
                    const uint16_t layout =
                        item.layouts[rng.below(static_cast<uint32_t>(item.layouts.size()))];
                    const int views = 3 + static_cast<int>(rng.below(3));
                    for (int v = 0; v < views; ++v) {
                        t += 5 + static_cast<int64_t>(rng.below(35));
                        emit(EventKind::impression, t, item.item_id, item.page_id,
                             static_cast<uint16_t>(rng.below(3)), layout, item.product_id);
                    }
                    if (rng.chance(0.5)) {
                        t += 5 + static_cast<int64_t>(rng.below(35));
                        emit(EventKind::click, t, item.item_id, item.page_id, 0, layout,
                             item.product_id);
                        last_click_day[item.item_id] = day;
                    }
                    const int burst = 2 + static_cast<int>(rng.below(2));
                    for (int b = 0; b < burst; ++b) {
                        t += 10 + static_cast<int64_t>(rng.below(60));
                        emit(EventKind::transaction, t, -1, kTransactionPage, 0, 0, -1);
                    }
                    if (rng.chance(0.3)) {
                        t += 10 + static_cast<int64_t>(rng.below(60));
                        emit(EventKind::payment, t, -1, kPaymentPage, 0, 0, -1);
                    }
                } else if (plan.kind == 2) {
                    const auto& item = items[sc->item_id];
                    const uint16_t layout =
                        item.layouts[rng.below(static_cast<uint32_t>(item.layouts.size()))];
                    t += 5 + static_cast<int64_t>(rng.below(35));
                    emit(EventKind::impression, t, item.item_id, item.page_id, 0, layout,
                         item.product_id);
                    if (sc->with_click) {
                        t += 5 + static_cast<int64_t>(rng.below(35));
                        emit(EventKind::click, t, item.item_id, item.page_id, 0, layout,
                             item.product_id);
                        last_click_day[item.item_id] = day;
                    }
                    t += 5 + static_cast<int64_t>(rng.below(35));
                    emit(EventKind::conversion, t, item.item_id, item.page_id, 0, layout,
                         item.product_id);
                    world.planted.push_back({uid, item.item_id, t, trigger_login[plan.sched],
                                             sc->motif && trigger_login[plan.sched] != 0, false,
                                             sc->with_click});
                    if (rng.chance(0.2)) {
                        t += 10 + static_cast<int64_t>(rng.below(60));
                        emit(EventKind::transaction, t, -1, kTransactionPage, 0, 0, -1);
                    }
                } else if (!prof.opt_out) {
                    const int n_slates = 1 + static_cast<int>(rng.below(3));
                    for (int s = 0; s < n_slates; ++s) {
                        const int p = pick_weighted(rng, exposure);
                        const int k =
                            std::min(p_count[p], 2 + static_cast<int>(rng.below(4)));
                        std::vector<int> slate;
                        while (static_cast<int>(slate.size()) < k) {
                            const int cand = p_begin[p] + static_cast<int>(rng.below(p_count[p]));
                            if (std::find(slate.begin(), slate.end(), cand) == slate.end()) {
                                slate.push_back(cand);
                            }
                        }
                        std::vector<uint16_t> layouts(slate.size());
                        for (size_t j = 0; j < slate.size(); ++j) {
                            const auto& item = items[slate[j]];
                            layouts[j] = item.layouts[rng.below(
                                static_cast<uint32_t>(item.layouts.size()))];
                            t += 2 + static_cast<int64_t>(rng.below(6));
                            emit(EventKind::impression, t, item.item_id, item.page_id,
                                 static_cast<uint16_t>(j), layouts[j], item.product_id);
                        }
                        for (size_t j = 0; j < slate.size(); ++j) {
                            const auto& item = items[slate[j]];
                            double logit = cfg.click_base +
                                           cfg.click_affinity *
                                               scaled_dot(prof.latent, item.latent);
                            auto it = last_click_day.find(item.item_id);
                            if (it != last_click_day.end() &&
                                day - it->second <= cfg.recency_days) {
                                logit += cfg.recency_boost;
                            }
                            if (rng.chance(1.0 / (1.0 + std::exp(-logit)))) {
                                t += 4 + static_cast<int64_t>(rng.below(30));
                                emit(EventKind::click, t, item.item_id, item.page_id,
                                     static_cast<uint16_t>(j), layouts[j], item.product_id);
                                last_click_day[item.item_id] = day;
                            }
                        }
                    }
                    if (rng.chance(0.22)) {
                        t += 10 + static_cast<int64_t>(rng.below(120));
                        emit(EventKind::transaction, t, -1, kTransactionPage, 0, 0, -1);
                    }
                    if (rng.chance(0.07)) {
                        t += 10 + static_cast<int64_t>(rng.below(120));
                        emit(EventKind::payment, t, -1, kPaymentPage, 0, 0, -1);
                    }
                    if (rng.chance(0.02)) {
                        t += 10 + static_cast<int64_t>(rng.below(120));
                        emit(EventKind::call, t, -1, kCallPage, 0, 0, -1);
                    }
                } else {
                    // opted-out users remain active but see no recommendations
                    const int acts = 1 + static_cast<int>(rng.below(3));
                    for (int a = 0; a < acts; ++a) {
                        t += 10 + static_cast<int64_t>(rng.below(120));
                        emit(rng.chance(0.75) ? EventKind::transaction : EventKind::payment, t,
                             -1, rng.chance(0.75) ? kTransactionPage : kPaymentPage, 0, 0, -1);
                    }
                }
                next_free_ts = t;
            }
        }

        world.profiles.push_back(std::move(prof));
    }

    return world;
}

}  // namespace fintrec::datagen
