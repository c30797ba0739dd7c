// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fintrec/events.hpp"

namespace fintrec::datagen {

struct WorldConfig {
    int n_users = 30000;
    int n_items = 200;
    int n_products = 3;  // pgc_servicing, mobile_homepage, third_party
    int n_days = 120;
    int latent_dim = 8;
    int fm_dim = 32;
    uint64_t seed = 1;

    // behavior knobs: class balance is not fixed by design, so click and
    // conversion rates are exposed for experiments to tune
    double opt_out_fraction = 0.05;
    double sessions_per_week = 1.2;
    double click_base = -2.2;      // logit intercept for click probability
    double click_affinity = 1.6;   // logit slope on user-item latent alignment
    double recency_boost = 1.0;    // extra logit if the user clicked the item recently
    int recency_days = 14;
    double conversions_per_user = 0.15;
    double external_fraction = 0.10;        // conversions with no platform impression
    double click_before_conversion = 0.45;  // fraction of conversions preceded by a click
    double motif_fraction = 0.9;  // conversions planted with a dormant-interest trigger
    std::vector<double> product_share = {0.75, 0.22, 0.03};  // item split across products
    int layout_variants = 3;  // layout variants for platform-generated content
    int enrollment_universe = 6;

    void validate() const;  // throws std::invalid_argument on bad values
};

struct World {
    WorldConfig config;
    Catalog catalog;
    std::vector<UserProfile> profiles;
    std::vector<Event> events;  // sorted by (user_id, ts)
    std::vector<PlantedConversion> planted;
};

// Deterministic function of the config: every user draws from a forked
// sub-stream of the seed, so regeneration is byte-identical.
World generate_dataset(const WorldConfig& config);

// Catalog construction alone (used by tests needing items without events).
Catalog build_catalog(const WorldConfig& config);

}  // namespace fintrec::datagen
