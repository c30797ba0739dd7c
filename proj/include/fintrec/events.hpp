// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fintrec {

enum class EventKind : uint8_t {
    impression = 0,
    click,
    conversion,
    transaction,
    payment,
    call,
    login,
};

enum class Channel : uint8_t { web = 0, mobile };

enum class ContentType : uint8_t { marketing = 0, servicing, third_party };

const char* to_string(EventKind k);
const char* to_string(Channel c);
const char* to_string(ContentType t);
EventKind event_kind_from_string(const std::string& s);
Channel channel_from_string(const std::string& s);
ContentType content_type_from_string(const std::string& s);

// Reserved page ids for non-item activity; item pages start at kFirstItemPage.
inline constexpr uint16_t kLoginPage = 0;
inline constexpr uint16_t kTransactionPage = 1;
inline constexpr uint16_t kPaymentPage = 2;
inline constexpr uint16_t kCallPage = 3;
inline constexpr uint16_t kFirstItemPage = 16;

inline constexpr int kDaySeconds = 86400;
// Day 0 of every synthetic world: 2025-01-06T00:00:00Z, a Monday.
inline constexpr int64_t kWorldEpoch = 1736121600;

struct Event {
    int32_t user_id = 0;
    int64_t ts = 0;  // seconds since epoch in files; pipeline upgrades to ms in place
    EventKind kind = EventKind::impression;
    int32_t item_id = -1;  // -1 when the event does not reference an item
    Channel channel = Channel::web;
    uint16_t page_id = 0;
    uint16_t placement_id = 0;
    uint16_t layout_id = 0;
    uint8_t device = 0;  // index into device_names()
    int16_t product_id = -1;
    int32_t session_id = -1;  // assigned by sessionization
};

const std::vector<std::string>& device_names();

struct ItemInfo {
    int32_t item_id = 0;
    int16_t product_id = 0;
    ContentType content_type = ContentType::servicing;
    uint16_t page_id = 0;
    std::vector<uint16_t> layouts;  // layout variants shown for this item
    float urgency = 0.0f;           // us(i), stakeholder constant
    float value = 0.0f;             // v(i), dollars per conversion
    int attribution_days = 30;
    std::vector<float> latent;
};

struct UserProfile {
    int32_t user_id = 0;
    std::vector<uint8_t> enrollments;  // multi-hot over the enrollment universe
    std::vector<float> tenure_days;    // aligned with enrollments; 0 when absent
    std::vector<float> latent;
    bool opt_out = false;
    uint64_t fm_seed = 0;
    float activity = 0.0f;  // per-day session propensity
};

// Daily user embedding standing in for a nightly-batched foundation-model
// vector: a fixed projection of the user's latent preferences plus per-day
// noise. Constant within a calendar day, deterministic across processes.
std::vector<float> fm_embedding(const UserProfile& profile, int day, int fm_dim);

struct ProductInfo {
    int16_t product_id = 0;
    std::string name;
    ContentType content_type = ContentType::servicing;
};

struct Catalog {
    std::vector<ProductInfo> products;
    std::vector<ItemInfo> items;  // indexed by item_id
};

// A conversion the generator deliberately constructed, with the session that
// carries its causal signal. Ground truth for explainability checks; never an
// input to training.
struct PlantedConversion {
    int32_t user_id = 0;
    int32_t item_id = 0;
    int64_t conversion_ts = 0;
    int64_t trigger_session_ts = 0;  // login timestamp of the trigger session
    bool has_trigger = false;
    bool external = false;  // no platform impression precedes it
    bool with_click = false;
};

// ---- newline-delimited JSON files, header line "#fintrec-data v1" ----

void write_events(const std::string& path, const std::vector<Event>& events);
std::vector<Event> read_events(const std::string& path);

void write_profiles(const std::string& path, const std::vector<UserProfile>& profiles);
std::vector<UserProfile> read_profiles(const std::string& path);

void write_catalog(const std::string& path, const Catalog& catalog);
Catalog read_catalog(const std::string& path);

void write_planted(const std::string& path, const std::vector<PlantedConversion>& planted);
std::vector<PlantedConversion> read_planted(const std::string& path);

}  // namespace fintrec
