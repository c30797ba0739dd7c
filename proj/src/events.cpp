// SPDX-License-Identifier: Apache-2.0
#include "fintrec/events.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fintrec/rng.hpp"

namespace fintrec {

using nlohmann::json;

namespace {

constexpr const char* kHeader = "#fintrec-data v1";

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << kHeader << "\n";
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::string header;
    std::getline(in, header);
    if (header != kHeader) {
        throw std::runtime_error(path + ": unsupported format header '" + header +
                                 "', expected '" + kHeader + "'");
    }
    return in;
}

}  // namespace

const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::impression: return "impression";
        case EventKind::click: return "click";
        case EventKind::conversion: return "conversion";
        case EventKind::transaction: return "transaction";
        case EventKind::payment: return "payment";
        case EventKind::call: return "call";
        case EventKind::login: return "login";
    }
    return "?";
}

const char* to_string(Channel c) { return c == Channel::web ? "web" : "mobile"; }

const char* to_string(ContentType t) {
    switch (t) {
        case ContentType::marketing: return "marketing";
        case ContentType::servicing: return "servicing";
        case ContentType::third_party: return "third_party";
    }
    return "?";
}

EventKind event_kind_from_string(const std::string& s) {
    for (int k = 0; k <= static_cast<int>(EventKind::login); ++k) {
        if (s == to_string(static_cast<EventKind>(k))) return static_cast<EventKind>(k);
    }
    throw std::runtime_error("unknown event kind: " + s);
}

Channel channel_from_string(const std::string& s) {
    if (s == "web") return Channel::web;
    if (s == "mobile") return Channel::mobile;
    throw std::runtime_error("unknown channel: " + s);
}

ContentType content_type_from_string(const std::string& s) {
    for (int t = 0; t <= static_cast<int>(ContentType::third_party); ++t) {
        if (s == to_string(static_cast<ContentType>(t))) return static_cast<ContentType>(t);
    }
    throw std::runtime_error("unknown content type: " + s);
}

const std::vector<std::string>& device_names() {
    static const std::vector<std::string> names = {"desktop", "ios", "android"};
    return names;
}

std::vector<float> fm_embedding(const UserProfile& profile, int day, int fm_dim) {
    const int ld = static_cast<int>(profile.latent.size());
    std::vector<float> out(fm_dim, 0.0f);
    // projection rows depend only on dimensions, so every process agrees on it
    Rng proj(0xf17ec0defacadeULL + static_cast<uint64_t>(fm_dim) * 131 + ld);
    for (int k = 0; k < fm_dim; ++k) {
        float acc = 0.0f;
        for (int j = 0; j < ld; ++j) {
            acc += static_cast<float>(proj.normal()) * profile.latent[j];
        }
        out[k] = acc;
    }
    Rng noise = Rng(profile.fm_seed).fork(static_cast<uint64_t>(day));
    for (int k = 0; k < fm_dim; ++k) out[k] += 0.3f * static_cast<float>(noise.normal());
    return out;
}

void write_events(const std::string& path, const std::vector<Event>& events) {
    auto out = open_out(path);
    for (const auto& e : events) {
        json j;
        j["user_id"] = e.user_id;
        j["ts"] = e.ts;
        j["kind"] = to_string(e.kind);
        j["item_id"] = e.item_id;
        j["channel"] = to_string(e.channel);
        j["page_id"] = e.page_id;
        j["placement_id"] = e.placement_id;
        j["layout_id"] = e.layout_id;
        j["device"] = device_names()[e.device];
        j["product_id"] = e.product_id;
        out << j.dump() << "\n";
    }
}

std::vector<Event> read_events(const std::string& path) {
    auto in = open_in(path);
    std::vector<Event> events;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        Event e;
        e.user_id = j.at("user_id").get<int32_t>();
        e.ts = j.at("ts").get<int64_t>();
        e.kind = event_kind_from_string(j.at("kind").get<std::string>());
        e.item_id = j.at("item_id").is_null() ? -1 : j.at("item_id").get<int32_t>();
        e.channel = channel_from_string(j.at("channel").get<std::string>());
        e.page_id = j.at("page_id").get<uint16_t>();
        e.placement_id = j.at("placement_id").get<uint16_t>();
        e.layout_id = j.at("layout_id").get<uint16_t>();
        const std::string dev = j.at("device").get<std::string>();
        e.device = 0;
        for (size_t d = 0; d < device_names().size(); ++d) {
            if (device_names()[d] == dev) e.device = static_cast<uint8_t>(d);
        }
        e.product_id = j.at("product_id").is_null() ? -1 : j.at("product_id").get<int16_t>();
        events.push_back(e);
    }
    return events;
}

void write_profiles(const std::string& path, const std::vector<UserProfile>& profiles) {
    auto out = open_out(path);
    for (const auto& p : profiles) {
        json j;
        j["user_id"] = p.user_id;
        j["enrollments"] = p.enrollments;
        j["tenure_days"] = p.tenure_days;
        j["latent"] = p.latent;
        j["opt_out"] = p.opt_out;
        j["fm_seed"] = p.fm_seed;
        j["activity"] = p.activity;
        out << j.dump() << "\n";
    }
}

std::vector<UserProfile> read_profiles(const std::string& path) {
    auto in = open_in(path);
    std::vector<UserProfile> profiles;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        UserProfile p;
        p.user_id = j.at("user_id").get<int32_t>();
        p.enrollments = j.at("enrollments").get<std::vector<uint8_t>>();
        p.tenure_days = j.at("tenure_days").get<std::vector<float>>();
        p.latent = j.at("latent").get<std::vector<float>>();
        p.opt_out = j.at("opt_out").get<bool>();
        p.fm_seed = j.at("fm_seed").get<uint64_t>();
        p.activity = j.at("activity").get<float>();
        profiles.push_back(std::move(p));
    }
    return profiles;
}

void write_catalog(const std::string& path, const Catalog& catalog) {
    auto out = open_out(path);
    for (const auto& p : catalog.products) {
        json j;
        j["record"] = "product";
        j["product_id"] = p.product_id;
        j["name"] = p.name;
        j["content_type"] = to_string(p.content_type);
        out << j.dump() << "\n";
    }
    for (const auto& it : catalog.items) {
        json j;
        j["record"] = "item";
        j["item_id"] = it.item_id;
        j["product_id"] = it.product_id;
        j["content_type"] = to_string(it.content_type);
        j["page_id"] = it.page_id;
        j["layouts"] = it.layouts;
        j["urgency"] = it.urgency;
        j["value"] = it.value;
        j["attribution_days"] = it.attribution_days;
        j["latent"] = it.latent;
        out << j.dump() << "\n";
    }
}

Catalog read_catalog(const std::string& path) {
    auto in = open_in(path);
    Catalog catalog;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const std::string record = j.at("record").get<std::string>();
        if (record == "product") {
            ProductInfo p;
            p.product_id = j.at("product_id").get<int16_t>();
            p.name = j.at("name").get<std::string>();
            p.content_type = content_type_from_string(j.at("content_type").get<std::string>());
            catalog.products.push_back(std::move(p));
        } else if (record == "item") {
            ItemInfo it;
            it.item_id = j.at("item_id").get<int32_t>();
            it.product_id = j.at("product_id").get<int16_t>();
            it.content_type = content_type_from_string(j.at("content_type").get<std::string>());
            it.page_id = j.at("page_id").get<uint16_t>();
            it.layouts = j.at("layouts").get<std::vector<uint16_t>>();
            it.urgency = j.at("urgency").get<float>();
            it.value = j.at("value").get<float>();
            it.attribution_days = j.at("attribution_days").get<int>();
            it.latent = j.at("latent").get<std::vector<float>>();
            catalog.items.push_back(std::move(it));
        } else {
            throw std::runtime_error("catalog: unknown record type " + record);
        }
    }
    return catalog;
}

void write_planted(const std::string& path, const std::vector<PlantedConversion>& planted) {
    auto out = open_out(path);
    for (const auto& p : planted) {
        json j;
        j["user_id"] = p.user_id;
        j["item_id"] = p.item_id;
        j["conversion_ts"] = p.conversion_ts;
        j["trigger_session_ts"] = p.trigger_session_ts;
        j["has_trigger"] = p.has_trigger;
        j["external"] = p.external;
        j["with_click"] = p.with_click;
        out << j.dump() << "\n";
    }
}

std::vector<PlantedConversion> read_planted(const std::string& path) {
    auto in = open_in(path);
    std::vector<PlantedConversion> planted;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        PlantedConversion p;
        p.user_id = j.at("user_id").get<int32_t>();
        p.item_id = j.at("item_id").get<int32_t>();
        p.conversion_ts = j.at("conversion_ts").get<int64_t>();
        p.trigger_session_ts = j.at("trigger_session_ts").get<int64_t>();
        p.has_trigger = j.at("has_trigger").get<bool>();
        p.external = j.at("external").get<bool>();
        p.with_click = j.at("with_click").get<bool>();
        planted.push_back(p);
    }
    return planted;
}

}  // namespace fintrec
