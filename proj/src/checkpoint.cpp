// SPDX-License-Identifier: Apache-2.0
#include "fintrec/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fintrec {

namespace {

constexpr const char* kHeader = "#fintrec-ckpt v1";

}  // namespace

uint64_t fnv1a64(const void* data, size_t n, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t params_hash(const std::vector<std::pair<std::string, Tensor>>& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : params) {
        h = fnv1a64(name.data(), name.size(), h);
        for (int extent : t.shape()) {
            h = fnv1a64(&extent, sizeof(extent), h);
        }
        h = fnv1a64(t.data().data(), t.data().size() * sizeof(float), h);
    }
    return h;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json manifest;
    manifest["kind"] = ckpt.kind;
    manifest["meta"] = ckpt.meta;
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(ckpt.base_hash));
    manifest["base_hash"] = hex;
    size_t offset = 0;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [name, t] : ckpt.params) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["offset"] = offset;
        entries.push_back(std::move(e));
        offset += t.data().size() * sizeof(float);
    }
    manifest["params"] = std::move(entries);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out << kHeader << '\n' << manifest.dump() << '\n';
    for (const auto& [name, t] : ckpt.params) {
        (void)name;
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.data().size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
    std::string header, manifest_line;
    if (!std::getline(in, header) || header != kHeader) {
        throw std::runtime_error("checkpoint: bad header in " + path);
    }
    if (!std::getline(in, manifest_line)) {
        throw std::runtime_error("checkpoint: missing manifest in " + path);
    }
    nlohmann::json manifest = nlohmann::json::parse(manifest_line);

    Checkpoint ckpt;
    ckpt.kind = manifest.at("kind").get<std::string>();
    ckpt.meta = manifest.at("meta").get<std::string>();
    ckpt.base_hash = std::stoull(manifest.at("base_hash").get<std::string>(), nullptr, 16);

    const std::streampos data_start = in.tellg();
    for (const auto& e : manifest.at("params")) {
        const auto name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<Shape>();
        const auto offset = e.at("offset").get<size_t>();
        const auto count = static_cast<size_t>(shape_numel(shape));
        std::vector<float> data(count);
        in.seekg(data_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!in) throw std::runtime_error("checkpoint: truncated payload for " + name);
        ckpt.params.emplace_back(name, Tensor::param(shape, std::move(data)));
    }
    return ckpt;
}

}  // namespace fintrec
