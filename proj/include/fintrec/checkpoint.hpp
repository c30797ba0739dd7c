// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fintrec/tensor.hpp"

namespace fintrec {

// FNV-1a over raw bytes; the project-wide content hash.
uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ULL);

// Order-sensitive hash over names, shapes, and float payloads.
uint64_t params_hash(const std::vector<std::pair<std::string, Tensor>>& params);

// On-disk snapshot: a text header and manifest, then raw little-endian float
// buffers. Round-trips bit-exactly.
struct Checkpoint {
    std::string kind = "model";  // "model" or "adapter"
    std::string meta;            // JSON string: config and provenance
    uint64_t base_hash = 0;      // adapters: hash of the frozen base parameters
    std::vector<std::pair<std::string, Tensor>> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fintrec
