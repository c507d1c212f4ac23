#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "movie/tensor.hpp"

namespace movie {

/// Named-tensor bundle on disk: <dir>/manifest.json describing each tensor
/// (shape, dtype, byte offset) plus <dir>/params.bin, one raw blob of
/// little-endian doubles. Save/load round-trips are bitwise lossless; the
/// manifest carries a mandatory version field and an echo of the producing
/// configuration.
struct Checkpoint {
    static constexpr int kVersion = 1;

    std::map<std::string, Tensor> tensors;
    nlohmann::json config = nlohmann::json::object();
};

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& dir);

/// FNV-1a over a tensor map's raw bytes in name order; used to verify that
/// frozen parameters stay frozen.
uint64_t tensor_map_checksum(const std::map<std::string, Tensor>& tensors);

}  // namespace movie
