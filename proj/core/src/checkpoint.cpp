#include "movie/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "movie/shards.hpp"  // IoError

namespace movie {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("checkpoint: cannot create directory " + dir + ": " + ec.message());

    json manifest;
    manifest["format"] = "movie-kit-checkpoint";
    manifest["version"] = Checkpoint::kVersion;
    manifest["dtype"] = "f64le";
    manifest["config"] = ckpt.config;

    std::ofstream blob(fs::path(dir) / "params.bin", std::ios::binary | std::ios::trunc);
    if (!blob) throw IoError("checkpoint: cannot open " + dir + "/params.bin");
    int64_t offset = 0;
    json tensors = json::object();
    for (const auto& [name, t] : ckpt.tensors) {  // std::map: stable name order
        json entry;
        entry["shape"] = t.shape();
        entry["dtype"] = "f64le";
        entry["offset"] = offset;
        tensors[name] = entry;
        blob.write(reinterpret_cast<const char*>(t.data()),
                   (std::streamsize)(sizeof(double) * (size_t)t.numel()));
        offset += (int64_t)sizeof(double) * t.numel();
    }
    manifest["tensors"] = tensors;
    blob.close();

    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!mf) throw IoError("checkpoint: cannot open " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("checkpoint: cannot open " + dir + "/manifest.json");
    json manifest = json::parse(mf);
    if (manifest.at("format") != "movie-kit-checkpoint")
        throw IoError("checkpoint: " + dir + " is not a movie-kit checkpoint");
    if (manifest.at("version").get<int>() != Checkpoint::kVersion)
        throw IoError("checkpoint: unsupported version " +
                      std::to_string(manifest.at("version").get<int>()));

    std::ifstream blob(fs::path(dir) / "params.bin", std::ios::binary);
    if (!blob) throw IoError("checkpoint: cannot open " + dir + "/params.bin");

    Checkpoint ckpt;
    ckpt.config = manifest.value("config", json::object());
    for (const auto& [name, entry] : manifest.at("tensors").items()) {
        const auto shape = entry.at("shape").get<std::vector<int>>();
        if (entry.at("dtype") != "f64le")
            throw IoError("checkpoint: unsupported tensor dtype for " + name);
        Tensor t(shape);
        blob.seekg(entry.at("offset").get<int64_t>());
        blob.read(reinterpret_cast<char*>(t.data()),
                  (std::streamsize)(sizeof(double) * (size_t)t.numel()));
        if (blob.gcount() != (std::streamsize)(sizeof(double) * (size_t)t.numel()))
            throw IoError("checkpoint: blob truncated while reading " + name);
        ckpt.tensors.emplace(name, std::move(t));
    }
    return ckpt;
}

uint64_t tensor_map_checksum(const std::map<std::string, Tensor>& tensors) {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix_bytes = [&h](const void* p, size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [name, t] : tensors) {
        mix_bytes(name.data(), name.size());
        mix_bytes(t.data(), sizeof(double) * (size_t)t.numel());
    }
    return h;
}

}  // namespace movie
