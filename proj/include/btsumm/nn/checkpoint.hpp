#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "btsumm/common.hpp"
#include "btsumm/nn/tensor.hpp"

namespace btsumm::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian raw data");

// Container: magic "BTSCKPT1", u32 manifest length, manifest JSON
// (precision + named shapes + offsets), then raw parameter arrays.
inline constexpr char kCheckpointMagic[8] = {'B', 'T', 'S', 'C', 'K', 'P', 'T', '1'};

template <class T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor<T>*>>& tensors) {
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["precision"] = std::is_same_v<T, double> ? "f64" : "f32";
    nlohmann::json list = nlohmann::json::array();
    size_t offset = 0;
    for (const auto& [name, t] : tensors) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t->shape;
        e["offset"] = offset;
        e["count"] = t->numel();
        list.push_back(e);
        offset += t->numel() * sizeof(T);
    }
    manifest["tensors"] = list;
    std::string mstr = manifest.dump();

    std::string blob;
    blob.reserve(8 + 4 + mstr.size() + offset);
    blob.append(kCheckpointMagic, 8);
    uint32_t mlen = static_cast<uint32_t>(mstr.size());
    blob.append(reinterpret_cast<const char*>(&mlen), 4);
    blob.append(mstr);
    for (const auto& [name, t] : tensors)
        blob.append(reinterpret_cast<const char*>(t->v.data()), t->numel() * sizeof(T));
    write_file_atomic(path, blob);
}

// Fills the given tensors by name; shape must match. Converts precision when
// the file was written at the other width.
template <class T>
void load_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<T>*>>& tensors) {
    std::string blob = read_file(path);
    if (blob.size() < 12 || std::memcmp(blob.data(), kCheckpointMagic, 8) != 0)
        throw IoError("bad checkpoint magic in " + path);
    uint32_t mlen;
    std::memcpy(&mlen, blob.data() + 8, 4);
    if (blob.size() < 12 + mlen) throw IoError("truncated checkpoint manifest in " + path);
    nlohmann::json manifest = nlohmann::json::parse(blob.substr(12, mlen));
    bool stored_f64 = manifest.at("precision").get<std::string>() == "f64";
    size_t payload_base = 12 + mlen;

    struct Entry {
        std::vector<int> shape;
        size_t offset;
        size_t count;
    };
    std::unordered_map<std::string, Entry> index;
    for (const auto& e : manifest.at("tensors"))
        index[e.at("name").get<std::string>()] =
            Entry{e.at("shape").get<std::vector<int>>(), e.at("offset").get<size_t>(),
                  e.at("count").get<size_t>()};

    for (const auto& [name, t] : tensors) {
        auto it = index.find(name);
        if (it == index.end()) throw IoError("checkpoint " + path + " missing tensor " + name);
        const Entry& e = it->second;
        if (e.shape != t->shape)
            throw IoError("checkpoint " + path + ": shape mismatch for " + name);
        size_t width = stored_f64 ? sizeof(double) : sizeof(float);
        size_t need = payload_base + e.offset + e.count * width;
        if (blob.size() < need) throw IoError("truncated checkpoint payload in " + path);
        const char* src = blob.data() + payload_base + e.offset;
        if (stored_f64) {
            for (size_t i = 0; i < e.count; ++i) {
                double x;
                std::memcpy(&x, src + i * sizeof(double), sizeof(double));
                t->v[i] = static_cast<T>(x);
            }
        } else {
            for (size_t i = 0; i < e.count; ++i) {
                float x;
                std::memcpy(&x, src + i * sizeof(float), sizeof(float));
                t->v[i] = static_cast<T>(x);
            }
        }
    }
}

}  // namespace btsumm::nn
