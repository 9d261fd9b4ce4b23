#pragma once

#include <nlohmann/json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2f/nn.hpp"

namespace f2f {

// Tensor archive: little-endian "F2FT" | u64 count | per tensor
// (u32 name_len, name, u32 rank, i64 dims..., f32 data...). A JSON metadata
// sidecar ("<path>.json") travels with every archive.

namespace ckpt_detail {

template <typename T>
void write_pod(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated archive");
    return v;
}

}  // namespace ckpt_detail

inline void save_tensors(const std::string& path,
                         const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write("F2FT", 4);
    ckpt_detail::write_pod<uint64_t>(os, tensors.size());
    for (const auto& [name, t] : tensors) {
        ckpt_detail::write_pod<uint32_t>(os, uint32_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        ckpt_detail::write_pod<uint32_t>(os, uint32_t(t.shape.size()));
        for (int64_t d : t.shape) ckpt_detail::write_pod<int64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.ptr()),
                 std::streamsize(t.data.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline std::map<std::string, Tensor> load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "F2FT", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint64_t count = ckpt_detail::read_pod<uint64_t>(is);
    std::map<std::string, Tensor> out;
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t name_len = ckpt_detail::read_pod<uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint32_t rank = ckpt_detail::read_pod<uint32_t>(is);
        std::vector<int64_t> shape(rank);
        for (uint32_t r = 0; r < rank; ++r) shape[r] = ckpt_detail::read_pod<int64_t>(is);
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.ptr()),
                std::streamsize(t.data.size() * sizeof(float)));
        if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

inline void save_params(const std::string& path, const nn::ParamList& params,
                        const nlohmann::json& metadata) {
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const auto& np : params) tensors.emplace_back(np.name, np.var->value);
    save_tensors(path, tensors);
    std::ofstream meta(path + ".json");
    if (!meta) throw std::runtime_error("checkpoint: cannot write sidecar for " + path);
    meta << metadata.dump(2) << "\n";
}

inline nlohmann::json load_metadata(const std::string& path) {
    std::ifstream meta(path + ".json");
    if (!meta) throw std::runtime_error("checkpoint: missing sidecar " + path + ".json");
    nlohmann::json j;
    meta >> j;
    return j;
}

inline void load_params(const std::string& path, const nn::ParamList& params) {
    std::map<std::string, Tensor> tensors = load_tensors(path);
    for (const auto& np : params) {
        auto it = tensors.find(np.name);
        if (it == tensors.end())
            throw std::runtime_error("checkpoint: missing tensor " + np.name + " in " + path);
        if (it->second.shape != np.var->value.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + np.name + " (" +
                                     Tensor::shape_str(it->second.shape) + " vs " +
                                     Tensor::shape_str(np.var->value.shape) + ")");
        np.var->value = it->second;
    }
}

}  // namespace f2f
