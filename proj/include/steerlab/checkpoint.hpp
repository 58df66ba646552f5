// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "steerlab/model.hpp"

namespace steerlab::tinylm {

// Checkpoint layout: a text manifest (format version, config fields, one
// `tensor <name> <rank> <dims...> <byte_offset>` line per weight), a
// `data <nbytes>` line, then raw little-endian float32 arrays. Weights are
// stored at fp32; save -> load -> save round-trips bit-exactly.

constexpr const char* kCheckpointMagic = "steerlab-checkpoint";
constexpr int kCheckpointVersion = 1;

namespace detail {

inline void append_f32_le(std::string& out, const std::vector<double>& values) {
    for (double d : values) {
        const auto f = static_cast<float>(d);
        std::uint32_t u = 0;
        std::memcpy(&u, &f, 4);
        out.push_back(static_cast<char>(u & 0xff));
        out.push_back(static_cast<char>((u >> 8) & 0xff));
        out.push_back(static_cast<char>((u >> 16) & 0xff));
        out.push_back(static_cast<char>((u >> 24) & 0xff));
    }
}

inline double read_f32_le(const std::string& bytes, std::size_t off) {
    std::uint32_t u = static_cast<unsigned char>(bytes[off]) |
                      (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 8) |
                      (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 16) |
                      (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 3])) << 24);
    float f = 0.0f;
    std::memcpy(&f, &u, 4);
    return static_cast<double>(f);
}

}  // namespace detail

inline std::string serialize_checkpoint(const TransformerModel& model) {
    const auto& cfg = model.config();
    std::ostringstream manifest;
    manifest << kCheckpointMagic << " " << kCheckpointVersion << "\n";
    manifest << "vocab_size " << cfg.vocab_size << "\n";
    manifest << "d_model " << cfg.d_model << "\n";
    manifest << "n_layers " << cfg.n_layers << "\n";
    manifest << "n_heads " << cfg.n_heads << "\n";
    manifest << "ctx_len " << cfg.ctx_len << "\n";
    manifest << "seed " << cfg.seed << "\n";

    std::string blob;
    for (const auto& [name, t] : model.named_parameters()) {
        manifest << "tensor " << name << " " << t->shape.size();
        for (std::size_t d : t->shape) {
            manifest << " " << d;
        }
        manifest << " " << blob.size() << "\n";
        detail::append_f32_le(blob, t->value);
    }
    manifest << "data " << blob.size() << "\n";
    return manifest.str() + blob;
}

inline void save_checkpoint(const TransformerModel& model, const std::string& path) {
    write_file_bytes(path, serialize_checkpoint(model));
}

inline TransformerModel deserialize_checkpoint(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kCheckpointMagic) {
        throw IoError("not a steerlab checkpoint");
    }
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    }
    ModelConfig cfg;
    struct Entry {
        std::string name;
        std::vector<std::size_t> shape;
        std::size_t offset;
    };
    std::vector<Entry> entries;
    std::size_t data_bytes = 0;
    std::string key;
    while (in >> key) {
        if (key == "vocab_size") {
            in >> cfg.vocab_size;
        } else if (key == "d_model") {
            in >> cfg.d_model;
        } else if (key == "n_layers") {
            in >> cfg.n_layers;
        } else if (key == "n_heads") {
            in >> cfg.n_heads;
        } else if (key == "ctx_len") {
            in >> cfg.ctx_len;
        } else if (key == "seed") {
            in >> cfg.seed;
        } else if (key == "tensor") {
            Entry e;
            std::size_t rank = 0;
            in >> e.name >> rank;
            e.shape.resize(rank);
            for (std::size_t i = 0; i < rank; ++i) {
                in >> e.shape[i];
            }
            in >> e.offset;
            entries.push_back(std::move(e));
        } else if (key == "data") {
            in >> data_bytes;
            break;
        } else {
            throw IoError("unknown checkpoint manifest key: " + key);
        }
    }
    if (!in) {
        throw IoError("truncated checkpoint manifest");
    }
    in.get();  // newline after the data line
    const auto data_start = static_cast<std::size_t>(in.tellg());
    if (bytes.size() < data_start + data_bytes) {
        throw IoError("truncated checkpoint payload");
    }

    TransformerModel model(cfg);
    auto named = model.named_parameters();
    if (entries.size() != named.size()) {
        throw IoError("checkpoint tensor count mismatch");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& [name, t] = named[i];
        const auto& e = entries[i];
        if (e.name != name || e.shape != t->shape) {
            throw IoError("checkpoint tensor mismatch at " + e.name);
        }
        const std::size_t off = data_start + e.offset;
        if (off + 4 * t->numel() > bytes.size()) {
            throw IoError("checkpoint tensor out of bounds: " + e.name);
        }
        for (std::size_t j = 0; j < t->numel(); ++j) {
            t->value[j] = detail::read_f32_le(bytes, off + 4 * j);
        }
    }
    return model;
}

inline TransformerModel load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file_bytes(path));
}

inline std::string TransformerModel::digest() const {
    return digest_of_bytes(serialize_checkpoint(*this));
}

}  // namespace steerlab::tinylm
