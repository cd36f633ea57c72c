/*
 * Copyright 2026 The tma-debias Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include "debias/core/binary_io.hpp"
#include "debias/core/error.hpp"
#include "debias/core/random.hpp"
#include "debias/nn/losses.hpp"
#include "debias/nn/mlp.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace debias::nn {

/// Layer widths for the three kinds of networks in a bundle.
struct Architecture {
    std::vector<std::size_t> fe_hidden{64};
    std::size_t feature_dim = 64;
    std::vector<std::size_t> head_hidden{32, 32};
};

/// Feature extractor, task head and one adversarial head per bias.
struct ModelBundle {
    Mlp fe;
    Mlp msi_head;
    std::vector<Mlp> be_heads;
    std::vector<std::string> bias_names;

    void validate() const {
        if (be_heads.size() != bias_names.size()) {
            fail(ErrorKind::contract, "bundle: " + std::to_string(be_heads.size()) + " bias heads for " +
                                          std::to_string(bias_names.size()) + " bias names");
        }
        if (msi_head.input_dim() != fe.output_dim()) {
            fail(ErrorKind::dimension, "bundle: task head input width does not match feature width");
        }
        if (msi_head.output_dim() != 2) {
            fail(ErrorKind::dimension, "bundle: task head must have 2 outputs");
        }
        for (std::size_t i = 0; i < be_heads.size(); ++i) {
            if (be_heads[i].input_dim() != fe.output_dim()) {
                fail(ErrorKind::dimension, "bundle: head '" + bias_names[i] + "' input width does not match features");
            }
        }
    }

    friend bool operator==(const ModelBundle& a, const ModelBundle& b) {
        return a.fe == b.fe && a.msi_head == b.msi_head && a.be_heads == b.be_heads && a.bias_names == b.bias_names;
    }
};

inline std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> d{in};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(out);
    return d;
}

/// Each network draws from its own seed stream, so the extractor and task
/// head initialize identically whether or not bias heads are attached.
inline ModelBundle make_bundle(std::size_t input_dim, const Architecture& arch,
                               const std::vector<std::string>& bias_names,
                               const std::vector<std::size_t>& bias_categories, std::uint64_t seed) {
    if (bias_names.size() != bias_categories.size()) {
        fail(ErrorKind::contract, "make_bundle: category counts do not match bias names");
    }
    ModelBundle b;
    Rng fe_rng = make_rng(seed, "init/fe");
    b.fe = Mlp::random(chain(input_dim, arch.fe_hidden, arch.feature_dim), fe_rng);
    Rng msi_rng = make_rng(seed, "init/msi");
    b.msi_head = Mlp::random(chain(arch.feature_dim, arch.head_hidden, 2), msi_rng);
    for (std::size_t i = 0; i < bias_names.size(); ++i) {
        Rng rng = make_rng(seed, "init/be/" + bias_names[i]);
        b.be_heads.push_back(Mlp::random(chain(arch.feature_dim, arch.head_hidden, bias_categories[i]), rng));
    }
    b.bias_names = bias_names;
    return b;
}

/// MSI-H probability per row.
inline Vector predict_msi(const ModelBundle& b, const Matrix& x) {
    const Matrix p = softmax(forward(b.msi_head, forward(b.fe, x)));
    return p.col(1);
}

// --- checkpoint file ---------------------------------------------------
//
// "DBCK", u32 version, u32 network count, then per network: u32 layer
// count, (layers + 1) u32 widths. Parameters follow for every network in
// order (extractor, task head, bias heads): per layer the weights
// row-major (in x out) then the bias, as little-endian f32.

inline constexpr std::array<std::uint8_t, 4> checkpoint_magic{'D', 'B', 'C', 'K'};
inline constexpr std::uint32_t checkpoint_version = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const ModelBundle& b) {
    b.validate();
    std::vector<const Mlp*> nets{&b.fe, &b.msi_head};
    for (const auto& h : b.be_heads) {
        nets.push_back(&h);
    }
    std::vector<std::uint8_t> out(checkpoint_magic.begin(), checkpoint_magic.end());
    io::put_u32(out, checkpoint_version);
    io::put_u32(out, static_cast<std::uint32_t>(nets.size()));
    for (const Mlp* n : nets) {
        const auto dims = n->dims();
        io::put_u32(out, static_cast<std::uint32_t>(n->num_layers()));
        for (auto d : dims) {
            io::put_u32(out, static_cast<std::uint32_t>(d));
        }
    }
    for (const Mlp* n : nets) {
        for (const auto& l : n->layers()) {
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
                    io::put_f32(out, static_cast<float>(l.weights(r, c)));
                }
            }
            for (Eigen::Index c = 0; c < l.bias.size(); ++c) {
                io::put_f32(out, static_cast<float>(l.bias(c)));
            }
        }
    }
    return out;
}

inline ModelBundle decode_checkpoint(std::span<const std::uint8_t> bytes, std::vector<std::string> bias_names,
                                     const std::string& source) {
    io::ByteReader reader(bytes, source);
    const auto magic = reader.raw(4);
    if (!std::equal(magic.begin(), magic.end(), checkpoint_magic.begin())) {
        fail(ErrorKind::parse, source + ": not a checkpoint (bad magic)");
    }
    if (const auto v = reader.u32(); v != checkpoint_version) {
        fail(ErrorKind::parse, source + ": unsupported checkpoint version " + std::to_string(v));
    }
    const auto count = reader.u32();
    if (count < 2 || count - 2 != bias_names.size()) {
        fail(ErrorKind::parse, source + ": " + std::to_string(count) + " networks but " +
                                   std::to_string(bias_names.size()) + " bias names in sidecar");
    }
    std::vector<std::vector<std::size_t>> shapes(count);
    for (auto& s : shapes) {
        const auto layers = reader.u32();
        for (std::uint32_t i = 0; i <= layers; ++i) {
            s.push_back(reader.u32());
        }
    }
    std::vector<Mlp> nets;
    for (const auto& s : shapes) {
        std::vector<Layer> layers;
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            Layer l{Matrix(static_cast<Eigen::Index>(s[i]), static_cast<Eigen::Index>(s[i + 1])),
                    RowVector(static_cast<Eigen::Index>(s[i + 1]))};
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
                    l.weights(r, c) = reader.f32();
                }
            }
            for (Eigen::Index c = 0; c < l.bias.size(); ++c) {
                l.bias(c) = reader.f32();
            }
            layers.push_back(std::move(l));
        }
        nets.emplace_back(std::move(layers));
    }
    if (!reader.at_end()) {
        fail(ErrorKind::parse, source + ": trailing bytes after parameters");
    }
    ModelBundle b;
    b.fe = std::move(nets[0]);
    b.msi_head = std::move(nets[1]);
    for (std::size_t i = 2; i < nets.size(); ++i) {
        b.be_heads.push_back(std::move(nets[i]));
    }
    b.bias_names = std::move(bias_names);
    b.validate();
    return b;
}

/// Sidecar path: `<checkpoint>.json`.
inline std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
    auto p = checkpoint;
    p += ".json";
    return p;
}

inline void save_checkpoint(const ModelBundle& b, const std::filesystem::path& path, const std::string& config_hash,
                            nlohmann::json extra = nlohmann::json::object()) {
    io::write_file_atomic(path, encode_checkpoint(b));
    nlohmann::json side = std::move(extra);
    side["bias_names"] = b.bias_names;
    side["config_hash"] = config_hash;
    side["format_version"] = checkpoint_version;
    io::write_text_atomic(sidecar_path(path), side.dump(2) + "\n");
}

struct LoadedCheckpoint {
    ModelBundle bundle;
    nlohmann::json sidecar;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        fail(ErrorKind::missing_artifact, "checkpoint not found: " + path.string());
    }
    const auto side_path = sidecar_path(path);
    if (!std::filesystem::exists(side_path)) {
        fail(ErrorKind::missing_artifact, "checkpoint sidecar not found: " + side_path.string());
    }
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(io::read_text(side_path));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, side_path.string() + ": " + e.what());
    }
    auto names = side.value("bias_names", std::vector<std::string>{});
    auto bytes = io::read_file(path);
    return {decode_checkpoint(bytes, std::move(names), path.string()), std::move(side)};
}

} // namespace debias::nn
