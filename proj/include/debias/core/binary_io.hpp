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

#include "debias/core/error.hpp"
#include "debias/core/types.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace debias::io {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFU));
    }
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string source)
        : bytes_(bytes), source_(std::move(source)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    [[nodiscard]] bool at_end() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            fail(ErrorKind::parse, source_ + ": truncated at byte " + std::to_string(pos_));
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::missing_artifact, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Write-then-rename so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(ErrorKind::io, "cannot write " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            fail(ErrorKind::io, "short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

inline std::string read_text(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

/// Matrix file: u32 rows, u32 cols (little-endian), then row-major f32.
inline std::vector<std::uint8_t> encode_matrix(const FloatMatrix& m) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + 4 * static_cast<std::size_t>(m.size()));
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            put_f32(out, m(r, c));
        }
    }
    return out;
}

inline FloatMatrix decode_matrix(std::span<const std::uint8_t> bytes, const std::string& source) {
    ByteReader reader(bytes, source);
    const auto rows = reader.u32();
    const auto cols = reader.u32();
    const std::size_t expected = 8 + std::size_t{4} * rows * cols;
    if (bytes.size() != expected) {
        fail(ErrorKind::parse, source + ": expected " + std::to_string(expected) + " bytes for " +
                                   std::to_string(rows) + "x" + std::to_string(cols) + ", found " +
                                   std::to_string(bytes.size()));
    }
    FloatMatrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) {
            m(r, c) = reader.f32();
        }
    }
    return m;
}

/// FNV-1a over raw bytes, rendered as 16 hex digits.
inline std::string content_hash(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xFU];
        h >>= 4U;
    }
    return out;
}

} // namespace debias::io
