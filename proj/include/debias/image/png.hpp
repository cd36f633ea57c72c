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
#include "debias/image/image.hpp"

#include <png.h>

#include <filesystem>
#include <string>

namespace debias::image {

namespace detail {

template <int C>
constexpr png_uint_32 png_format() {
    return C == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
}

} // namespace detail

template <int C>
void write_png(const std::filesystem::path& path, const Image<C>& img) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    png_image desc{};
    desc.version = PNG_IMAGE_VERSION;
    desc.width = static_cast<png_uint_32>(img.width);
    desc.height = static_cast<png_uint_32>(img.height);
    desc.format = detail::png_format<C>();
    auto tmp = path;
    tmp += ".tmp";
    if (png_image_write_to_file(&desc, tmp.c_str(), 0, img.data.data(), 0, nullptr) == 0) {
        const std::string msg = desc.message;
        png_image_free(&desc);
        fail(ErrorKind::io, "cannot write " + path.string() + ": " + msg);
    }
    std::filesystem::rename(tmp, path);
}

/// Reads any PNG, converting to the requested channel layout.
template <int C>
Image<C> read_png(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        fail(ErrorKind::missing_artifact, "image not found: " + path.string());
    }
    png_image desc{};
    desc.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&desc, path.c_str()) == 0) {
        fail(ErrorKind::parse, path.string() + ": " + desc.message);
    }
    desc.format = detail::png_format<C>();
    Image<C> img(static_cast<int>(desc.width), static_cast<int>(desc.height));
    if (png_image_finish_read(&desc, nullptr, img.data.data(), 0, nullptr) == 0) {
        const std::string msg = desc.message;
        png_image_free(&desc);
        fail(ErrorKind::parse, path.string() + ": " + msg);
    }
    return img;
}

} // namespace debias::image
