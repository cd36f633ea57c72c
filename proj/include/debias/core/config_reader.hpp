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

#include <nlohmann/json.hpp>

#include <set>
#include <string>
#include <string_view>

namespace debias::config {

using nlohmann::json;

/// Strict reader over one JSON object. Every key must be consumed before
/// `finish()`, and every error names the dotted field path.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            fail(ErrorKind::config, (path_.empty() ? std::string("config") : path_) + ": expected an object");
        }
    }

    [[nodiscard]] std::string path_of(std::string_view key) const {
        return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
    }

    [[nodiscard]] bool has(std::string_view key) const { return j_.contains(std::string(key)); }

    template <class T>
    T get(std::string_view key, T fallback) {
        seen_.insert(std::string(key));
        const auto it = j_.find(std::string(key));
        if (it == j_.end() || it->is_null()) {
            return fallback;
        }
        return convert<T>(*it, key);
    }

    template <class T>
    T required(std::string_view key) {
        seen_.insert(std::string(key));
        const auto it = j_.find(std::string(key));
        if (it == j_.end()) {
            fail(ErrorKind::config, path_of(key) + ": required field missing");
        }
        return convert<T>(*it, key);
    }

    /// Raw sub-document, or nullptr when absent. Marks the key as seen.
    const json* raw(std::string_view key) {
        seen_.insert(std::string(key));
        const auto it = j_.find(std::string(key));
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.contains(it.key())) {
                fail(ErrorKind::config, path_of(it.key()) + ": unknown key");
            }
        }
    }

    [[noreturn]] void invalid(std::string_view key, const std::string& why) const {
        fail(ErrorKind::config, path_of(key) + ": " + why);
    }

private:
    template <class T>
    T convert(const json& v, std::string_view key) const {
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) invalid(key, "expected a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) invalid(key, "expected an integer");
                if constexpr (std::is_unsigned_v<T>) {
                    if (v.get<long long>() < 0) invalid(key, "must be non-negative");
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) invalid(key, "expected a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) invalid(key, "expected a string");
            }
            return v.get<T>();
        } catch (const json::exception& e) {
            invalid(key, e.what());
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

} // namespace debias::config
