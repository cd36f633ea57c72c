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

#include <stdexcept>
#include <string>
#include <string_view>

namespace debias {

enum class ErrorKind {
    dimension,
    numeric,
    parse,
    encoding,
    domain,
    degenerate_cohort,
    empty_input,
    estimation,
    degenerate_stain,
    size,
    metadata,
    contract,
    training,
    stratification,
    undefined_metric,
    config,
    io,
    missing_artifact,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::parse: return "parse";
    case ErrorKind::encoding: return "encoding";
    case ErrorKind::domain: return "domain";
    case ErrorKind::degenerate_cohort: return "degenerate_cohort";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::estimation: return "estimation";
    case ErrorKind::degenerate_stain: return "degenerate_stain";
    case ErrorKind::size: return "size";
    case ErrorKind::metadata: return "metadata";
    case ErrorKind::contract: return "contract";
    case ErrorKind::training: return "training";
    case ErrorKind::stratification: return "stratification";
    case ErrorKind::undefined_metric: return "undefined_metric";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::missing_artifact: return "missing_artifact";
    }
    return "unknown";
}

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        fail(kind, message);
    }
}

} // namespace debias
