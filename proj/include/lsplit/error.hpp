// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace lsplit {

enum class Errc {
    dimension,  // shape mismatch between operands
    numeric,    // NaN/Inf where finite values are required
    parameter,  // invalid configuration or argument
    state,      // cache or session state inconsistent with the request
    plan,       // invalid partition plan
    overflow,   // sequence position beyond max_len
    frame,      // malformed wire frame or payload
    channel,    // transport failure
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + " error: " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

inline const char* errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::dimension: return "dimension";
        case Errc::numeric: return "numeric";
        case Errc::parameter: return "parameter";
        case Errc::state: return "state";
        case Errc::plan: return "plan";
        case Errc::overflow: return "overflow";
        case Errc::frame: return "frame";
        case Errc::channel: return "channel";
    }
    return "unknown";
}

}  // namespace lsplit
