#pragma once

#include <stdexcept>
#include <string>

namespace pmnc {

/// Bad configuration, bounds, or arguments. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unreadable, malformed, or quality-rejected input data. CLI exit code 3.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Anything else that aborts a command. CLI exit code 4.
struct RuntimeFailure : std::runtime_error {
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace pmnc
