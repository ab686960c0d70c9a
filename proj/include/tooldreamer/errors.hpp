#pragma once

#include <stdexcept>
#include <string>

namespace tooldreamer {

/// Error category, mapped to process exit codes by the CLI:
/// usage/config -> 1, data -> 2, provider -> 3.
enum class ErrorKind { usage, data, provider };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error usage_error(const std::string& message) { return Error(ErrorKind::usage, message); }
inline Error data_error(const std::string& message) { return Error(ErrorKind::data, message); }
inline Error provider_error(const std::string& message) { return Error(ErrorKind::provider, message); }

} // namespace tooldreamer
