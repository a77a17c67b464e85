#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eqr {

enum class ErrorKind {
    Dimension,
    Config,
    Parse,
    Io,
    Numeric,
    Unsupported,
    Domain,
    Diverged,
    Degenerate,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void throw_error(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message)
{
    if (!condition) throw_error(kind, message);
}

}  // namespace eqr
