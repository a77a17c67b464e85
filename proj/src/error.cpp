#include "eqr/error.hpp"

namespace eqr {

std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
        case ErrorKind::Dimension: return "dimension error";
        case ErrorKind::Config: return "config error";
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::Io: return "I/O error";
        case ErrorKind::Numeric: return "numeric error";
        case ErrorKind::Unsupported: return "unsupported";
        case ErrorKind::Domain: return "domain error";
        case ErrorKind::Diverged: return "diverged";
        case ErrorKind::Degenerate: return "degenerate problem";
    }
    return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind)
{
}

void throw_error(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

}  // namespace eqr
