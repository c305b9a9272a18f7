#include "nysgrad/error.hpp"

namespace nysgrad {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Argument: return "argument";
        case ErrorKind::IllConditioned: return "ill-conditioned";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::DegeneratePivot: return "degenerate-pivot";
        case ErrorKind::Capability: return "capability";
        case ErrorKind::Numerical: return "numerical";
        case ErrorKind::Config: return "config";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

}  // namespace nysgrad
