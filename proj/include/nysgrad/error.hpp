#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace nysgrad {

enum class ErrorKind {
    Argument,
    IllConditioned,
    Divergence,
    DegeneratePivot,
    Capability,
    Numerical,
    Config,
    Io,
};

const char* to_string(ErrorKind kind);

/// Base error for the library. `backend()` is filled in when an error crosses
/// the hypergradient layer so callers can tell which IHVP solver failed.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what);

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& backend() const noexcept { return backend_; }
    void set_backend(std::string tag) { backend_ = std::move(tag); }

private:
    ErrorKind kind_;
    std::string backend_;
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& what) : Error(ErrorKind::Argument, what) {}
};

struct IllConditionedError : Error {
    explicit IllConditionedError(const std::string& what)
        : Error(ErrorKind::IllConditioned, what) {}
};

struct DegeneratePivotError : Error {
    explicit DegeneratePivotError(const std::string& what)
        : Error(ErrorKind::DegeneratePivot, what) {}
};

struct CapabilityError : Error {
    explicit CapabilityError(const std::string& what) : Error(ErrorKind::Capability, what) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

// Carries the last finite iterate so callers can inspect how far a solve got.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, Eigen::VectorXd last_finite, int step)
        : Error(ErrorKind::Divergence, what), last_finite_(std::move(last_finite)), step_(step) {}

    const Eigen::VectorXd& last_finite_iterate() const noexcept { return last_finite_; }
    int step() const noexcept { return step_; }

private:
    Eigen::VectorXd last_finite_;
    int step_;
};

}  // namespace nysgrad
