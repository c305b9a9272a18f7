#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace nysgrad {

/// Thread-local accounting of scratch memory held by solver kernels.
///
/// Kernels register every work array they allocate through a ScratchLease; the
/// meter tracks the running total and its high-water mark. Inputs (oracles,
/// Nystrom factors, right-hand sides) are not counted.
class WorkspaceMeter {
public:
    static void reset();
    /// Drops the high-water mark to the current level; returns that level.
    static std::size_t reset_peak();
    static std::size_t current();
    static std::size_t peak();

private:
    friend class ScratchLease;
    static void acquire(std::size_t bytes);
    static void release(std::size_t bytes);
};

class ScratchLease {
public:
    explicit ScratchLease(std::size_t bytes = 0) : bytes_(bytes) { WorkspaceMeter::acquire(bytes_); }
    template <class Derived>
    explicit ScratchLease(const Eigen::DenseBase<Derived>& m)
        : ScratchLease(static_cast<std::size_t>(m.size()) * sizeof(typename Derived::Scalar)) {}
    ~ScratchLease() { WorkspaceMeter::release(bytes_); }

    ScratchLease(const ScratchLease&) = delete;
    ScratchLease& operator=(const ScratchLease&) = delete;

    std::size_t bytes() const noexcept { return bytes_; }

private:
    std::size_t bytes_;
};

}  // namespace nysgrad
