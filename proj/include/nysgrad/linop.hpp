#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>

#include <Eigen/Core>

namespace nysgrad {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using ApplyFn = std::function<Vector(const Vector&)>;
using BlockApplyFn = std::function<Matrix(const Matrix&)>;

inline constexpr Index kDefaultDenseCap = 2000;

struct OracleOptions {
    bool verify_symmetry = true;
    int symmetry_probes = 3;
    double symmetry_tol = 1e-6;  // relative
    std::uint64_t probe_seed = 0x5eed;
};

/// Matrix-free symmetric operator v -> Hv.
///
/// The wrapped callables must be deterministic and reentrant. Copies share a
/// product counter; `with_fresh_counter()` detaches one for per-solve counts.
/// An optional block apply lets backends extract several columns in one batched
/// product (it is counted as one product per column).
class HvpOracle {
public:
    HvpOracle(Index dim, ApplyFn apply, OracleOptions options = {});
    HvpOracle(Index dim, ApplyFn apply, BlockApplyFn block_apply, OracleOptions options = {});

    Index dim() const noexcept { return dim_; }

    Vector apply(const Vector& v) const;
    Matrix apply_block(const Matrix& v) const;

    std::uint64_t calls() const noexcept { return calls_->load(std::memory_order_relaxed); }
    HvpOracle with_fresh_counter() const;

private:
    Index dim_;
    ApplyFn apply_;
    BlockApplyFn block_apply_;
    std::shared_ptr<std::atomic<std::uint64_t>> calls_;
};

/// Dense symmetric reference backend. Stored exactly symmetric.
class DenseOperator {
public:
    /// Accepts matrices symmetric to within `symmetry_tol` (relative to the
    /// largest entry) and stores (M + M^T)/2.
    explicit DenseOperator(Matrix m, Index max_dim = kDefaultDenseCap, double symmetry_tol = 1e-10);

    Index dim() const noexcept { return matrix_.rows(); }
    const Matrix& matrix() const noexcept { return matrix_; }

    HvpOracle oracle() const;

private:
    Matrix matrix_;
};

Vector hvp_column(const HvpOracle& op, Index i);

/// Columns H[:, indices] as a p x k block, using the batched product when available.
Matrix hvp_columns(const HvpOracle& op, std::span<const Index> indices);

/// Materializes the oracle by probing every basis vector.
DenseOperator densify(const HvpOracle& op, Index max_dim = kDefaultDenseCap);

/// Solves (M + rho I) x = b with a dense symmetric factorization.
Vector dense_regularized_inverse_apply(const DenseOperator& m, double rho, const Vector& b);

/// Dense (M + rho I)^{-1}.
Matrix dense_regularized_inverse(const DenseOperator& m, double rho);

/// Spectral norm: max |eigenvalue| for the symmetric operator.
double operator_norm(const DenseOperator& m);
/// Largest singular value of an arbitrary (possibly rectangular) matrix.
double operator_norm(const Matrix& m);

struct ProbeReport {
    double max_linearity_error = 0.0;  // relative
    double max_symmetry_error = 0.0;   // relative
    bool deterministic = true;
};

/// Randomized check of the HvpOracle contract (linearity, symmetry, determinism).
ProbeReport probe_oracle(const HvpOracle& op, int probes, std::uint64_t seed);

}  // namespace nysgrad
