#include "nysgrad/linop.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "nysgrad/error.hpp"
#include "nysgrad/random.hpp"

namespace nysgrad {
namespace {

double symmetry_gap(const Vector& u, const Vector& hu, const Vector& v, const Vector& hv) {
    const double lhs = u.dot(hv);
    const double rhs = v.dot(hu);
    const double scale = std::max({u.norm() * hv.norm(), v.norm() * hu.norm(), 1e-300});
    return std::abs(lhs - rhs) / scale;
}

void require_dim(const Vector& v, Index dim, const char* what) {
    if (v.size() != dim) {
        throw ArgumentError(std::string(what) + ": expected dimension " + std::to_string(dim) +
                            ", got " + std::to_string(v.size()));
    }
}

}  // namespace

HvpOracle::HvpOracle(Index dim, ApplyFn apply, OracleOptions options)
    : HvpOracle(dim, std::move(apply), BlockApplyFn{}, options) {}

HvpOracle::HvpOracle(Index dim, ApplyFn apply, BlockApplyFn block_apply, OracleOptions options)
    : dim_(dim),
      apply_(std::move(apply)),
      block_apply_(std::move(block_apply)),
      calls_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
    if (dim_ <= 0) throw ArgumentError("HvpOracle: dimension must be positive");
    if (!apply_) throw ArgumentError("HvpOracle: empty apply function");
    if (!options.verify_symmetry) return;

    Rng rng(options.probe_seed);
    for (int probe = 0; probe < options.symmetry_probes; ++probe) {
        const Vector u = normal_vector(rng, dim_);
        const Vector v = normal_vector(rng, dim_);
        const Vector hu = apply_(u);
        const Vector hv = apply_(v);
        if (hu.size() != dim_ || hv.size() != dim_)
            throw ArgumentError("HvpOracle: apply returned a vector of the wrong size");
        const double gap = symmetry_gap(u, hu, v, hv);
        if (!(gap <= options.symmetry_tol)) {
            throw ArgumentError("HvpOracle: operator failed symmetry probe (relative gap " +
                                std::to_string(gap) + ")");
        }
    }
}

Vector HvpOracle::apply(const Vector& v) const {
    require_dim(v, dim_, "HvpOracle::apply");
    calls_->fetch_add(1, std::memory_order_relaxed);
    return apply_(v);
}

Matrix HvpOracle::apply_block(const Matrix& v) const {
    if (v.rows() != dim_) throw ArgumentError("HvpOracle::apply_block: row count mismatch");
    calls_->fetch_add(static_cast<std::uint64_t>(v.cols()), std::memory_order_relaxed);
    if (block_apply_) return block_apply_(v);
    Matrix out(dim_, v.cols());
    for (Index j = 0; j < v.cols(); ++j) out.col(j) = apply_(v.col(j));
    return out;
}

HvpOracle HvpOracle::with_fresh_counter() const {
    HvpOracle copy = *this;
    copy.calls_ = std::make_shared<std::atomic<std::uint64_t>>(0);
    return copy;
}

DenseOperator::DenseOperator(Matrix m, Index max_dim, double symmetry_tol) {
    if (m.rows() != m.cols()) throw ArgumentError("DenseOperator: matrix must be square");
    if (m.rows() == 0) throw ArgumentError("DenseOperator: empty matrix");
    if (m.rows() > max_dim) {
        throw CapabilityError("DenseOperator: dimension " + std::to_string(m.rows()) +
                              " exceeds dense cap " + std::to_string(max_dim));
    }
    if (!m.allFinite()) throw ArgumentError("DenseOperator: non-finite entries");
    const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > symmetry_tol * scale) {
        throw ArgumentError("DenseOperator: matrix is not symmetric (max gap " +
                            std::to_string(asym) + ")");
    }
    matrix_ = 0.5 * (m + m.transpose());
}

HvpOracle DenseOperator::oracle() const {
    // Shares the matrix by value; the oracle outlives this object safely.
    auto mat = std::make_shared<const Matrix>(matrix_);
    return HvpOracle(
        mat->rows(), [mat](const Vector& v) -> Vector { return (*mat) * v; },
        [mat](const Matrix& v) -> Matrix { return (*mat) * v; }, OracleOptions{.verify_symmetry = false});
}

Vector hvp_column(const HvpOracle& op, Index i) {
    if (i < 0 || i >= op.dim()) {
        throw ArgumentError("hvp_column: index " + std::to_string(i) + " out of range [0, " +
                            std::to_string(op.dim()) + ")");
    }
    return op.apply(Vector::Unit(op.dim(), i));
}

Matrix hvp_columns(const HvpOracle& op, std::span<const Index> indices) {
    Matrix basis = Matrix::Zero(op.dim(), static_cast<Index>(indices.size()));
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const Index i = indices[j];
        if (i < 0 || i >= op.dim()) {
            throw ArgumentError("hvp_columns: index " + std::to_string(i) + " out of range");
        }
        basis(i, static_cast<Index>(j)) = 1.0;
    }
    return op.apply_block(basis);
}

DenseOperator densify(const HvpOracle& op, Index max_dim) {
    if (op.dim() > max_dim) {
        throw CapabilityError("densify: dimension " + std::to_string(op.dim()) +
                              " exceeds dense cap " + std::to_string(max_dim));
    }
    Matrix m = op.apply_block(Matrix::Identity(op.dim(), op.dim()));
    return DenseOperator(std::move(m), max_dim, 1e-8);
}

Vector dense_regularized_inverse_apply(const DenseOperator& m, double rho, const Vector& b) {
    if (!(rho > 0.0)) throw ArgumentError("dense_regularized_inverse_apply: rho must be positive");
    require_dim(b, m.dim(), "dense_regularized_inverse_apply");

    Matrix a = m.matrix();
    a.diagonal().array() += rho;
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
        throw IllConditionedError("dense_regularized_inverse_apply: M + rho I is numerically singular");
    }
    Vector x = ldlt.solve(b);
    const double target = 1e-10 * b.norm();
    for (int refine = 0; refine < 3; ++refine) {
        const Vector r = b - a * x;
        if (r.norm() <= target) return x;
        x += ldlt.solve(r);
    }
    if ((b - a * x).norm() > target || !x.allFinite()) {
        throw IllConditionedError("dense_regularized_inverse_apply: residual above 1e-10 ||b||");
    }
    return x;
}

Matrix dense_regularized_inverse(const DenseOperator& m, double rho) {
    if (!(rho > 0.0)) throw ArgumentError("dense_regularized_inverse: rho must be positive");
    Matrix a = m.matrix();
    a.diagonal().array() += rho;
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
        throw IllConditionedError("dense_regularized_inverse: M + rho I is numerically singular");
    }
    Matrix inv = ldlt.solve(Matrix::Identity(m.dim(), m.dim()));
    return 0.5 * (inv + inv.transpose());
}

double operator_norm(const DenseOperator& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m.matrix(), Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("operator_norm: eigensolver did not converge");
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

double operator_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::BDCSVD<Matrix> svd(m);
    if (svd.info() != Eigen::Success) throw NumericalError("operator_norm: SVD did not converge");
    return svd.singularValues()(0);
}

ProbeReport probe_oracle(const HvpOracle& op, int probes, std::uint64_t seed) {
    ProbeReport report;
    Rng rng(seed);
    std::normal_distribution<double> coef(0.0, 1.0);
    const Index p = op.dim();
    for (int probe = 0; probe < probes; ++probe) {
        const Vector u = normal_vector(rng, p);
        const Vector v = normal_vector(rng, p);
        const double a = coef(rng);
        const double b = coef(rng);
        const Vector hu = op.apply(u);
        const Vector hv = op.apply(v);
        const Vector combo = op.apply(a * u + b * v);
        const Vector expect = a * hu + b * hv;
        const double lin_scale =
            std::max(std::abs(a) * hu.norm() + std::abs(b) * hv.norm(), 1e-300);
        report.max_linearity_error =
            std::max(report.max_linearity_error, (combo - expect).norm() / lin_scale);
        report.max_symmetry_error = std::max(report.max_symmetry_error, symmetry_gap(u, hu, v, hv));
        const Vector again = op.apply(u);
        if (again != hu) report.deterministic = false;
    }
    return report;
}

}  // namespace nysgrad
