#include "nysgrad/nystrom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "nysgrad/error.hpp"
#include "nysgrad/random.hpp"
#include "nysgrad/workspace.hpp"

namespace nysgrad {
namespace {

std::vector<Index> sample_uniform(Index p, Index k, Rng& rng) {
    std::vector<Index> pool(static_cast<std::size_t>(p));
    std::iota(pool.begin(), pool.end(), Index{0});
    // partial Fisher-Yates
    for (Index i = 0; i < k; ++i) {
        std::uniform_int_distribution<Index> pick(i, p - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
}

Eigen::LDLT<Matrix> factor_or_throw(const Matrix& s, const std::string& where) {
    Eigen::LDLT<Matrix> ldlt(s);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-15) || !s.allFinite()) {
        throw IllConditionedError("inverse_apply: inner system is numerically singular in " + where);
    }
    return ldlt;
}

Vector apply_full(const NystromFactors& f, const Vector& b) {
    const double rho = f.rho();
    const Matrix& ur = f.retained_eigvecs();

    Matrix l = f.columns() * ur;  // p x r
    ScratchLease l_lease(l);
    Matrix s = l.transpose() * l / rho;
    ScratchLease s_lease(s);
    s.diagonal() += f.retained_eigvals();

    const auto ldlt = factor_or_throw(s, "the full block");
    Vector y = ldlt.solve(l.transpose() * b);
    Vector x = b / rho - l * y / (rho * rho);
    ScratchLease x_lease(x);
    return x;
}

// Block Woodbury recurrence in coefficient space. After processing the first s
// retained columns the accumulated inverse is
//     (1/rho) I - L_{<s} M L_{<s}^T,   L = C U_r,
// so only M (r x r) and the current chunk of L (p x kappa) are held.
Vector apply_streaming(const NystromFactors& f, Index kappa, const Vector& b) {
    const double rho = f.rho();
    const Matrix& c = f.columns();
    const Matrix& ur = f.retained_eigvecs();
    const Vector& lambda = f.retained_eigvals();
    const Index r = ur.cols();

    Matrix m = Matrix::Zero(r, r);
    ScratchLease m_lease(m);
    Matrix lb(c.rows(), std::min(kappa, r));
    ScratchLease lb_lease(lb);

    for (Index start = 0, chunk = 0; start < r; start += kappa, ++chunk) {
        const Index width = std::min(kappa, r - start);
        lb.leftCols(width).noalias() = c * ur.middleCols(start, width);
        const auto block = lb.leftCols(width);

        Matrix z = c.transpose() * block;  // k x width
        ScratchLease z_lease(z);
        const Matrix t = ur.leftCols(start).transpose() * z;             // L_{<s}^T L_B
        const Matrix gram = ur.middleCols(start, width).transpose() * z;  // L_B^T L_B
        const Matrix mt = m.topLeftCorner(start, start) * t;
        ScratchLease t_lease(t.size() * 2 * sizeof(double) + gram.size() * sizeof(double));

        Matrix s = gram / rho - t.transpose() * mt;
        s = 0.5 * (s + s.transpose());
        s.diagonal() += lambda.segment(start, width);

        Matrix coef(start + width, width);
        coef.topRows(start) = -mt;
        coef.bottomRows(width) = Matrix::Identity(width, width) / rho;
        ScratchLease coef_lease(coef);

        const auto ldlt = factor_or_throw(
            s, "chunk " + std::to_string(chunk) + " (columns " + std::to_string(start) + ".." +
                   std::to_string(start + width - 1) + ")");
        const Matrix update = coef * ldlt.solve(coef.transpose());
        m.topLeftCorner(start + width, start + width) += 0.5 * (update + update.transpose());
    }

    const Vector coeffs = ur * (m * (ur.transpose() * (c.transpose() * b)));
    Vector x = b / rho - c * coeffs;
    ScratchLease x_lease(x);
    return x;
}

double symmetric_opnorm(const Matrix& m) {
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("eigensolver did not converge");
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

IndexSample sample_indices(Index p, Index k, const SamplingStrategy& strategy,
                           std::span<const double> diag) {
    if (p < 1) throw ArgumentError("sample_indices: p must be positive");
    if (k < 1 || k > p) {
        throw ArgumentError("sample_indices: need 1 <= k <= p, got k=" + std::to_string(k) +
                            ", p=" + std::to_string(p));
    }
    Rng rng(strategy.seed);
    IndexSample out;

    if (strategy.kind == SamplingKind::Uniform) {
        out.indices = sample_uniform(p, k, rng);
    } else {
        if (static_cast<Index>(diag.size()) != p) {
            throw ArgumentError("sample_indices: diagonal-squared sampling needs a length-p diagonal");
        }
        std::vector<double> weight(diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) {
            if (!std::isfinite(diag[i])) throw ArgumentError("sample_indices: non-finite diagonal");
            weight[i] = diag[i] * diag[i];
        }
        out.all_zero_weights = std::all_of(weight.begin(), weight.end(), [](double w) { return w == 0.0; });

        std::vector<bool> taken(diag.size(), false);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (Index draw = 0; draw < k; ++draw) {
            double total = 0.0;
            for (std::size_t i = 0; i < weight.size(); ++i)
                if (!taken[i]) total += weight[i];

            Index chosen = -1;
            if (total > 0.0) {
                const double target = unit(rng) * total;
                double acc = 0.0;
                for (std::size_t i = 0; i < weight.size(); ++i) {
                    if (taken[i] || weight[i] == 0.0) continue;
                    acc += weight[i];
                    chosen = static_cast<Index>(i);
                    if (acc > target) break;
                }
            } else {
                std::vector<Index> leftover;
                for (std::size_t i = 0; i < taken.size(); ++i)
                    if (!taken[i]) leftover.push_back(static_cast<Index>(i));
                std::uniform_int_distribution<std::size_t> pick(0, leftover.size() - 1);
                chosen = leftover[pick(rng)];
                ++out.uniform_fallback_draws;
            }
            taken[static_cast<std::size_t>(chosen)] = true;
            out.indices.push_back(chosen);
        }
    }
    std::sort(out.indices.begin(), out.indices.end());
    return out;
}

NystromFactors::NystromFactors(std::vector<Index> indices, Matrix columns, Matrix pivot_eigvecs,
                               Vector pivot_eigvals, double rho, double eig_floor)
    : indices_(std::move(indices)),
      columns_(std::move(columns)),
      pivot_eigvecs_(std::move(pivot_eigvecs)),
      pivot_eigvals_(std::move(pivot_eigvals)),
      rho_(rho) {
    const Index k = static_cast<Index>(indices_.size());
    if (!(rho_ > 0.0)) throw ArgumentError("NystromFactors: rho must be positive");
    if (!(eig_floor >= 0.0)) throw ArgumentError("NystromFactors: eig_floor must be nonnegative");
    if (k == 0 || columns_.cols() != k || pivot_eigvecs_.rows() != k || pivot_eigvecs_.cols() != k ||
        pivot_eigvals_.size() != k) {
        throw ArgumentError("NystromFactors: inconsistent factor shapes");
    }

    const double max_abs = pivot_eigvals_.cwiseAbs().maxCoeff();
    retained_.assign(static_cast<std::size_t>(k), false);
    std::vector<Index> keep;
    for (Index i = 0; i < k; ++i) {
        const double lam = pivot_eigvals_(i);
        if (max_abs > 0.0 && std::abs(lam) >= eig_floor * max_abs && lam != 0.0) {
            retained_[static_cast<std::size_t>(i)] = true;
            keep.push_back(i);
            if (lam < 0.0) ++negative_count_;
        }
    }
    retained_eigvecs_ = pivot_eigvecs_(Eigen::all, keep);
    retained_eigvals_ = pivot_eigvals_(keep);
}

Matrix NystromFactors::reconstruct() const {
    const Matrix l = columns_ * retained_eigvecs_;
    const Matrix hk = l * retained_eigvals_.cwiseInverse().asDiagonal() * l.transpose();
    return 0.5 * (hk + hk.transpose());
}

std::size_t NystromFactors::bytes() const noexcept {
    return sizeof(double) * static_cast<std::size_t>(columns_.size() + pivot_eigvecs_.size() +
                                                     pivot_eigvals_.size() + retained_eigvecs_.size() +
                                                     retained_eigvals_.size());
}

NystromFactors build_factors(const HvpOracle& op, std::span<const Index> indices, double rho,
                             const FactorOptions& options) {
    if (!(rho > 0.0)) throw ArgumentError("build_factors: rho must be positive");
    if (indices.empty()) throw ArgumentError("build_factors: empty index set");
    std::vector<Index> sorted(indices.begin(), indices.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ArgumentError("build_factors: duplicate indices");

    std::vector<Index> idx(indices.begin(), indices.end());
    Matrix c = hvp_columns(op, idx);
    if (!c.allFinite()) throw NumericalError("build_factors: oracle returned non-finite values");

    Matrix pivot = c(idx, Eigen::all);
    pivot = 0.5 * (pivot + pivot.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(pivot);
    if (eig.info() != Eigen::Success) throw NumericalError("build_factors: pivot eigensolver failed");

    NystromFactors factors(std::move(idx), std::move(c), eig.eigenvectors(), eig.eigenvalues(), rho,
                           options.eig_floor);
    if (factors.retained_count() == 0 && !options.allow_degenerate) {
        throw DegeneratePivotError(
            "build_factors: every pivot eigenvalue fell below the floor; reduce k or increase rho");
    }
    return factors;
}

InverseApplyPlan InverseApplyPlan::for_kappa(Index k, Index kappa) {
    if (kappa >= k) return full(k);
    if (kappa == 1) return rank1();
    return chunked(kappa);
}

const char* to_string(InverseVariant variant) {
    switch (variant) {
        case InverseVariant::Full: return "full";
        case InverseVariant::Rank1: return "rank1";
        case InverseVariant::Chunked: return "chunked";
    }
    return "unknown";
}

Vector inverse_apply(const NystromFactors& factors, const InverseApplyPlan& plan, const Vector& b) {
    const Index k = factors.rank();
    if (b.size() != factors.dim()) throw ArgumentError("inverse_apply: right-hand side has wrong dimension");
    if (plan.kappa < 1 || plan.kappa > k) {
        throw ArgumentError("inverse_apply: kappa must lie in [1, k], got " + std::to_string(plan.kappa));
    }
    if (plan.variant == InverseVariant::Full && plan.kappa != k)
        throw ArgumentError("inverse_apply: full variant requires kappa == k");
    if (plan.variant == InverseVariant::Rank1 && plan.kappa != 1)
        throw ArgumentError("inverse_apply: rank-1 variant requires kappa == 1");

    if (factors.retained_count() == 0) {
        Vector x = b / factors.rho();
        ScratchLease x_lease(x);
        return x;
    }
    if (plan.variant == InverseVariant::Full) return apply_full(factors, b);
    return apply_streaming(factors, plan.kappa, b);
}

double nystrom_error_opnorm(const DenseOperator& dense_h, const NystromFactors& factors) {
    if (dense_h.dim() != factors.dim())
        throw ArgumentError("nystrom_error_opnorm: dimension mismatch");
    return symmetric_opnorm(dense_h.matrix() - factors.reconstruct());
}

double hypergradient_error_bound(double g_norm, double f_opnorm, double rho, double err_opnorm) {
    if (!(g_norm >= 0.0) || !(f_opnorm >= 0.0) || !(err_opnorm >= 0.0))
        throw ArgumentError("hypergradient_error_bound: norms must be nonnegative");
    if (!(rho > 0.0)) throw ArgumentError("hypergradient_error_bound: rho must be positive");
    return g_norm * f_opnorm * (1.0 / rho) * err_opnorm / (rho + err_opnorm);
}

}  // namespace nysgrad
