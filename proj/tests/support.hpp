#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "nysgrad/linop.hpp"
#include "nysgrad/random.hpp"

namespace testing {

using nysgrad::Index;
using nysgrad::Matrix;
using nysgrad::Vector;

inline Matrix random_psd(Index p, Index rank, std::uint64_t seed) {
    nysgrad::Rng rng(seed);
    const Matrix g = nysgrad::normal_matrix(rng, p, rank);
    return g * g.transpose();
}

inline Matrix random_symmetric(Index p, std::uint64_t seed) {
    nysgrad::Rng rng(seed);
    const Matrix g = nysgrad::normal_matrix(rng, p, p);
    return 0.5 * (g + g.transpose());
}

inline Vector random_vector(Index p, std::uint64_t seed) {
    nysgrad::Rng rng(seed);
    return nysgrad::normal_vector(rng, p);
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

// Power iteration on M^2 so that negative dominant eigenvalues are found too.
inline double power_norm(const Matrix& m, int iters = 5000) {
    Vector v = Vector::Ones(m.cols()).normalized();
    double est = 0.0;
    for (int i = 0; i < iters; ++i) {
        Vector w = m.transpose() * (m * v);
        const double n = w.norm();
        if (n == 0.0) return 0.0;
        v = w / n;
        est = std::sqrt(n);
    }
    return est;
}

// Hand-rolled Cholesky-free oracle: Gaussian elimination with partial pivoting.
inline Vector gauss_solve(Matrix a, Vector b) {
    const Index n = a.rows();
    for (Index c = 0; c < n; ++c) {
        Index piv = c;
        for (Index r = c + 1; r < n; ++r)
            if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
        a.row(c).swap(a.row(piv));
        std::swap(b(c), b(piv));
        for (Index r = c + 1; r < n; ++r) {
            const double f = a(r, c) / a(c, c);
            a.row(r) -= f * a.row(c);
            b(r) -= f * b(c);
        }
    }
    Vector x(n);
    for (Index r = n - 1; r >= 0; --r) {
        double s = b(r);
        for (Index c = r + 1; c < n; ++c) s -= a(r, c) * x(c);
        x(r) = s / a(r, r);
    }
    return x;
}

}  // namespace testing
