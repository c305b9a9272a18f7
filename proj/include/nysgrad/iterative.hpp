#pragma once

#include "nysgrad/linop.hpp"

namespace nysgrad {

struct CgConfig {
    int max_iters = 5;          // l
    double residual_tol = 0.0;  // relative to ||b||; 0 runs exactly max_iters steps

    bool operator==(const CgConfig&) const = default;
};

struct CgResult {
    Vector x;
    int iters_used = 0;
    double final_residual = 0.0;  // ||b - A x||
};

/// Truncated conjugate gradient on (H + rho I) x = b from x0 = 0.
/// Uses at most max_iters oracle products.
CgResult cg_solve(const HvpOracle& op, double rho, const Vector& b, const CgConfig& cfg);

struct NeumannConfig {
    int truncation = 5;   // l
    double alpha = 0.01;

    bool operator==(const NeumannConfig&) const = default;
};

/// alpha * sum_{i=0}^{l} (I - alpha A)^i b with A = H + rho I.
/// Uses exactly l oracle products. Does not check ||alpha A|| <= 1.
Vector neumann_apply(const HvpOracle& op, double rho, const Vector& b, const NeumannConfig& cfg);

}  // namespace nysgrad
