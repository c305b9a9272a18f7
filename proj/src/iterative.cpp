#include "nysgrad/iterative.hpp"

#include <cmath>
#include <string>

#include "nysgrad/error.hpp"
#include "nysgrad/workspace.hpp"

namespace nysgrad {
namespace {

// A partial Neumann sum with ||I - alpha A|| <= 1 satisfies ||s_j|| <= (j+1)||b||.
// Exceeding that by this factor can only come from a spectral radius above one.
constexpr double kNeumannBlowup = 1e16;

}  // namespace

CgResult cg_solve(const HvpOracle& op, double rho, const Vector& b, const CgConfig& cfg) {
    if (cfg.max_iters < 1) throw ArgumentError("cg_solve: max_iters must be >= 1");
    if (!(cfg.residual_tol >= 0.0)) throw ArgumentError("cg_solve: residual_tol must be >= 0");
    if (!(rho >= 0.0)) throw ArgumentError("cg_solve: rho must be >= 0");
    if (b.size() != op.dim()) throw ArgumentError("cg_solve: right-hand side has wrong dimension");

    CgResult out;
    out.x = Vector::Zero(b.size());
    Vector r = b;
    Vector p = r;
    Vector ap(b.size());
    ScratchLease lease(6 * static_cast<std::size_t>(b.size()) * sizeof(double));

    const double stop = cfg.residual_tol * b.norm();
    double rr = r.squaredNorm();
    out.final_residual = std::sqrt(rr);

    for (int it = 0; it < cfg.max_iters; ++it) {
        if (out.final_residual == 0.0 || (cfg.residual_tol > 0.0 && out.final_residual <= stop)) break;

        ap = op.apply(p);
        ap += rho * p;
        const double pap = p.dot(ap);
        const double step = rr / pap;
        Vector x_next = out.x + step * p;
        Vector r_next = r - step * ap;
        const double rr_next = r_next.squaredNorm();
        if (!std::isfinite(step) || !x_next.allFinite() || !std::isfinite(rr_next)) {
            throw DivergenceError("cg_solve: non-finite values at iteration " + std::to_string(it + 1) +
                                      " (curvature p^T A p = " + std::to_string(pap) + ")",
                                  out.x, it + 1);
        }
        out.x = std::move(x_next);
        r = std::move(r_next);
        p = r + (rr_next / rr) * p;
        rr = rr_next;
        out.final_residual = std::sqrt(rr);
        out.iters_used = it + 1;
    }
    return out;
}

Vector neumann_apply(const HvpOracle& op, double rho, const Vector& b, const NeumannConfig& cfg) {
    if (cfg.truncation < 1) throw ArgumentError("neumann_apply: truncation must be >= 1");
    if (!(cfg.alpha > 0.0)) throw ArgumentError("neumann_apply: alpha must be positive");
    if (!(rho >= 0.0)) throw ArgumentError("neumann_apply: rho must be >= 0");
    if (b.size() != op.dim()) throw ArgumentError("neumann_apply: right-hand side has wrong dimension");

    Vector s = b;
    Vector as(b.size());
    ScratchLease lease(2 * static_cast<std::size_t>(b.size()) * sizeof(double));
    const double b_norm = b.norm();

    for (int i = 1; i <= cfg.truncation; ++i) {
        as = op.apply(s);
        as += rho * s;
        Vector next = b + s - cfg.alpha * as;
        const double n = next.norm();
        if (!next.allFinite() || n > kNeumannBlowup * (i + 1) * b_norm) {
            throw DivergenceError("neumann_apply: series diverged at term " + std::to_string(i) +
                                      "; alpha * ||H + rho I|| likely exceeds 1",
                                  cfg.alpha * s, i);
        }
        s = std::move(next);
    }
    return cfg.alpha * s;
}

}  // namespace nysgrad
