#include "nysgrad/hypergrad.hpp"

#include <chrono>
#include <cstdio>
#include <string>

#include "nysgrad/error.hpp"
#include "nysgrad/workspace.hpp"

namespace nysgrad {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::vector<Index> sample_for(const DerivativeBundle& bundle, const NystromIhvp& cfg,
                              RunDiagnostics* diag) {
    std::span<const double> weights;
    if (cfg.sampling.kind == SamplingKind::DiagonalSquared) {
        if (!bundle.hessian_diagonal)
            throw ArgumentError("nystrom: diagonal-squared sampling needs the Hessian diagonal");
        weights = std::span<const double>(bundle.hessian_diagonal->data(),
                                          static_cast<std::size_t>(bundle.hessian_diagonal->size()));
    }
    IndexSample sample = sample_indices(bundle.p(), cfg.k, cfg.sampling, weights);
    if (diag) diag->sampling_fallback = sample.all_zero_weights;
    return std::move(sample.indices);
}

Vector nystrom_ihvp(const DerivativeBundle& bundle, const NystromIhvp& cfg, const HvpOracle& op,
                    const Vector& b, RunDiagnostics* diag) {
    const std::vector<Index> indices = sample_for(bundle, cfg, diag);
    const NystromFactors factors =
        build_factors(op, indices, cfg.rho, FactorOptions{.eig_floor = cfg.eig_floor});
    const Index kappa = cfg.kappa == 0 ? cfg.k : cfg.kappa;
    Vector v = inverse_apply(factors, InverseApplyPlan::for_kappa(cfg.k, kappa), b);
    if (diag) {
        diag->sampled_indices = indices;
        diag->dropped_eigvals = factors.dropped_count();
        diag->negative_eigvals = factors.negative_count();
        diag->factor_bytes = factors.bytes();
    }
    return v;
}

}  // namespace

void DerivativeBundle::validate() const {
    if (hvp.dim() != p()) throw ArgumentError("DerivativeBundle: Hessian oracle dimension differs from p");
    if (!mixed_apply_transpose) throw ArgumentError("DerivativeBundle: missing mixed-partial transpose-apply");
    if (hessian_diagonal && hessian_diagonal->size() != p())
        throw ArgumentError("DerivativeBundle: Hessian diagonal has wrong length");
    if (!grad_outer_theta.allFinite() || !grad_outer_phi.allFinite())
        throw ArgumentError("DerivativeBundle: non-finite outer gradient");
}

std::string backend_tag(const IhvpConfig& cfg) {
    return std::visit(overloaded{[](const NystromIhvp&) { return std::string("nystrom"); },
                                 [](const CgIhvp&) { return std::string("cg"); },
                                 [](const NeumannIhvp&) { return std::string("neumann"); }},
                      cfg);
}

std::string label(const IhvpConfig& cfg) {
    return std::visit(
        overloaded{
            [](const NystromIhvp& c) {
                std::string s = "nystrom(k=" + std::to_string(c.k) +
                                ",kappa=" + std::to_string(c.kappa == 0 ? c.k : c.kappa) +
                                ",rho=" + fmt_double(c.rho);
                if (c.sampling.kind == SamplingKind::DiagonalSquared) s += ",sampling=diag2";
                return s + ")";
            },
            [](const CgIhvp& c) {
                return "cg(l=" + std::to_string(c.cg.max_iters) + ",rho=" + fmt_double(c.rho) + ")";
            },
            [](const NeumannIhvp& c) {
                return "neumann(l=" + std::to_string(c.neumann.truncation) +
                       ",alpha=" + fmt_double(c.neumann.alpha) + ",rho=" + fmt_double(c.rho) + ")";
            }},
        cfg);
}

double rho_of(const IhvpConfig& cfg) {
    return std::visit([](const auto& c) { return c.rho; }, cfg);
}

void validate(const IhvpConfig& cfg) {
    std::visit(overloaded{[](const NystromIhvp& c) {
                              if (c.k < 1) throw ArgumentError("nystrom: k must be >= 1");
                              if (c.kappa < 0 || c.kappa > c.k)
                                  throw ArgumentError("nystrom: kappa must lie in [1, k] (0 = k)");
                              if (!(c.rho > 0.0)) throw ArgumentError("nystrom: rho must be positive");
                              if (!(c.eig_floor >= 0.0))
                                  throw ArgumentError("nystrom: eig_floor must be nonnegative");
                          },
                          [](const CgIhvp& c) {
                              if (c.cg.max_iters < 1) throw ArgumentError("cg: l must be >= 1");
                              if (!(c.cg.residual_tol >= 0.0))
                                  throw ArgumentError("cg: residual_tol must be >= 0");
                              if (!(c.rho >= 0.0)) throw ArgumentError("cg: rho must be >= 0");
                          },
                          [](const NeumannIhvp& c) {
                              if (c.neumann.truncation < 1) throw ArgumentError("neumann: l must be >= 1");
                              if (!(c.neumann.alpha > 0.0))
                                  throw ArgumentError("neumann: alpha must be positive");
                              if (!(c.rho >= 0.0)) throw ArgumentError("neumann: rho must be >= 0");
                          }},
               cfg);
}

Vector ihvp(const DerivativeBundle& bundle, const IhvpConfig& cfg, const Vector& b,
            RunDiagnostics* diagnostics) {
    const std::string tag = backend_tag(cfg);
    try {
        validate(cfg);
        return std::visit(
            overloaded{[&](const NystromIhvp& c) { return nystrom_ihvp(bundle, c, bundle.hvp, b, diagnostics); },
                       [&](const CgIhvp& c) {
                           CgResult r = cg_solve(bundle.hvp, c.rho, b, c.cg);
                           if (diagnostics) {
                               diagnostics->cg_iters = r.iters_used;
                               diagnostics->cg_residual = r.final_residual;
                           }
                           return std::move(r.x);
                       },
                       [&](const NeumannIhvp& c) { return neumann_apply(bundle.hvp, c.rho, b, c.neumann); }},
            cfg);
    } catch (Error& e) {
        e.set_backend(tag);
        throw;
    }
}

HypergradResult hypergradient(const DerivativeBundle& bundle, const IhvpConfig& cfg) {
    bundle.validate();
    HypergradResult out;
    out.diagnostics.backend = backend_tag(cfg);

    DerivativeBundle counted = bundle;
    counted.hvp = bundle.hvp.with_fresh_counter();

    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t base = WorkspaceMeter::reset_peak();
    const Vector v = ihvp(counted, cfg, bundle.grad_outer_theta, &out.diagnostics);
    Vector mixed = bundle.mixed_apply_transpose(v);
    if (mixed.size() != bundle.h()) {
        ArgumentError e("hypergradient: mixed transpose-apply returned wrong length");
        e.set_backend(out.diagnostics.backend);
        throw e;
    }
    out.value = bundle.grad_outer_phi - mixed;
    out.diagnostics.workspace_bytes = WorkspaceMeter::peak() - base;
    out.diagnostics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.diagnostics.oracle_calls = counted.hvp.calls();
    return out;
}

Matrix dense_mixed(const DerivativeBundle& bundle, Index max_dim) {
    if (bundle.p() > max_dim) throw CapabilityError("dense_mixed: p exceeds dense cap");
    Matrix f(bundle.p(), bundle.h());
    for (Index i = 0; i < bundle.p(); ++i) f.row(i) = bundle.mixed_apply_transpose(Vector::Unit(bundle.p(), i));
    return f;
}

HypergradError hypergradient_error(const DerivativeBundle& bundle, const DenseOperator& dense_h,
                                   const Matrix& dense_f, const NystromIhvp& cfg) {
    bundle.validate();
    if (dense_h.dim() != bundle.p() || dense_f.rows() != bundle.p() || dense_f.cols() != bundle.h())
        throw ArgumentError("hypergradient_error: dense blocks do not match the bundle");

    const Vector v_star = dense_regularized_inverse_apply(dense_h, cfg.rho, bundle.grad_outer_theta);
    const Vector h_star = bundle.grad_outer_phi - dense_f.transpose() * v_star;

    const HypergradResult approx = hypergradient(bundle, cfg);
    const NystromFactors factors =
        build_factors(dense_h.oracle(), approx.diagnostics.sampled_indices, cfg.rho,
                      FactorOptions{.eig_floor = cfg.eig_floor});

    HypergradError out;
    out.error = (h_star - approx.value).norm();
    out.reference_norm = h_star.norm();
    out.nystrom_opnorm = nystrom_error_opnorm(dense_h, factors);
    out.bound = hypergradient_error_bound(bundle.grad_outer_theta.norm(), operator_norm(dense_f), cfg.rho,
                                          out.nystrom_opnorm);
    return out;
}

HypergradError hypergradient_error(const DerivativeBundle& bundle, const DenseOperator& dense_h,
                                   const NystromIhvp& cfg) {
    return hypergradient_error(bundle, dense_h, dense_mixed(bundle), cfg);
}

}  // namespace nysgrad
