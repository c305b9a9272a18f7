#include "nysgrad/cli/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <ostream>

#include <json.hpp>

#include "nysgrad/cli/svg.hpp"
#include "nysgrad/error.hpp"
#include "nysgrad/iterative.hpp"
#include "nysgrad/nystrom.hpp"
#include "nysgrad/random.hpp"
#include "nysgrad/tasks.hpp"

namespace nysgrad::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string u64(std::uint64_t v) { return std::to_string(v); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

Index uniform_index(Rng& rng, Index lo, Index hi) {
    return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

template <class T>
const T* first_of(const std::vector<IhvpConfig>& ihvps) {
    for (const auto& c : ihvps)
        if (const auto* t = std::get_if<T>(&c)) return t;
    return nullptr;
}

// ---------------------------------------------------------------------------
// plots, built from the written CSV files

void plot_invert_demo(const fs::path& dir, const InvertDemoResult& result) {
    const CsvTable t = read_csv(dir / "invert_errors.csv");
    const auto c_method = t.column("method"), c_param = t.column("param"), c_rel = t.column("relative_error");
    std::map<std::string, std::map<double, std::pair<double, int>>> acc;
    for (const auto& r : t.rows) {
        auto& cell = acc[r[c_method]][parse_double(r[c_param])];
        cell.first += parse_double(r[c_rel]);
        cell.second += 1;
    }
    LinePlot plot{.title = "Inverse approximation error (mean over seeds)",
                  .x_label = "k (Nystrom) or l (Neumann)",
                  .y_label = "relative Frobenius error",
                  .log_y = true,
                  .markers = true};
    for (const auto& [method, cells] : acc) {
        Series s{.name = method};
        for (const auto& [x, sum] : cells) {
            s.x.push_back(x);
            s.y.push_back(sum.first / sum.second);
        }
        plot.series.push_back(std::move(s));
    }
    write_text(dir / "invert_errors.svg", render_svg(plot));

    std::vector<Heatmap> panels{{"exact", result.exact}};
    for (const auto& [name, m] : result.approximations) panels.push_back({name, m});
    write_text(dir / "inverse_heatmaps.svg", render_svg(panels, "(A + rho I)^-1 and its approximations"));
}

void plot_logreg(const fs::path& dir, int inner_steps) {
    const CsvTable t = read_csv(dir / "steps.csv");
    const auto c_outer = t.column("outer_step"), c_inner = t.column("inner_step"), c_train = t.column("train_loss"),
               c_val = t.column("val_loss"), c_label = t.column("ihvp");
    std::map<std::string, std::map<double, std::pair<double, int>>> train, val;
    std::vector<std::string> order;
    for (const auto& r : t.rows) {
        const std::string& lab = r[c_label];
        if (!train.count(lab)) order.push_back(lab);
        const double outer = parse_double(r[c_outer]);
        const double x = outer * inner_steps + parse_double(r[c_inner]);
        auto& tc = train[lab][x];
        tc.first += parse_double(r[c_train]);
        tc.second += 1;
        if (!r[c_val].empty()) {
            auto& vc = val[lab][outer];
            vc.first += parse_double(r[c_val]);
            vc.second += 1;
        }
    }
    auto build = [&](auto& acc, LinePlot plot) {
        for (const auto& lab : order) {
            Series s{.name = lab};
            for (const auto& [x, sum] : acc[lab]) {
                s.x.push_back(x);
                s.y.push_back(sum.first / sum.second);
            }
            plot.series.push_back(std::move(s));
        }
        return render_svg(plot);
    };
    write_text(dir / "train_loss.svg",
               build(train, LinePlot{.title = "Training loss (mean over seeds)", .x_label = "inner step",
                                     .y_label = "train loss"}));
    write_text(dir / "val_loss.svg",
               build(val, LinePlot{.title = "Validation loss at the end of each window (mean over seeds)",
                                   .x_label = "outer step", .y_label = "validation loss", .markers = true}));
}

void plot_sweep(const fs::path& dir) {
    const CsvTable t = read_csv(dir / "sweep.csv");
    const auto c_sweep = t.column("sweep"), c_value = t.column("value"), c_loss = t.column("final_val_loss"),
               c_backend = t.column("backend");
    std::map<std::string, std::map<double, std::pair<double, int>>> acc;
    for (const auto& r : t.rows) {
        const std::string name = r[c_backend] + " over " + r[c_sweep];
        auto& cell = acc[name][parse_double(r[c_value])];
        cell.first += r[c_loss].empty() ? std::numeric_limits<double>::quiet_NaN() : parse_double(r[c_loss]);
        cell.second += 1;
    }
    for (const auto& [name, cells] : acc) {
        LinePlot plot{.title = "Final validation loss, " + name, .x_label = name.substr(name.rfind(' ') + 1),
                      .y_label = "mean final validation loss", .markers = true};
        Series s{.name = name};
        for (const auto& [x, sum] : cells) {
            s.x.push_back(x);
            s.y.push_back(sum.first / sum.second);
        }
        plot.series.push_back(std::move(s));
        std::string file = name;
        std::replace(file.begin(), file.end(), ' ', '_');
        write_text(dir / ("sweep_" + file + ".svg"), render_svg(plot));
    }
}

void plot_bound_check(const fs::path& dir) {
    const CsvTable t = read_csv(dir / "bound_check.csv");
    const auto c_ratio = t.column("ratio"), c_status = t.column("status"), c_k = t.column("k"), c_p = t.column("p");
    Series sampled{.name = "k < p"}, exact{.name = "k = p"};
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        if (r[c_status] != "ok") continue;
        Series& s = r[c_k] == r[c_p] ? exact : sampled;
        s.x.push_back(static_cast<double>(i));
        s.y.push_back(parse_double(r[c_ratio]));
    }
    LinePlot plot{.title = "Measured error / bound per instance", .x_label = "row",
                  .y_label = "error / bound", .lines = false, .markers = true};
    plot.series = {sampled, exact};
    write_text(dir / "bound_check.svg", render_svg(plot));
}

void plot_bench(const fs::path& dir) {
    const CsvTable t = read_csv(dir / "bench.csv");
    const auto c_backend = t.column("backend"), c_size = t.column("size"), c_ms = t.column("median_ms"),
               c_ws = t.column("workspace_bytes");
    std::map<std::string, Series> time, space;
    std::vector<std::string> order;
    for (const auto& r : t.rows) {
        const std::string& b = r[c_backend];
        if (!time.count(b)) order.push_back(b);
        time[b].name = space[b].name = b;
        time[b].x.push_back(parse_double(r[c_size]));
        time[b].y.push_back(parse_double(r[c_ms]));
        space[b].x.push_back(parse_double(r[c_size]));
        space[b].y.push_back(parse_double(r[c_ws]) / 1024.0);
    }
    LinePlot tp{.title = "Hypergradient time (median)", .x_label = "k or l", .y_label = "ms", .markers = true};
    LinePlot sp{.title = "Solver workspace", .x_label = "k or l", .y_label = "KiB", .markers = true};
    for (const auto& b : order) {
        tp.series.push_back(time[b]);
        sp.series.push_back(space[b]);
    }
    write_text(dir / "bench_time.svg", render_svg(tp));
    write_text(dir / "bench_workspace.svg", render_svg(sp));
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace

// ---------------------------------------------------------------------------
// invert-demo

Matrix nystrom_dense_inverse(const DenseOperator& a, double rho, Index k, std::uint64_t sampling_seed) {
    const HvpOracle op = a.oracle();
    const IndexSample sample = sample_indices(a.dim(), k, SamplingStrategy{SamplingKind::Uniform, sampling_seed});
    const NystromFactors factors = build_factors(op, sample.indices, rho);
    const Index p = a.dim();
    Matrix out(p, p);
    for (Index j = 0; j < p; ++j)
        out.col(j) = inverse_apply(factors, InverseApplyPlan::full(k), Vector::Unit(p, j));
    return out;
}

Matrix neumann_dense_inverse(const DenseOperator& a, double rho, int truncation, double alpha) {
    const HvpOracle op = a.oracle();
    const Index p = a.dim();
    Matrix out(p, p);
    for (Index j = 0; j < p; ++j) out.col(j) = neumann_apply(op, rho, Vector::Unit(p, j), {truncation, alpha});
    return out;
}

InvertDemoResult invert_demo(const ExperimentConfig& cfg) {
    InvertDemoResult result;
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        LowRankDemoSpec spec = cfg.demo;
        spec.seed = cfg.seeds[si];
        const DenseOperator a = make_lowrank_demo(spec);
        const Matrix exact = dense_regularized_inverse(a, spec.rho);
        const double ref = exact.norm();
        if (si == 0) result.exact = exact;

        auto record = [&](const std::string& method, Index param, double alpha, auto&& build) {
            InvertDemoRow row{.seed = spec.seed, .method = method, .param = param, .alpha = alpha};
            try {
                const Matrix approx = build();
                row.frobenius_error = (approx - exact).norm();
                row.relative_error = row.frobenius_error / ref;
                if (!std::isfinite(row.frobenius_error)) row.status = "non-finite";
                if (si == 0) result.approximations.emplace_back(method + " " + std::to_string(param), approx);
            } catch (const Error& e) {
                row.frobenius_error = row.relative_error = std::numeric_limits<double>::infinity();
                row.status = to_string(e.kind());
            }
            result.rows.push_back(row);
        };
        for (Index k : cfg.demo_nystrom_ranks)
            record("nystrom", k, 0.0, [&] { return nystrom_dense_inverse(a, spec.rho, k, spec.seed); });
        for (int l : cfg.demo_neumann_truncations)
            record("neumann", l, cfg.demo_neumann_alpha,
                   [&] { return neumann_dense_inverse(a, spec.rho, l, cfg.demo_neumann_alpha); });
    }
    return result;
}

// ---------------------------------------------------------------------------
// logreg

std::vector<LabelSummary> summarize(const std::vector<RunRecord>& runs) {
    std::vector<LabelSummary> out;
    std::map<std::string, std::size_t> at;
    std::vector<double> sums;
    for (const auto& r : runs) {
        auto [it, fresh] = at.emplace(r.ihvp_label, out.size());
        if (fresh) {
            out.push_back({.label = r.ihvp_label, .backend = r.backend});
            sums.push_back(0.0);
        }
        auto& s = out[it->second];
        ++s.runs;
        if (!r.ok() || !std::isfinite(r.final_val_loss)) ++s.failed;
        else sums[it->second] += r.final_val_loss;
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i].failed == 0) out[i].mean_final_val_loss = sums[i] / out[i].runs;
    return out;
}

LogregResult logreg(const ExperimentConfig& cfg) {
    const LogRegTaskSpec base = cfg.logreg;
    const ProblemFactory factory = [base](std::uint64_t seed) {
        LogRegTaskSpec spec = base;
        spec.seed = seed;
        return make_logreg_problem(std::make_shared<const LogRegTask>(spec));
    };
    LogregResult result;
    result.runs = compare_backends(factory, cfg.schedule, cfg.ihvps, cfg.seeds, cfg.jobs);

    const NystromIhvp nystrom = first_of<NystromIhvp>(cfg.ihvps) ? *first_of<NystromIhvp>(cfg.ihvps) : NystromIhvp{};
    const NeumannIhvp neumann = first_of<NeumannIhvp>(cfg.ihvps) ? *first_of<NeumannIhvp>(cfg.ihvps) : NeumannIhvp{};
    for (double rho : cfg.sweep_rho) {
        NystromIhvp c = nystrom;
        c.rho = rho;
        result.sweep.push_back({"rho", rho, c});
    }
    for (Index k : cfg.sweep_k) {
        NystromIhvp c = nystrom;
        c.k = k;
        c.kappa = 0;
        result.sweep.push_back({"k", static_cast<double>(k), c});
    }
    for (double alpha : cfg.sweep_alpha) {
        NeumannIhvp c = neumann;
        c.neumann.alpha = alpha;
        result.sweep.push_back({"alpha", alpha, c});
    }
    if (!result.sweep.empty()) {
        std::vector<IhvpConfig> configs;
        for (const auto& cell : result.sweep) configs.push_back(cell.ihvp);
        result.sweep_runs = compare_backends(factory, cfg.schedule, configs, cfg.seeds, cfg.jobs);
    }
    return result;
}

CsvTable logreg_steps_table(const std::vector<RunRecord>& runs, bool record_wall_time) {
    CsvTable t{.header = {"outer_step", "inner_step", "train_loss", "val_loss", "backend", "ihvp", "seed", "wall_ms"}};
    for (const auto& r : runs) {
        const int steps = r.schedule.inner_steps_per_outer;
        const int windows = r.schedule.total_outer_steps;
        for (std::size_t i = 0; i < r.train_loss.size(); ++i) {
            const int w = static_cast<int>(i) / steps;
            const int s = static_cast<int>(i) % steps;
            std::string val, wall;
            if (s == steps - 1) {
                const auto wi = static_cast<std::size_t>(w);
                if (wi < r.outer.size()) {
                    val = format_double(r.outer[wi].val_loss);
                    if (record_wall_time) wall = format_double(1e3 * r.outer[wi].wall_seconds);
                } else if (w == windows && r.ok()) {
                    val = format_double(r.final_val_loss);
                }
            }
            t.add_row({std::to_string(w), std::to_string(s), format_double(r.train_loss[i]), val, r.backend,
                       r.ihvp_label, u64(r.seed), wall});
        }
    }
    return t;
}

namespace {

json run_json(const RunRecord& r, bool record_wall_time) {
    json j{{"backend", r.backend},
           {"ihvp", r.ihvp_label},
           {"seed", r.seed},
           {"ok", r.ok()},
           {"error", r.error ? json(*r.error) : json(nullptr)},
           {"error_kind", r.error_kind ? json(to_string(*r.error_kind)) : json(nullptr)},
           {"final_val_loss", r.ok() ? finite_or_null(r.final_val_loss) : json(nullptr)},
           {"outer_steps_completed", r.outer.size()}};
    if (r.final_phi.size() > 0) {
        j["final_phi_mean"] = finite_or_null(r.final_phi.mean());
        j["final_phi_min"] = finite_or_null(r.final_phi.minCoeff());
    }
    json outer = json::array();
    for (const auto& o : r.outer) {
        json e{{"outer_step", o.outer_step},
               {"val_loss", finite_or_null(o.val_loss)},
               {"hypergrad_norm", finite_or_null(o.hypergrad_norm)},
               {"inner_grad_norm", finite_or_null(o.inner_grad_norm)},
               {"oracle_calls", o.oracle_calls},
               {"workspace_bytes", o.workspace_bytes}};
        if (record_wall_time) e["wall_ms"] = 1e3 * o.wall_seconds;
        outer.push_back(std::move(e));
    }
    j["outer"] = std::move(outer);
    if (record_wall_time) j["total_seconds"] = r.total_seconds;
    return j;
}

json summary_json(const std::vector<LabelSummary>& s) {
    json out = json::array();
    for (const auto& l : s) {
        out.push_back({{"ihvp", l.label},
                       {"backend", l.backend},
                       {"runs", l.runs},
                       {"failed", l.failed},
                       {"mean_final_val_loss",
                        l.mean_final_val_loss ? finite_or_null(*l.mean_final_val_loss) : json(nullptr)}});
    }
    return out;
}

int execute_logreg(const ExperimentConfig& cfg, const fs::path& dir, std::ostream& log) {
    const LogregResult result = logreg(cfg);
    write_csv(dir / "steps.csv", logreg_steps_table(result.runs, cfg.record_wall_time));

    json j{{"experiment", "logreg"}, {"config", serialize(cfg)}};
    json runs = json::array();
    for (const auto& r : result.runs) runs.push_back(run_json(r, cfg.record_wall_time));
    j["runs"] = std::move(runs);
    const auto labels = summarize(result.runs);
    j["summary"] = summary_json(labels);

    int failed = 0;
    for (const auto& r : result.runs) {
        if (r.ok()) continue;
        ++failed;
        log << "run failed: " << r.ihvp_label << " seed " << r.seed << ": " << *r.error << "\n";
    }
    for (const auto& l : labels) {
        log << l.label << ": mean final val loss ";
        if (l.mean_final_val_loss) log << *l.mean_final_val_loss;
        else log << "n/a (" << l.failed << " of " << l.runs << " runs failed)";
        log << "\n";
    }

    if (!result.sweep.empty()) {
        CsvTable t{.header = {"sweep", "value", "backend", "ihvp", "seed", "final_val_loss", "status"}};
        json cells = json::array();
        const std::size_t n = cfg.seeds.size();
        for (std::size_t c = 0; c < result.sweep.size(); ++c) {
            const auto& cell = result.sweep[c];
            const std::vector<RunRecord> runs_of(result.sweep_runs.begin() + static_cast<std::ptrdiff_t>(c * n),
                                                 result.sweep_runs.begin() + static_cast<std::ptrdiff_t>((c + 1) * n));
            for (const auto& r : runs_of) {
                t.add_row({cell.sweep, format_double(cell.value), r.backend, r.ihvp_label, u64(r.seed),
                           r.ok() ? format_double(r.final_val_loss) : "",
                           r.ok() ? "ok" : to_string(*r.error_kind)});
                if (!r.ok()) ++failed;
            }
            const auto s = summarize(runs_of).front();
            cells.push_back({{"sweep", cell.sweep},
                             {"value", cell.value},
                             {"ihvp", s.label},
                             {"failed", s.failed},
                             {"mean_final_val_loss",
                              s.mean_final_val_loss ? finite_or_null(*s.mean_final_val_loss) : json(nullptr)}});
        }
        write_csv(dir / "sweep.csv", t);
        j["sweep"] = std::move(cells);
    }
    write_json(dir / "summary.json", j);
    if (cfg.plots) {
        plot_logreg(dir, cfg.schedule.inner_steps_per_outer);
        if (!result.sweep.empty()) plot_sweep(dir);
    }
    return failed > 0 ? 2 : 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// quadratic-oracle

std::vector<QuadraticOracleRow> quadratic_oracle(const ExperimentConfig& cfg) {
    std::vector<QuadraticOracleRow> rows;
    for (std::uint64_t base : cfg.seeds) {
        for (int i = 0; i < cfg.quad_instances; ++i) {
            const std::uint64_t seed = mix_seed(base, static_cast<std::uint64_t>(i));
            const auto spec = QuadraticTaskSpec::random(cfg.quad_p, seed);
            Rng rng(mix_seed(seed, 1));
            std::uniform_real_distribution<double> unif(0.1, 1.0);
            Vector phi(cfg.quad_p);
            for (Index j = 0; j < cfg.quad_p; ++j) phi(j) = unif(rng);

            // inner problem by gradient descent with step 1 / ||A + diag(phi)||
            Matrix a = spec.a;
            a.diagonal() += phi;
            const double lr = 1.0 / operator_norm(a);
            Vector theta = Vector::Zero(cfg.quad_p);
            Vector grad = quadratic_inner_grad(spec, theta, phi);
            for (int it = 0; it < 1000000 && grad.norm() > cfg.quad_inner_tol; ++it) {
                theta -= lr * grad;
                grad = quadratic_inner_grad(spec, theta, phi);
            }

            const auto r = hypergradient(quadratic_bundle(spec, theta, phi),
                                         NystromIhvp{.k = cfg.quad_p, .rho = cfg.quad_rho});
            const Vector want = quadratic_closed_form_hypergradient(spec, phi);
            QuadraticOracleRow row{.instance = static_cast<int>(rows.size()), .seed = seed,
                                   .inner_grad_norm = grad.norm()};
            row.relative_error = (r.value - want).norm() / want.norm();
            row.pass = row.relative_error <= cfg.quad_tolerance;
            rows.push_back(row);
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// bound-check

namespace {

BoundCheckRow bound_row(int instance, std::uint64_t seed, const Matrix& hess, Index rank, bool psd, double rho,
                        Index k, const Matrix& f, const Vector& g) {
    BoundCheckRow row{.instance = instance, .seed = seed, .p = hess.rows(), .rank = rank, .h = f.cols(), .k = k,
                      .rho = rho, .psd = psd};
    if (!psd) row.status = "non-PSD";
    try {
        const DenseOperator dense(hess);
        const DerivativeBundle bundle{
            .grad_outer_theta = g,
            .grad_outer_phi = Vector::Zero(f.cols()),
            .hvp = dense.oracle(),
            .mixed_apply_transpose = [f](const Vector& v) -> Vector { return f.transpose() * v; },
            .hessian_diagonal = std::nullopt,
        };
        const auto e = hypergradient_error(
            bundle, dense, f, NystromIhvp{.k = k, .rho = rho, .sampling = {SamplingKind::Uniform, seed}});
        row.error = e.error;
        row.bound = e.bound;
        row.nystrom_opnorm = e.nystrom_opnorm;
    } catch (const Error& e) {
        row.error = row.bound = std::numeric_limits<double>::quiet_NaN();
        row.status = psd ? to_string(e.kind()) : std::string("non-PSD ") + to_string(e.kind());
    }
    return row;
}

}  // namespace

std::vector<BoundCheckRow> bound_check(const ExperimentConfig& cfg) {
    if (cfg.bound_p_max > kDefaultDenseCap)
        throw CapabilityError("bound-check: p_max exceeds the dense cap of " + std::to_string(kDefaultDenseCap));
    std::vector<BoundCheckRow> rows;
    int instance = 0;
    auto add_instance = [&](std::uint64_t seed, double rho, bool indefinite) {
        Rng rng(seed);
        const Index p = uniform_index(rng, cfg.bound_p_min, cfg.bound_p_max);
        const Index rank = uniform_index(rng, 1, p);
        const Index k = uniform_index(rng, 1, std::min<Index>(p, 40));
        const Index h = uniform_index(rng, 1, 10);
        const Matrix gm = normal_matrix(rng, p, rank);
        Matrix hess = gm * gm.transpose() / static_cast<double>(p);
        if (indefinite) {
            const Vector u = normal_vector(rng, p).normalized();
            hess -= (0.5 * operator_norm(hess) + 1.0) * u * u.transpose();
        }
        hess = 0.5 * (hess + hess.transpose()).eval();
        const Matrix f = normal_matrix(rng, p, h);
        const Vector g = normal_vector(rng, p);
        rows.push_back(bound_row(instance, seed, hess, rank, !indefinite, rho, k, f, g));
        if (k != p) rows.push_back(bound_row(instance, seed, hess, rank, !indefinite, rho, p, f, g));
        ++instance;
    };
    const auto n_rho = static_cast<int>(cfg.bound_rhos.size());
    for (std::uint64_t base : cfg.seeds) {
        for (int i = 0; i < cfg.bound_instances; ++i)
            add_instance(mix_seed(base, static_cast<std::uint64_t>(i)), cfg.bound_rhos[i % n_rho], false);
        for (int i = 0; i < cfg.bound_indefinite; ++i)
            add_instance(mix_seed(base, 1000000 + static_cast<std::uint64_t>(i)), cfg.bound_rhos[i % n_rho], true);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// bench

const BenchCell& BenchReport::cell(const std::string& backend, Index size) const {
    for (const auto& c : cells)
        if (c.backend == backend && c.size == size) return c;
    throw ArgumentError("bench: no cell " + backend + " at size " + std::to_string(size));
}

BenchReport bench(const ExperimentConfig& cfg) {
    LogRegTaskSpec spec = cfg.logreg;
    spec.dim = cfg.bench_dim;
    spec.n_train = spec.n_val = cfg.bench_samples;
    spec.seed = cfg.seeds.front();
    const auto task = std::make_shared<const LogRegTask>(spec);
    Rng rng(mix_seed(spec.seed, 7));
    const Vector theta = normal_vector(rng, spec.dim, 0.1);
    const Vector phi = Vector::Constant(spec.dim, spec.phi0);
    const DerivativeBundle bundle = logreg_bundle(task, theta, phi).bundle;

    BenchReport report{.dim = spec.dim, .samples = cfg.bench_samples, .warmup = cfg.bench_warmup,
                       .reps = cfg.bench_reps};
    auto time_cell = [&](const std::string& backend, Index size, const IhvpConfig& ihvp) {
        for (int w = 0; w < cfg.bench_warmup; ++w) hypergradient(bundle, ihvp);
        BenchCell cell{.backend = backend, .size = size};
        for (int r = 0; r < cfg.bench_reps; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto result = hypergradient(bundle, ihvp);
            cell.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            cell.workspace_bytes = std::max(cell.workspace_bytes, result.diagnostics.workspace_bytes);
            cell.factor_bytes = result.diagnostics.factor_bytes;
            cell.oracle_calls = result.diagnostics.oracle_calls;
        }
        cell.median_seconds = median(cell.seconds);
        report.cells.push_back(std::move(cell));
    };
    for (Index k : cfg.bench_ks)
        time_cell("nystrom-full", k, NystromIhvp{.k = k, .kappa = k, .rho = cfg.bench_rho});
    for (Index k : cfg.bench_ks)
        time_cell("nystrom-rank1", k, NystromIhvp{.k = k, .kappa = 1, .rho = cfg.bench_rho});
    for (int l : cfg.bench_ls)
        time_cell("neumann", l, NeumannIhvp{.neumann = {l, cfg.bench_alpha}, .rho = cfg.bench_rho});
    for (int l : cfg.bench_ls) time_cell("cg", l, CgIhvp{.cg = {l, 0.0}, .rho = cfg.bench_rho});
    return report;
}

// ---------------------------------------------------------------------------

int execute(const ExperimentConfig& cfg, std::ostream& log) {
    validate(cfg);
    const fs::path dir = cfg.output_dir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    write_text(dir / "config.txt", serialize(cfg));

    switch (cfg.experiment) {
        case ExperimentKind::InvertDemo: {
            const InvertDemoResult result = invert_demo(cfg);
            CsvTable t{.header = {"seed", "method", "param", "alpha", "rho", "frobenius_error", "relative_error",
                                  "status"}};
            for (const auto& r : result.rows) {
                t.add_row({u64(r.seed), r.method, std::to_string(r.param), format_double(r.alpha),
                           format_double(cfg.demo.rho), format_double(r.frobenius_error),
                           format_double(r.relative_error), r.status});
                log << "seed " << r.seed << " " << r.method << " " << r.param << ": relative error "
                    << r.relative_error << (r.status == "ok" ? "" : " (" + r.status + ")") << "\n";
            }
            write_csv(dir / "invert_errors.csv", t);
            if (cfg.plots) plot_invert_demo(dir, result);
            return 0;
        }
        case ExperimentKind::Logreg:
            return execute_logreg(cfg, dir, log);
        case ExperimentKind::QuadraticOracle: {
            const auto rows = quadratic_oracle(cfg);
            CsvTable t{.header = {"instance", "seed", "inner_grad_norm", "relative_error", "pass"}};
            int failed = 0;
            double worst = 0.0;
            for (const auto& r : rows) {
                t.add_row({std::to_string(r.instance), u64(r.seed), format_double(r.inner_grad_norm),
                           format_double(r.relative_error), r.pass ? "true" : "false"});
                failed += r.pass ? 0 : 1;
                worst = std::max(worst, r.relative_error);
            }
            write_csv(dir / "quadratic_oracle.csv", t);
            log << rows.size() << " instances, worst relative error " << worst << ", " << failed
                << " above tolerance " << cfg.quad_tolerance << "\n";
            return failed > 0 ? 2 : 0;
        }
        case ExperimentKind::BoundCheck: {
            const auto rows = bound_check(cfg);
            CsvTable t{.header = {"instance", "seed", "p", "rank", "h", "k", "rho", "psd", "error", "bound", "ratio",
                                  "nystrom_opnorm", "status", "violation"}};
            int violations = 0, skipped = 0;
            for (const auto& r : rows) {
                const bool v = r.violation(cfg.bound_slack);
                violations += v ? 1 : 0;
                skipped += (r.psd && r.status == "ok") ? 0 : 1;
                t.add_row({std::to_string(r.instance), u64(r.seed), std::to_string(r.p), std::to_string(r.rank),
                           std::to_string(r.h), std::to_string(r.k), format_double(r.rho),
                           r.psd ? "true" : "false", format_double(r.error), format_double(r.bound),
                           format_double(r.ratio()), format_double(r.nystrom_opnorm), r.status,
                           v ? "true" : "false"});
            }
            write_csv(dir / "bound_check.csv", t);
            if (cfg.plots) plot_bound_check(dir);
            log << rows.size() << " rows, " << violations << " violations, " << skipped
                << " excluded (non-PSD or failed)\n";
            // a PSD row whose evaluation failed cannot be certified either
            int failed_psd = 0;
            for (const auto& r : rows) failed_psd += (r.psd && r.status != "ok") ? 1 : 0;
            return violations + failed_psd > 0 ? 2 : 0;
        }
        case ExperimentKind::Bench: {
            const BenchReport report = bench(cfg);
            CsvTable t{.header = {"backend", "size", "median_ms", "min_ms", "max_ms", "workspace_bytes",
                                  "factor_bytes", "oracle_calls", "warmup", "reps", "dim", "samples"}};
            for (const auto& c : report.cells) {
                const auto [lo, hi] = std::minmax_element(c.seconds.begin(), c.seconds.end());
                t.add_row({c.backend, std::to_string(c.size), format_double(1e3 * c.median_seconds),
                           format_double(1e3 * *lo), format_double(1e3 * *hi), std::to_string(c.workspace_bytes),
                           std::to_string(c.factor_bytes), u64(c.oracle_calls), std::to_string(report.warmup),
                           std::to_string(report.reps), std::to_string(report.dim),
                           std::to_string(report.samples)});
                log << c.backend << " " << c.size << ": " << 1e3 * c.median_seconds << " ms, workspace "
                    << c.workspace_bytes << " B\n";
            }
            write_csv(dir / "bench.csv", t);
            if (cfg.plots) plot_bench(dir);
            return 0;
        }
    }
    return 0;
}

}  // namespace nysgrad::cli
