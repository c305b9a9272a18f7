#include "nysgrad/cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "nysgrad/error.hpp"

namespace nysgrad::cli {
namespace {

constexpr unsigned bit(ExperimentKind k) { return 1u << static_cast<unsigned>(k); }
constexpr unsigned kAll = 0x1f;
constexpr unsigned kDemo = bit(ExperimentKind::InvertDemo);
constexpr unsigned kLogreg = bit(ExperimentKind::Logreg);
constexpr unsigned kQuad = bit(ExperimentKind::QuadraticOracle);
constexpr unsigned kBound = bit(ExperimentKind::BoundCheck);
constexpr unsigned kBench = bit(ExperimentKind::Bench);

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(trim(item));
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <class T>
std::string fmt_int(T v) {
    return std::to_string(v);
}

double to_double(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw ConfigError("expected a number, got '" + s + "'");
    return v;
}

template <class T>
T to_int(const std::string& s) {
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw ConfigError("expected an integer, got '" + s + "'");
    return v;
}

bool to_bool(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError("expected true or false, got '" + s + "'");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <class T, class F>
std::vector<T> to_list(const std::string& s, F&& conv) {
    std::vector<T> out;
    if (trim(s).empty()) return out;
    for (const auto& item : split(s, ',')) out.push_back(conv(item));
    return out;
}

template <class T, class F>
std::string fmt_list(const std::vector<T>& xs, F&& f) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += f(xs[i]);
    }
    return out;
}

// "name a=1 b=2" -> name, {a: 1, b: 2}
struct Spec {
    std::string name;
    std::map<std::string, std::string> args;
};

Spec parse_spec(const std::string& text) {
    std::istringstream in(text);
    Spec spec;
    in >> spec.name;
    if (spec.name.empty()) throw ConfigError("empty specification");
    std::string tok;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("expected name=value, got '" + tok + "'");
        if (!spec.args.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second)
            throw ConfigError("repeated argument '" + tok.substr(0, eq) + "'");
    }
    return spec;
}

std::string take(Spec& spec, const std::string& key) {
    auto it = spec.args.find(key);
    if (it == spec.args.end()) return {};
    std::string v = it->second;
    spec.args.erase(it);
    return v;
}

void expect_consumed(const Spec& spec) {
    if (!spec.args.empty())
        throw ConfigError("unknown argument '" + spec.args.begin()->first + "' for '" + spec.name + "'");
}

struct Key {
    const char* name;
    unsigned mask;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::vector<std::string>(const ExperimentConfig&)> get;
    bool repeatable = false;
};

template <class Member>
Key double_key(const char* name, unsigned mask, Member member) {
    return {name, mask, [member](ExperimentConfig& c, const std::string& v) { std::invoke(member, c) = to_double(v); },
            [member](const ExperimentConfig& c) { return std::vector<std::string>{fmt(std::invoke(member, c))}; }};
}

template <class T, class Member>
Key int_key(const char* name, unsigned mask, Member member) {
    return {name, mask, [member](ExperimentConfig& c, const std::string& v) { std::invoke(member, c) = to_int<T>(v); },
            [member](const ExperimentConfig& c) { return std::vector<std::string>{fmt_int(std::invoke(member, c))}; }};
}

template <class Member>
Key bool_key(const char* name, unsigned mask, Member member) {
    return {name, mask, [member](ExperimentConfig& c, const std::string& v) { std::invoke(member, c) = to_bool(v); },
            [member](const ExperimentConfig& c) { return std::vector<std::string>{fmt_bool(std::invoke(member, c))}; }};
}

template <class Member>
Key double_list_key(const char* name, unsigned mask, Member member) {
    return {name, mask,
            [member](ExperimentConfig& c, const std::string& v) { std::invoke(member, c) = to_list<double>(v, to_double); },
            [member](const ExperimentConfig& c) {
                return std::vector<std::string>{fmt_list(std::invoke(member, c), [](double x) { return fmt(x); })};
            }};
}

template <class T, class Member>
Key int_list_key(const char* name, unsigned mask, Member member) {
    return {name, mask,
            [member](ExperimentConfig& c, const std::string& v) {
                std::invoke(member, c) = to_list<T>(v, [](const std::string& s) { return to_int<T>(s); });
            },
            [member](const ExperimentConfig& c) {
                return std::vector<std::string>{fmt_list(std::invoke(member, c), [](T x) { return fmt_int(x); })};
            }};
}

const std::vector<Key>& keys() {
    using C = ExperimentConfig;
    static const std::vector<Key> table = [] {
        std::vector<Key> k;
        k.push_back({"output_dir", kAll, [](C& c, const std::string& v) { c.output_dir = v; },
                     [](const C& c) { return std::vector<std::string>{c.output_dir}; }});
        k.push_back({"seeds", kAll, [](C& c, const std::string& v) { c.seeds = parse_seed_list(v); },
                     [](const C& c) {
                         return std::vector<std::string>{
                             fmt_list(c.seeds, [](std::uint64_t s) { return std::to_string(s); })};
                     }});
        k.push_back(int_key<int>("jobs", kAll, &C::jobs));
        k.push_back(bool_key("plots", kAll, &C::plots));

        k.push_back(int_key<Index>("p", kDemo, [](auto& c) -> auto& { return c.demo.p; }));
        k.push_back(int_key<Index>("rank", kDemo, [](auto& c) -> auto& { return c.demo.rank; }));
        k.push_back(double_key("rho", kDemo, [](auto& c) -> auto& { return c.demo.rho; }));
        k.push_back(int_list_key<Index>("nystrom_ranks", kDemo, &C::demo_nystrom_ranks));
        k.push_back(int_list_key<int>("neumann_truncations", kDemo, &C::demo_neumann_truncations));
        k.push_back(double_key("neumann_alpha", kDemo, &C::demo_neumann_alpha));

        k.push_back(int_key<Index>("dim", kLogreg, [](auto& c) -> auto& { return c.logreg.dim; }));
        k.push_back(int_key<Index>("n_train", kLogreg, [](auto& c) -> auto& { return c.logreg.n_train; }));
        k.push_back(int_key<Index>("n_val", kLogreg, [](auto& c) -> auto& { return c.logreg.n_val; }));
        k.push_back(double_key("noise_sigma", kLogreg, [](auto& c) -> auto& { return c.logreg.noise_sigma; }));
        k.push_back(double_key("init_scale", kLogreg, [](auto& c) -> auto& { return c.logreg.init_scale; }));
        k.push_back(double_key("phi0", kLogreg, [](auto& c) -> auto& { return c.logreg.phi0; }));
        k.push_back(int_key<int>("inner_steps", kLogreg,
                                 [](auto& c) -> auto& { return c.schedule.inner_steps_per_outer; }));
        k.push_back(int_key<int>("outer_steps", kLogreg, [](auto& c) -> auto& { return c.schedule.total_outer_steps; }));
        k.push_back(bool_key("reset_inner", kLogreg, [](auto& c) -> auto& { return c.schedule.reset_inner_on_outer; }));
        k.push_back(int_key<Index>("batch_size", kLogreg, [](auto& c) -> auto& { return c.schedule.batch_size; }));
        k.push_back({"inner_optimizer", kLogreg,
                     [](C& c, const std::string& v) { c.schedule.inner_optimizer = parse_optimizer(v); },
                     [](const C& c) { return std::vector<std::string>{format_optimizer(c.schedule.inner_optimizer)}; }});
        k.push_back({"outer_optimizer", kLogreg,
                     [](C& c, const std::string& v) { c.schedule.outer_optimizer = parse_optimizer(v); },
                     [](const C& c) { return std::vector<std::string>{format_optimizer(c.schedule.outer_optimizer)}; }});
        k.push_back({"ihvp", kLogreg, [](C& c, const std::string& v) { c.ihvps.push_back(parse_ihvp(v)); },
                     [](const C& c) {
                         std::vector<std::string> out;
                         for (const auto& i : c.ihvps) out.push_back(format_ihvp(i));
                         return out;
                     },
                     true});
        k.push_back(double_list_key("sweep_rho", kLogreg, &C::sweep_rho));
        k.push_back(int_list_key<Index>("sweep_k", kLogreg, &C::sweep_k));
        k.push_back(double_list_key("sweep_alpha", kLogreg, &C::sweep_alpha));
        k.push_back(bool_key("record_wall_time", kLogreg, &C::record_wall_time));

        k.push_back(int_key<Index>("p", kQuad, &C::quad_p));
        k.push_back(int_key<int>("instances", kQuad, &C::quad_instances));
        k.push_back(double_key("rho", kQuad, &C::quad_rho));
        k.push_back(double_key("inner_tol", kQuad, &C::quad_inner_tol));
        k.push_back(double_key("tolerance", kQuad, &C::quad_tolerance));

        k.push_back(int_key<int>("instances", kBound, &C::bound_instances));
        k.push_back(int_key<Index>("p_min", kBound, &C::bound_p_min));
        k.push_back(int_key<Index>("p_max", kBound, &C::bound_p_max));
        k.push_back(double_list_key("rho_values", kBound, &C::bound_rhos));
        k.push_back(int_key<int>("indefinite_instances", kBound, &C::bound_indefinite));
        k.push_back(double_key("slack", kBound, &C::bound_slack));

        k.push_back(int_key<Index>("dim", kBench, &C::bench_dim));
        k.push_back(int_key<Index>("samples", kBench, &C::bench_samples));
        k.push_back(int_list_key<Index>("ks", kBench, &C::bench_ks));
        k.push_back(int_list_key<int>("ls", kBench, &C::bench_ls));
        k.push_back(double_key("rho", kBench, &C::bench_rho));
        k.push_back(double_key("alpha", kBench, &C::bench_alpha));
        k.push_back(int_key<int>("warmup", kBench, &C::bench_warmup));
        k.push_back(int_key<int>("reps", kBench, &C::bench_reps));
        return k;
    }();
    return table;
}

struct Line {
    int number;
    std::string key;
    std::string value;
};

std::vector<Line> tokenize(const std::string& text) {
    std::vector<Line> out;
    std::istringstream in(text);
    std::string raw;
    int number = 0;
    while (std::getline(in, raw)) {
        ++number;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": missing key");
        out.push_back({number, key, trim(line.substr(eq + 1))});
    }
    return out;
}

}  // namespace

const char* to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::InvertDemo: return "invert-demo";
        case ExperimentKind::Logreg: return "logreg";
        case ExperimentKind::QuadraticOracle: return "quadratic-oracle";
        case ExperimentKind::BoundCheck: return "bound-check";
        case ExperimentKind::Bench: return "bench";
    }
    return "unknown";
}

ExperimentKind parse_experiment(const std::string& name) {
    for (auto k : {ExperimentKind::InvertDemo, ExperimentKind::Logreg, ExperimentKind::QuadraticOracle,
                   ExperimentKind::BoundCheck, ExperimentKind::Bench}) {
        if (name == to_string(k)) return k;
    }
    throw ConfigError("unknown experiment '" + name + "'");
}

ExperimentConfig default_config(ExperimentKind kind) {
    ExperimentConfig cfg;
    cfg.experiment = kind;
    // instance-based experiments derive one stream per instance from each seed
    if (kind == ExperimentKind::QuadraticOracle || kind == ExperimentKind::BoundCheck || kind == ExperimentKind::Bench)
        cfg.seeds = {0};
    if (kind == ExperimentKind::Logreg) {
        cfg.ihvps = {NystromIhvp{.k = 5, .rho = 0.01}, NeumannIhvp{.neumann = {5, 0.01}, .rho = 0.01},
                     CgIhvp{.cg = {5, 0.0}, .rho = 0.01}};
    }
    return cfg;
}

std::string format_ihvp(const IhvpConfig& cfg) {
    if (const auto* n = std::get_if<NystromIhvp>(&cfg)) {
        return "nystrom k=" + std::to_string(n->k) + " kappa=" + std::to_string(n->kappa) + " rho=" + fmt(n->rho) +
               " sampling=" + (n->sampling.kind == SamplingKind::Uniform ? "uniform" : "diagonal") +
               " sampling_seed=" + std::to_string(n->sampling.seed) + " eig_floor=" + fmt(n->eig_floor);
    }
    if (const auto* c = std::get_if<CgIhvp>(&cfg)) {
        return "cg l=" + std::to_string(c->cg.max_iters) + " tol=" + fmt(c->cg.residual_tol) + " rho=" + fmt(c->rho);
    }
    const auto& m = std::get<NeumannIhvp>(cfg);
    return "neumann l=" + std::to_string(m.neumann.truncation) + " alpha=" + fmt(m.neumann.alpha) +
           " rho=" + fmt(m.rho);
}

IhvpConfig parse_ihvp(const std::string& text) {
    Spec spec = parse_spec(text);
    auto get = [&](const std::string& key, auto fallback, auto conv) {
        const std::string v = take(spec, key);
        return v.empty() ? fallback : conv(v);
    };
    IhvpConfig out;
    if (spec.name == "nystrom") {
        NystromIhvp n;
        n.k = get("k", n.k, to_int<Index>);
        n.kappa = get("kappa", n.kappa, to_int<Index>);
        n.rho = get("rho", n.rho, to_double);
        const std::string sampling = take(spec, "sampling");
        if (sampling == "diagonal") n.sampling.kind = SamplingKind::DiagonalSquared;
        else if (!sampling.empty() && sampling != "uniform")
            throw ConfigError("sampling must be 'uniform' or 'diagonal', got '" + sampling + "'");
        n.sampling.seed = get("sampling_seed", n.sampling.seed, to_int<std::uint64_t>);
        n.eig_floor = get("eig_floor", n.eig_floor, to_double);
        out = n;
    } else if (spec.name == "cg") {
        CgIhvp c;
        c.cg.max_iters = get("l", c.cg.max_iters, to_int<int>);
        c.cg.residual_tol = get("tol", c.cg.residual_tol, to_double);
        c.rho = get("rho", c.rho, to_double);
        out = c;
    } else if (spec.name == "neumann") {
        NeumannIhvp m;
        m.neumann.truncation = get("l", m.neumann.truncation, to_int<int>);
        m.neumann.alpha = get("alpha", m.neumann.alpha, to_double);
        m.rho = get("rho", m.rho, to_double);
        out = m;
    } else {
        throw ConfigError("unknown ihvp backend '" + spec.name + "' (nystrom, cg, neumann)");
    }
    expect_consumed(spec);
    return out;
}

std::string format_optimizer(const OptimizerConfig& cfg) {
    if (const auto* s = std::get_if<Sgd>(&cfg)) return "sgd lr=" + fmt(s->lr);
    if (const auto* m = std::get_if<SgdMomentum>(&cfg))
        return "momentum lr=" + fmt(m->lr) + " momentum=" + fmt(m->momentum);
    const auto& a = std::get<Adam>(cfg);
    return "adam lr=" + fmt(a.lr) + " beta1=" + fmt(a.beta1) + " beta2=" + fmt(a.beta2) + " eps=" + fmt(a.eps);
}

OptimizerConfig parse_optimizer(const std::string& text) {
    Spec spec = parse_spec(text);
    auto get = [&](const std::string& key, double fallback) {
        const std::string v = take(spec, key);
        return v.empty() ? fallback : to_double(v);
    };
    OptimizerConfig out;
    if (spec.name == "sgd") {
        out = Sgd{get("lr", Sgd{}.lr)};
    } else if (spec.name == "momentum") {
        const SgdMomentum d;
        out = SgdMomentum{get("lr", d.lr), get("momentum", d.momentum)};
    } else if (spec.name == "adam") {
        const Adam d;
        out = Adam{get("lr", d.lr), get("beta1", d.beta1), get("beta2", d.beta2), get("eps", d.eps)};
    } else {
        throw ConfigError("unknown optimizer '" + spec.name + "' (sgd, momentum, adam)");
    }
    expect_consumed(spec);
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& item : split(text, ',')) {
        const auto dash = item.find('-');
        if (dash != std::string::npos && dash > 0) {
            const auto lo = to_int<std::uint64_t>(trim(item.substr(0, dash)));
            const auto hi = to_int<std::uint64_t>(trim(item.substr(dash + 1)));
            if (hi < lo) throw ConfigError("empty seed range '" + item + "'");
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
        } else {
            out.push_back(to_int<std::uint64_t>(item));
        }
    }
    if (out.empty()) throw ConfigError("seed list is empty");
    return out;
}

ExperimentConfig parse_config(const std::string& text) {
    const std::vector<Line> lines = tokenize(text);
    const Line* exp_line = nullptr;
    for (const auto& l : lines) {
        if (l.key != "experiment") continue;
        if (exp_line) throw ConfigError("line " + std::to_string(l.number) + ": 'experiment' given twice");
        exp_line = &l;
    }
    if (!exp_line) throw ConfigError("missing 'experiment' key");
    const ExperimentKind kind = parse_experiment(exp_line->value);
    ExperimentConfig cfg = default_config(kind);

    std::set<std::string> seen;
    bool ihvps_cleared = false;
    for (const auto& l : lines) {
        if (&l == exp_line) continue;
        const Key* key = nullptr;
        bool known_elsewhere = false;
        for (const auto& k : keys()) {
            if (l.key != k.name) continue;
            if (k.mask & bit(kind)) key = &k;
            else known_elsewhere = true;
        }
        const std::string where = "line " + std::to_string(l.number) + ": ";
        if (!key) {
            if (known_elsewhere)
                throw ConfigError(where + "key '" + l.key + "' is not used by experiment '" + to_string(kind) + "'");
            throw ConfigError(where + "unknown key '" + l.key + "'");
        }
        if (!key->repeatable && !seen.insert(l.key).second)
            throw ConfigError(where + "key '" + l.key + "' given twice");
        if (key->repeatable && l.key == "ihvp" && !ihvps_cleared) {
            cfg.ihvps.clear();
            ihvps_cleared = true;
        }
        try {
            key->set(cfg, l.value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + l.key + ": " + e.what());
        }
    }
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string serialize(const ExperimentConfig& cfg) {
    std::string out = "experiment = " + std::string(to_string(cfg.experiment)) + "\n";
    for (const auto& k : keys()) {
        if (!(k.mask & bit(cfg.experiment))) continue;
        for (const auto& v : k.get(cfg)) out += std::string(k.name) + " = " + v + "\n";
    }
    return out;
}

void validate(const ExperimentConfig& cfg) {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    if (cfg.seeds.empty()) fail("seeds: at least one seed is required");
    if (cfg.jobs < 1) fail("jobs must be >= 1");
    if (cfg.output_dir.empty()) fail("output_dir must not be empty");
    try {
        switch (cfg.experiment) {
            case ExperimentKind::InvertDemo:
                nysgrad::validate(cfg.demo);
                for (Index k : cfg.demo_nystrom_ranks)
                    if (k < 1 || k > cfg.demo.p) fail("nystrom_ranks must lie in [1, p]");
                for (int l : cfg.demo_neumann_truncations)
                    if (l < 1) fail("neumann_truncations must be >= 1");
                if (!(cfg.demo_neumann_alpha > 0.0)) fail("neumann_alpha must be positive");
                break;
            case ExperimentKind::Logreg:
                nysgrad::validate(cfg.logreg);
                nysgrad::validate(cfg.schedule);
                if (cfg.ihvps.empty()) fail("at least one 'ihvp' line is required");
                for (const auto& i : cfg.ihvps) nysgrad::validate(i);
                for (double r : cfg.sweep_rho)
                    if (!(r > 0.0)) fail("sweep_rho entries must be positive");
                for (Index k : cfg.sweep_k)
                    if (k < 1 || k > cfg.logreg.dim) fail("sweep_k entries must lie in [1, dim]");
                for (double a : cfg.sweep_alpha)
                    if (!(a > 0.0)) fail("sweep_alpha entries must be positive");
                break;
            case ExperimentKind::QuadraticOracle:
                if (cfg.quad_p < 1 || cfg.quad_instances < 1) fail("p and instances must be positive");
                if (!(cfg.quad_rho > 0.0)) fail("rho must be positive");
                if (!(cfg.quad_inner_tol > 0.0) || !(cfg.quad_tolerance > 0.0)) fail("tolerances must be positive");
                break;
            case ExperimentKind::BoundCheck:
                if (cfg.bound_instances < 1) fail("instances must be >= 1");
                if (cfg.bound_p_min < 1 || cfg.bound_p_max < cfg.bound_p_min) fail("need 1 <= p_min <= p_max");
                if (cfg.bound_p_max > kDefaultDenseCap) fail("p_max exceeds the dense cap");
                if (cfg.bound_rhos.empty()) fail("rho_values must not be empty");
                for (double r : cfg.bound_rhos)
                    if (!(r > 0.0)) fail("rho_values entries must be positive");
                if (cfg.bound_indefinite < 0) fail("indefinite_instances must be >= 0");
                if (!(cfg.bound_slack >= 0.0)) fail("slack must be >= 0");
                break;
            case ExperimentKind::Bench:
                if (cfg.bench_dim < 1 || cfg.bench_samples < 1) fail("dim and samples must be positive");
                if (cfg.bench_ks.empty() && cfg.bench_ls.empty()) fail("ks and ls are both empty");
                for (Index k : cfg.bench_ks)
                    if (k < 1 || k > cfg.bench_dim) fail("ks entries must lie in [1, dim]");
                for (int l : cfg.bench_ls)
                    if (l < 1) fail("ls entries must be >= 1");
                if (!(cfg.bench_rho > 0.0) || !(cfg.bench_alpha > 0.0)) fail("rho and alpha must be positive");
                if (cfg.bench_warmup < 1) fail("warmup must be >= 1");
                if (cfg.bench_reps < 3) fail("reps must be >= 3");
                break;
        }
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace nysgrad::cli
