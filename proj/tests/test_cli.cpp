#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nysgrad/cli/config.hpp"
#include "nysgrad/cli/csv.hpp"
#include "nysgrad/cli/experiments.hpp"
#include "nysgrad/cli/svg.hpp"
#include "nysgrad/error.hpp"
#include "nysgrad/tasks.hpp"

using namespace nysgrad;
using namespace nysgrad::cli;
namespace fs = std::filesystem;

namespace {

const ExperimentKind kKinds[] = {ExperimentKind::InvertDemo, ExperimentKind::Logreg, ExperimentKind::QuadraticOracle,
                                 ExperimentKind::BoundCheck, ExperimentKind::Bench};

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("nysgrad_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

ExperimentConfig tiny_logreg(const fs::path& out) {
    ExperimentConfig cfg = default_config(ExperimentKind::Logreg);
    cfg.output_dir = out.string();
    cfg.logreg.dim = 8;
    cfg.logreg.n_train = cfg.logreg.n_val = 30;
    cfg.schedule.inner_steps_per_outer = 5;
    cfg.schedule.total_outer_steps = 3;
    cfg.schedule.outer_optimizer = Sgd{0.01};
    cfg.ihvps = {NystromIhvp{.k = 3, .rho = 1.0}, NeumannIhvp{.neumann = {3, 0.1}, .rho = 1.0},
                 CgIhvp{.cg = {3, 0.0}, .rho = 1.0}};
    cfg.seeds = {0, 1};
    cfg.record_wall_time = false;
    cfg.plots = true;
    return cfg;
}

}  // namespace

TEST_CASE("every default config round-trips") {
    for (auto kind : kKinds) {
        const ExperimentConfig cfg = default_config(kind);
        CHECK_NOTHROW(validate(cfg));
        const ExperimentConfig back = parse_config(serialize(cfg));
        CHECK(back == cfg);
        CHECK(serialize(back) == serialize(cfg));
    }
}

TEST_CASE("a customized config round-trips exactly") {
    ExperimentConfig cfg = default_config(ExperimentKind::Logreg);
    cfg.output_dir = "runs/custom dir";
    cfg.seeds = {3, 7, 11};
    cfg.jobs = 4;
    cfg.plots = false;
    cfg.logreg.noise_sigma = 1.0 / 3.0;
    cfg.logreg.phi0 = 0.1 + 0.2;
    cfg.schedule.inner_optimizer = Adam{1e-3, 0.8, 0.95, 1e-300};
    cfg.schedule.outer_optimizer = SgdMomentum{0.7, 0.5};
    cfg.schedule.reset_inner_on_outer = false;
    cfg.schedule.batch_size = 32;
    cfg.ihvps = {NystromIhvp{.k = 7, .kappa = 2, .rho = 0.123456789012345678,
                             .sampling = {SamplingKind::DiagonalSquared, 99}, .eig_floor = 1e-12},
                 CgIhvp{.cg = {9, 1e-7}, .rho = 0.5}};
    cfg.sweep_rho = {0.01, 0.1, 1.0};
    cfg.sweep_k = {5, 10};
    cfg.record_wall_time = false;
    CHECK(parse_config(serialize(cfg)) == cfg);
}

TEST_CASE("shipped configs parse and round-trip") {
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(NYSGRAD_CONFIG_DIR)) {
        if (entry.path().extension() != ".cfg") continue;
        CAPTURE(entry.path().string());
        const ExperimentConfig cfg = load_config(entry.path());
        CHECK(parse_config(serialize(cfg)) == cfg);
        ++seen;
    }
    CHECK(seen >= 5);
}

TEST_CASE("config parsing") {
    SUBCASE("comments, blank lines and defaults") {
        const auto cfg = parse_config("# demo\n\nexperiment = invert-demo   # trailing\nrho = 0.5\n");
        CHECK(cfg.experiment == ExperimentKind::InvertDemo);
        CHECK(cfg.demo.rho == 0.5);
        CHECK(cfg.demo.p == 40);
    }
    SUBCASE("ihvp lines replace the default list") {
        const auto cfg = parse_config("experiment = logreg\nihvp = cg l=7\nihvp = nystrom k=3 kappa=1\n");
        REQUIRE(cfg.ihvps.size() == 2);
        CHECK(std::get<CgIhvp>(cfg.ihvps[0]).cg.max_iters == 7);
        CHECK(std::get<NystromIhvp>(cfg.ihvps[1]).kappa == 1);
    }
    SUBCASE("seed lists") {
        CHECK(parse_seed_list("0-3,9") == std::vector<std::uint64_t>{0, 1, 2, 3, 9});
        CHECK_THROWS_AS(parse_seed_list("4-2"), ConfigError);
        CHECK_THROWS_AS(parse_seed_list("a"), ConfigError);
    }
    SUBCASE("rejections") {
        CHECK_THROWS_AS(parse_config("rho = 1\n"), ConfigError);                                // no experiment
        CHECK_THROWS_AS(parse_config("experiment = nope\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("experiment = logreg\nfoo = 1\n"), ConfigError);         // unknown key
        CHECK_THROWS_AS(parse_config("experiment = logreg\nrank = 3\n"), ConfigError);        // other experiment
        CHECK_THROWS_AS(parse_config("experiment = logreg\ndim = 3\ndim = 4\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("experiment = logreg\ndim = 3.5\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("experiment = logreg\nihvp = cg q=1\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("experiment = logreg\nihvp = lu\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("experiment = logreg\nouter_optimizer = sgd lr=x\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("experiment = bench\nreps = 2\n"), ConfigError);       // fewer than 3
        CHECK_THROWS_AS(parse_config("experiment = bound-check\np_max = 5000\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("experiment = invert-demo\nno equals sign\n"), ConfigError);
    }
    SUBCASE("error messages name the line") {
        try {
            parse_config("experiment = logreg\n\nbogus = 1\n");
            FAIL("expected a config error");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
    SUBCASE("missing file is an IO error") {
        CHECK_THROWS_AS(load_config("/nonexistent/nysgrad.cfg"), IoError);
    }
}

TEST_CASE("csv") {
    SUBCASE("quoting round trip") {
        CsvTable t{.header = {"a", "b,c", "d"}};
        t.add_row({"plain", "with \"quotes\"", "multi\nline"});
        t.add_row({"", "x", "nystrom(k=5,kappa=5,rho=0.01)"});
        std::stringstream s;
        write_csv(s, t);
        CHECK(s.str().rfind("a,\"b,c\",d\r\n", 0) == 0);
        const CsvTable back = read_csv(s);
        CHECK(back.header == t.header);
        CHECK(back.rows == t.rows);
        CHECK(back.column("d") == 2);
        CHECK_THROWS_AS(back.column("zz"), IoError);
    }
    SUBCASE("doubles keep 17 significant digits") {
        for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 6.02214076e23}) {
            CHECK(parse_double(format_double(v)) == v);
        }
        CHECK(format_double(0.1) == "0.10000000000000001");
        CHECK(std::isinf(parse_double(format_double(std::numeric_limits<double>::infinity()))));
    }
    SUBCASE("malformed input") {
        std::stringstream empty;
        CHECK_THROWS_AS(read_csv(empty), IoError);
        std::stringstream ragged("a,b\n1\n");
        CHECK_THROWS_AS(read_csv(ragged), IoError);
        std::stringstream open("a\n\"x\n");
        CHECK_THROWS_AS(read_csv(open), IoError);
        CsvTable t{.header = {"a"}};
        CHECK_THROWS_AS(t.add_row({"1", "2"}), IoError);
    }
}

TEST_CASE("svg rendering") {
    LinePlot plot{.title = "t <&>", .x_label = "x", .y_label = "y", .log_y = true};
    plot.series.push_back({.name = "s", .x = {1, 2, 3}, .y = {1, 0, 100}});
    const std::string svg = render_svg(plot);
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("t &lt;&amp;&gt;") != std::string::npos);
    const std::string heat = render_svg({Heatmap{"m", Matrix::Identity(3, 3)}}, "h");
    CHECK(heat.find("rgb(255,0,0)") != std::string::npos);
}

TEST_CASE("logreg outputs are bit-identical across reruns") {
    const fs::path a = scratch_dir("rerun");
    const ExperimentConfig cfg = tiny_logreg(a);
    const std::vector<std::string> files{"config.txt", "steps.csv", "summary.json", "train_loss.svg", "val_loss.svg"};
    std::ostringstream log;
    const int code_a = execute(cfg, log);
    std::vector<std::string> first;
    for (const auto& file : files) {
        REQUIRE(fs::exists(a / file));
        first.push_back(slurp(a / file));
    }
    const int code_b = execute(cfg, log);
    CHECK(code_a == code_b);
    for (std::size_t i = 0; i < files.size(); ++i) {
        CAPTURE(files[i]);
        CHECK(slurp(a / files[i]) == first[i]);
    }

    const CsvTable steps = read_csv(a / "steps.csv");
    CHECK(steps.header == std::vector<std::string>{"outer_step", "inner_step", "train_loss", "val_loss", "backend",
                                                   "ihvp", "seed", "wall_ms"});
    // (3 outer steps + 1) windows of 5 inner steps, 3 backends, 2 seeds
    CHECK(steps.rows.size() == 4u * 5u * 3u * 2u);
    const auto c_backend = steps.column("backend"), c_seed = steps.column("seed"), c_wall = steps.column("wall_ms");
    for (const auto& row : steps.rows) {
        CHECK(!row[c_backend].empty());
        CHECK(!row[c_seed].empty());
        CHECK(row[c_wall].empty());
    }
    CHECK(code_a == 0);
    fs::remove_all(a);
}

TEST_CASE("logreg steps table layout") {
    RunRecord r;
    r.backend = "cg";
    r.ihvp_label = "cg(l=1,rho=1)";
    r.seed = 4;
    r.schedule.inner_steps_per_outer = 2;
    r.schedule.total_outer_steps = 1;
    r.train_loss = {0.7, 0.6, 0.69, 0.5};
    r.outer.push_back({.outer_step = 1, .val_loss = 0.65, .wall_seconds = 0.002});
    r.final_val_loss = 0.55;
    const CsvTable t = logreg_steps_table({r}, true);
    REQUIRE(t.rows.size() == 4);
    CHECK(t.rows[0][3].empty());
    CHECK(parse_double(t.rows[1][3]) == 0.65);
    CHECK(parse_double(t.rows[1][7]) == doctest::Approx(2.0));
    CHECK(t.rows[2][0] == "1");
    CHECK(parse_double(t.rows[3][3]) == 0.55);
    CHECK(t.rows[3][7].empty());
}

TEST_CASE("invert-demo") {
    SUBCASE("exact rank and ordering on the default instance") {
        ExperimentConfig cfg = default_config(ExperimentKind::InvertDemo);
        cfg.seeds = {0, 1};
        const auto result = invert_demo(cfg);
        CHECK(result.rows.size() == 12);
        for (const auto& r : result.rows) {
            CHECK(r.status == "ok");
            if (r.method == "nystrom" && r.param == 20) CHECK(r.relative_error <= 1e-6);
        }
        CHECK(result.approximations.size() == 6);
    }
    SUBCASE("a dominant regularizer leaves roughly (1/rho) I") {
        const DenseOperator a = make_lowrank_demo({});
        const double norm_a = operator_norm(a);
        for (double rho : {1e6, 1e9}) {
            const Matrix target = Matrix::Identity(40, 40) / rho;
            // (A + rho I)^{-1} differs from I / rho by about ||A|| / rho in relative terms
            const double limit = std::max(1e-6, 2.0 * norm_a / rho);
            const Matrix ny = nystrom_dense_inverse(a, rho, 5, 0);
            const Matrix nm = neumann_dense_inverse(a, rho, 5, 1.0 / rho);
            CHECK((ny - target).norm() / target.norm() <= limit);
            CHECK((nm - target).norm() / target.norm() <= limit);
        }
    }
}

TEST_CASE("bound-check flags indefinite instances") {
    ExperimentConfig cfg = default_config(ExperimentKind::BoundCheck);
    cfg.bound_instances = 6;
    cfg.bound_p_max = 30;
    cfg.bound_indefinite = 2;
    const auto rows = bound_check(cfg);
    int non_psd = 0;
    for (const auto& r : rows) {
        if (!r.psd) {
            ++non_psd;
            CHECK(r.status.rfind("non-PSD", 0) == 0);
            CHECK_FALSE(r.violation(0.0));
        } else {
            CHECK(r.status == "ok");
            CHECK_FALSE(r.violation(1e-9));
        }
        if (r.k == r.p && r.psd) CHECK(r.error <= 1e-9);
    }
    CHECK(non_psd >= 2);
}

TEST_CASE("quadratic-oracle experiment") {
    ExperimentConfig cfg = default_config(ExperimentKind::QuadraticOracle);
    cfg.quad_instances = 4;
    for (const auto& r : quadratic_oracle(cfg)) {
        CHECK(r.pass);
        CHECK(r.inner_grad_norm <= cfg.quad_inner_tol);
    }
}

TEST_CASE("bench report") {
    ExperimentConfig cfg = default_config(ExperimentKind::Bench);
    cfg.bench_dim = 300;
    cfg.bench_samples = 40;
    cfg.bench_ks = {2, 4};
    cfg.bench_ls = {2};
    cfg.bench_reps = 3;
    const BenchReport report = bench(cfg);
    CHECK(report.cells.size() == 6);
    for (const auto& c : report.cells) {
        CHECK(c.seconds.size() == 3);
        CHECK(c.median_seconds > 0.0);
        CHECK(c.workspace_bytes > 0);
    }
    CHECK(report.cell("nystrom-full", 4).oracle_calls == 4);
    CHECK(report.cell("neumann", 2).oracle_calls == 2);
    CHECK_THROWS_AS(report.cell("cg", 9), ArgumentError);
}

TEST_CASE("execute writes the config next to the outputs") {
    const fs::path dir = scratch_dir("quad");
    ExperimentConfig cfg = default_config(ExperimentKind::QuadraticOracle);
    cfg.output_dir = dir.string();
    cfg.quad_instances = 2;
    std::ostringstream log;
    CHECK(execute(cfg, log) == 0);
    CHECK(parse_config(slurp(dir / "config.txt")) == cfg);
    CHECK(read_csv(dir / "quadratic_oracle.csv").rows.size() == 2);
    fs::remove_all(dir);
}
