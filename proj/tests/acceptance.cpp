// Acceptance suite: one PASS/FAIL line per criterion, exit 0 iff all pass.
// Usage: fpflow_acceptance [work_dir]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "fpflow/cli.hpp"
#include "oracles.hpp"

using namespace fpflow;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool passed = false;
    std::string detail;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

fs::path g_work;

std::string source(const std::string& rel) { return std::string(FPFLOW_SOURCE_DIR) + "/" + rel; }

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "fpflow");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) std::cerr << out.str() << err.str();
    return code;
}

fs::path fresh(const std::string& name) {
    const fs::path p = g_work / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

DensityField random_density(const GridSpec& g, oracle::TestRng& rng) {
    std::vector<double> v(g.size());
    // mix of smooth bumps and noise, occasionally with empty cells
    const double c = -g.half_width + 2 * g.half_width * rng.uniform();
    const double w = 0.3 + 2.0 * rng.uniform();
    const double noise = rng.uniform();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = g.center(static_cast<int>(i));
        v[i] = std::exp(-0.5 * (x - c) * (x - c) / (w * w)) + noise * rng.uniform();
        if (rng.uniform() < 0.1) v[i] = 0.0;
    }
    return normalized(DensityField(g, v));
}

DensityField gaussian1(const GridSpec& g, double mu, double sigma) {
    const double c[1] = {mu};
    return project_gaussian(g, c, sigma);
}

// ---------------------------------------------------------------------------

/// Resolvent contraction over 50 random pairs; writes the distances to dir.
Verdict contraction(const fs::path& dir) {
    const GridSpec g(1, 6.0, 64);
    const auto cs = make_porous_medium(1);
    io::CsvWriter csv(dir / "contraction.csv");
    csv.row({"lambda", "pair", "before", "after"});
    double worst = -std::numeric_limits<double>::infinity();
    for (double lam : {0.01, 0.05, 0.2}) {
        SolverConfig cfg;
        cfg.lambda = lam;
        ResolventSolver solver(cs, g, cfg);
        oracle::TestRng rng(2024);
        for (int k = 0; k < 50; ++k) {
            const auto f = random_density(g, rng), h = random_density(g, rng);
            const double before = l1_distance(f, h);
            const double after = l1_distance(solver.resolve(f).solution, solver.resolve(h).solution);
            worst = std::max(worst, after - before);
            csv.row({io::fmt(lam), io::fmt(k), io::fmt(before), io::fmt(after)});
        }
    }
    csv.close();
    return {worst <= 1e-10, "max(after - before) = " + num(worst) + " over 150 pairs"};
}

Verdict invariance() {
    struct Run {
        CoefficientSet cs;
        GridSpec grid;
        double h;
    };
    std::vector<BetaTableRow> table;
    for (int i = -40; i <= 40; ++i) {
        const double r = 0.25 * i;
        table.push_back({r, r + r * r * r / 3.0, 1.0 + r * r});
    }
    std::vector<Run> runs;
    runs.push_back({make_linear_ou(1), GridSpec(1, 6.0, 128), 0.05});
    runs.push_back({make_porous_medium(1), GridSpec(1, 6.0, 128), 0.05});
    runs.push_back({make_paper_phi(1), GridSpec(1, 2.0, 128), 0.01});
    runs.push_back({make_custom_table(1, table), GridSpec(1, 6.0, 128), 0.05});
    runs.push_back({make_paper_phi(3), GridSpec(3, 2.0, 24), 0.01});
    double worst_mass = 0.0, worst_min = 0.0, worst_lyap = -std::numeric_limits<double>::infinity();
    std::string where;
    for (const auto& r : runs) {
        // wide data: the uniform density lies above the stationary weighted norm
        EvolveOptions opt;
        opt.snapshots = 1;
        const auto traj = evolve(uniform_density(r.grid), 20 * r.h, r.h, r.cs, r.grid, SolverConfig{}, opt);
        if (!traj.complete) return {false, r.cs.id() + " failed: " + traj.error};
        const double eta = traj.stats.front().weighted_norm;
        for (std::size_t k = 0; k < traj.stats.size(); ++k) {
            const auto& s = traj.stats[k];
            worst_mass = std::max(worst_mass, std::abs(s.mass - 1.0));
            worst_min = std::min(worst_min, s.min_value);
            if (k > 0) {
                const double inc = (s.weighted_norm - traj.stats[k - 1].weighted_norm) / eta;
                if (inc > worst_lyap) {
                    worst_lyap = inc;
                    where = r.cs.id() + " d=" + std::to_string(r.grid.dim);
                }
            }
        }
    }
    const bool ok = worst_mass <= 1e-12 && worst_min >= -1e-10 && worst_lyap <= 1e-6;
    return {ok, "|mass-1| <= " + num(worst_mass) + ", min >= " + num(worst_min) +
                    ", max weighted-norm increase / eta = " + num(worst_lyap) + " (" + where + "); 5 runs x 20 steps"};
}

/// Linear OU flow from N(0.5, 1) against the box-projected stationary Gaussian.
Verdict ou_oracle(const fs::path& dir) {
    if (run_cli({"evolve", "--config", source("configs/linear-ou.json"), "--out", dir.string()}) != 0)
        return {false, "evolve failed"};
    const Trajectory traj = cli::load_trajectory(dir);
    const auto stationary = gaussian1(traj.grid, 0.0, 1.0);
    const double final_l1 = l1_distance(traj.final_snapshot(), stationary);
    const double cesaro_l1 = l1_distance(cesaro_mean_field(traj, {20.0})[0], stationary);
    return {final_l1 <= 2e-2 && cesaro_l1 <= 3e-2,
            "final L1 = " + num(final_l1) + " (<= 0.02), Cesaro L1 = " + num(cesaro_l1) + " (<= 0.03)"};
}

Verdict exponential_formula_rate() {
    const GridSpec g(1, 6.0, 128);
    const auto cs = make_linear_ou(1);
    const auto u0 = gaussian1(g, 0.5, 1.0);
    SolverConfig cfg;
    cfg.newton_tol = 1e-14;
    std::vector<DensityField> e;
    for (int n = 8; n <= 256; n *= 2) e.push_back(exponential_formula(u0, 1.0, n, cs, g, cfg));
    std::vector<double> diff;
    for (std::size_t k = 0; k + 1 < e.size(); ++k) diff.push_back(l1_distance(e[k], e[k + 1]));
    bool ok = true;
    std::string ratios;
    for (std::size_t k = 0; k + 1 < diff.size(); ++k) {
        const double q = diff[k] / diff[k + 1];
        ok = ok && q >= 1.5 && q <= 2.5;
        ratios += (k ? ", " : "") + num(q);
    }
    return {ok, "difference ratios per doubling (n = 8..128): " + ratios};
}

Verdict mean_ergodicity() {
    struct Case {
        std::string name;
        CoefficientSet cs;
        GridSpec grid;
        double h;
        DensityField u0;
    };
    const GridSpec g1(1, 6.0, 128), g2(1, 6.0, 64);
    std::vector<Case> cases;
    cases.push_back({"linear-ou N(0.5,1)", make_linear_ou(1), g1, 0.02, gaussian1(g1, 0.5, 1.0)});
    cases.push_back({"linear-ou N(-2,0.5)", make_linear_ou(1), g1, 0.02, gaussian1(g1, -2.0, 0.5)});
    cases.push_back({"porous N(1,2)", make_porous_medium(1), g2, 0.05, gaussian1(g2, 1.0, 2.0)});
    cases.push_back({"porous N(-1.5,0.5)", make_porous_medium(1), g2, 0.05, gaussian1(g2, -1.5, 0.5)});
    const std::vector<double> T{1.25, 2.5, 5.0, 10.0, 20.0};
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        EvolveOptions opt;
        opt.snapshots = 16;
        opt.extra_times = T;
        opt.weighted_stats = false;
        const auto traj = evolve(c.u0, 20.0, c.h, c.cs, c.grid, SolverConfig{}, opt);
        if (!traj.complete) return {false, c.name + " failed: " + traj.error};
        const auto rep = cesaro_cauchy_test(traj, T);
        ok = ok && rep.passed;
        detail += (detail.empty() ? "" : ", ") + c.name + " slope " + num(rep.log_slope);
    }
    return {ok, detail};
}

/// Particle time averages against the PDE Cesaro values, via the compare command.
Verdict particle_cross_check(const fs::path& dir) {
    run_cli({"compare", "--config", source("configs/linear-ou.json"), "--out", dir.string()});
    if (!fs::exists(dir / "compare.json")) return {false, "compare produced no verdict"};
    const auto v = nlohmann::json::parse(io::read_text(dir / "compare.json"));
    bool x2_ok = false;
    std::string detail;
    for (const auto& e : v.at("ergodic")) {
        if (e.at("observable") != "x2") continue;
        const double gap = e.at("gap").get<double>(), se = e.at("standard_error").get<double>();
        x2_ok = gap <= 3.0 * se;
        detail = "x^2 gap " + num(gap) + " vs 3 SE " + num(3.0 * se);
    }
    const auto& occ = v.at("occupation");
    const double occ_gap = std::abs(occ.at("particles").get<double>() - occ.at("pde").get<double>());
    detail += ", occupation [0, L] gap " + num(occ_gap) + " (<= 0.01)";
    return {x2_ok && occ_gap <= 1e-2, detail};
}

Verdict auditor_matrix() {
    struct Row {
        std::string family;
        double r_max;
        bool h1, h2, h3, uniq;
    };
    // expected outcomes, identical in d = 1, 2, 3
    const std::vector<Row> matrix{
        {"linear-ou", 10.0, true, false, true, true},
        {"porous-medium", 10.0, false, false, true, false},
        {"porous-medium", 4.0, true, false, true, false},
        {"paper-phi", 10.0, true, true, true, false},
    };
    int mismatches = 0;
    std::string detail;
    for (int d = 1; d <= 3; ++d)
        for (const auto& row : matrix) {
            const auto cs = make_family(row.family, d);
            const bool h1 = check_h1(cs, default_r_samples(row.r_max)).passed;
            const bool h2 = check_h2(cs, default_x_samples(d, 2.0, d == 3 ? 11 : 21), 50.0).passed;
            const bool h3 = check_h3(cs).passed;
            const bool uq = check_uniqueness_condition(cs, 1.0, default_r_samples(3.0, 61)).passed;
            if (h1 != row.h1 || h2 != row.h2 || h3 != row.h3 || uq != row.uniq) {
                ++mismatches;
                detail += " [" + row.family + " d=" + std::to_string(d) + "]";
            }
        }
    // the piecewise power example in its own right
    const bool example = check_h1(make_paper_phi(3, {{"power", 3.0}}), default_r_samples(10.0, 2001)).passed;

    const bool linear = check_uniqueness_condition(make_linear_ou(1), 1.0, default_r_samples(3.0, 61)).passed;
    CoefficientSpec s;
    s.dim = 1;
    s.beta = [](double r) { return r * std::abs(r); };
    s.b = [](double) { return 1.0; };
    s.phi = [](std::span<const double> x) { return 1.0 + 0.5 * x[0] * x[0]; };
    const auto sq = check_uniqueness_condition(CoefficientSet(s), 1.0, default_r_samples(3.0, 61));
    const bool ok = mismatches == 0 && example && linear && !sq.passed;
    return {ok, std::to_string(12 - mismatches) + "/12 matrix rows match" + detail +
                    ", piecewise example H1 " + (example ? "pass" : "FAIL") + ", uniqueness linear alpha=1 " +
                    (linear ? "pass" : "fail") + ", r|r| " + (sq.passed ? "pass" : "fail") + " (worst margin " +
                    num(sq.find("lipschitz_ratio")->worst_margin) + ")"};
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
    std::vector<fs::path> fa, fb;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    if (fa != fb) {
        why = "file lists differ under " + a.filename().string();
        return false;
    }
    for (const auto& f : fa)
        if (io::read_text(a / f) != io::read_text(b / f)) {
            why = (a.filename() / f).string() + " differs";
            return false;
        }
    return !fa.empty();
}

}  // namespace

int main(int argc, char** argv) {
    g_work = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_work";
    fs::create_directories(g_work);

    struct Criterion {
        int id;
        std::string name;
        double limit_s;
        std::function<Verdict()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "resolvent L1 contraction", 60, [] { return contraction(fresh("c1_a")); }},
        {2, "mass, positivity and weighted-norm invariance", 600, [] { return invariance(); }},
        {3, "linear OU stationary oracle", 120, [] { return ou_oracle(fresh("c3_a")); }},
        {4, "exponential formula first-order consistency", 120, [] { return exponential_formula_rate(); }},
        {5, "mean-ergodicity trend", 300, [] { return mean_ergodicity(); }},
        {6, "particle cross-validation", 600, [] { return particle_cross_check(fresh("c6_a")); }},
        {7, "hypothesis auditor matrix", 10, [] { return auditor_matrix(); }},
        {8, "determinism of criteria 1, 3, 6", 1e9,
         [] {
             contraction(fresh("c1_b"));
             ou_oracle(fresh("c3_b"));
             particle_cross_check(fresh("c6_b"));
             std::string why;
             bool ok = true;
             for (const char* c : {"c1", "c3", "c6"})
                 ok = ok && same_tree(g_work / (std::string(c) + "_a"), g_work / (std::string(c) + "_b"), why);
             return Verdict{ok, ok ? "all output files byte-identical" : why};
         }},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.limit_s) {
            v.passed = false;
            v.detail += "; runtime over the " + num(c.limit_s) + " s budget";
        }
        if (!v.passed) ++failed;
        std::cout << "criterion " << c.id << ": " << (v.passed ? "PASS" : "FAIL") << "  " << c.name << " -- "
                  << v.detail << " [" << num(secs) << " s]" << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << "\n";
    return failed ? 1 : 0;
}
