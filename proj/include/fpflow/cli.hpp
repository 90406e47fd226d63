#pragma once
/// Command-line front end: check, evolve, ergodic, particles, compare.
/// Exit codes: 0 pass, 1 domain failure, 2 usage or configuration error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fpflow/coefficients.hpp"
#include "fpflow/config.hpp"
#include "fpflow/ergodic.hpp"
#include "fpflow/io.hpp"
#include "fpflow/particles.hpp"
#include "fpflow/semigroup.hpp"

namespace fpflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum Exit : int { kPass = 0, kDomainFailure = 1, kUsage = 2 };

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

class Logger {
public:
    explicit Logger(std::ostream& os, LogLevel level = LogLevel::Warn) : os_(os), level_(level) {}
    void error(const std::string& m) const { write(LogLevel::Error, "error", m); }
    void warn(const std::string& m) const { write(LogLevel::Warn, "warn", m); }
    void info(const std::string& m) const { write(LogLevel::Info, "info", m); }
    void debug(const std::string& m) const { write(LogLevel::Debug, "debug", m); }

private:
    void write(LogLevel l, const char* tag, const std::string& m) const {
        if (l <= level_) os_ << "[" << tag << "] " << m << "\n";
    }
    std::ostream& os_;
    LogLevel level_;
};

struct Context {
    RunConfig cfg;
    fs::path out;
    int threads = 1;
    std::ostream* out_stream = &std::cout;
    Logger* log = nullptr;
};

inline json stamp(const std::string& hash) { return json{{"config_hash", hash}, {"version", kToolVersion}}; }

inline std::string snapshot_name(const std::string& prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%05zu.bin", prefix.c_str(), i);
    return buf;
}

inline void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

inline void mark_incomplete(const fs::path& dir, const std::string& hash, const std::string& why) {
    json j = stamp(hash);
    j["complete"] = false;
    j["error"] = why;
    write_json(dir / "INCOMPLETE.json", j);
}

inline void clear_incomplete(const fs::path& dir) {
    std::error_code ec;
    fs::remove(dir / "INCOMPLETE.json", ec);
}

// ---------------------------------------------------------------------------
// check

inline json to_json(const HypothesisReport& r) {
    json checks = json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"name", c.name},
                          {"passed", c.passed},
                          {"worst_margin", c.worst_margin},
                          {"worst_sample", c.worst_sample},
                          {"heuristic", c.heuristic}});
    return {{"hypothesis", r.hypothesis}, {"passed", r.passed}, {"samples", r.samples}, {"notes", r.notes}, {"checks", checks}};
}

inline int cmd_check(Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const CheckSection& c = cfg.check;
    const CoefficientSet cs = cfg.coefficients();
    fs::create_directories(ctx.out);

    const auto r_samples = default_r_samples(c.r_max, c.r_count, c.r_random, c.seed);
    const double x_radius = c.x_radius ? *c.x_radius : cfg.grid.half_width;
    const double quad_radius = c.quad_radius ? *c.quad_radius : x_radius;
    const auto x_samples = default_x_samples(cfg.grid.dim, x_radius, c.x_per_axis, c.x_random, c.seed);

    std::map<std::string, HypothesisReport> reports;
    reports["h1"] = check_h1(cs, r_samples);
    reports["h2"] = check_h2(cs, x_samples, quad_radius, H2Options{c.phi_threshold, c.shells});
    reports["h3"] = check_h3(cs, c.b_r_max, 1001, c.b_upper);
    const std::optional<double> alpha = c.alpha ? c.alpha : cs.alpha();
    if (alpha) {
        reports["uniqueness"] = check_uniqueness_condition(cs, *alpha, r_samples);
    } else {
        HypothesisReport r;
        r.hypothesis = "uniqueness";
        r.passed = false;
        r.notes.push_back("no alpha configured; condition not evaluated");
        reports["uniqueness"] = r;
    }
    const FixedPointReport fp = fixed_point_criteria(cs, c.fp_r_lo, c.fp_r_hi);

    bool ok = true;
    json summary = stamp(cfg.hash);
    summary["family"] = cfg.family;
    for (const auto& [name, rep] : reports) {
        const bool required = c.require.count(name) > 0;
        json j = to_json(rep);
        j.update(stamp(cfg.hash));
        j["required"] = required;
        write_json(ctx.out / (name + ".json"), j);
        summary["reports"][name] = {{"passed", rep.passed}, {"required", required}};
        if (required && !rep.passed) ok = false;
        std::string line = name + ": " + (rep.passed ? "PASS" : "FAIL") + (required ? "" : " (informational)");
        *ctx.out_stream << line << "\n";
        for (const auto& chk : rep.checks)
            if (!chk.passed)
                *ctx.out_stream << "  violated " << name << "." << chk.name << ": worst margin " << io::fmt(chk.worst_margin)
                                << " at " << chk.worst_sample << "\n";
        for (const auto& n : rep.notes) ctx.log->info(name + ": " + n);
    }
    json fpj = stamp(cfg.hash);
    fpj["limit_at_infinity_diverges"] = fp.limit_at_infinity_diverges;
    fpj["limit_at_zero_diverges"] = fp.limit_at_zero_diverges;
    fpj["applicable_case"] = fp.applicable_case;
    fpj["integral_at_r_hi"] = fp.integral_at_r_hi;
    fpj["integral_at_r_lo"] = fp.integral_at_r_lo;
    fpj["growth_ratio_hi"] = fp.growth_ratio_hi;
    fpj["growth_ratio_lo"] = fp.growth_ratio_lo;
    write_json(ctx.out / "fixed_point.json", fpj);
    summary["passed"] = ok;
    write_json(ctx.out / "summary.json", summary);
    *ctx.out_stream << "check: " << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? kPass : kDomainFailure;
}

// ---------------------------------------------------------------------------
// trajectory storage

inline json grid_json(const GridSpec& g) { return {{"dim", g.dim}, {"half_width", g.half_width}, {"cells", g.cells}}; }

inline void save_trajectory(const fs::path& dir, const Trajectory& traj, const std::string& hash) {
    fs::create_directories(dir / "snapshots");
    fs::create_directories(dir / "cesaro");
    json m = stamp(hash);
    m["complete"] = traj.complete;
    if (!traj.complete) m["error"] = traj.error;
    m["warnings"] = traj.warnings;
    m["grid"] = grid_json(traj.grid);
    m["step"] = traj.step;
    m["times"] = traj.times;
    json snaps = json::array(), accs = json::array();
    std::vector<double> masses, norms, weighted, mins;
    for (std::size_t j = 0; j < traj.snapshots.size(); ++j) {
        const auto sname = "snapshots/" + snapshot_name("snap", j);
        const auto aname = "cesaro/" + snapshot_name("acc", j);
        io::write_binary(dir / sname, traj.snapshots[j]);
        io::write_binary(dir / aname, DensityField(traj.grid, traj.cesaro_acc[j]));
        snaps.push_back(sname);
        accs.push_back(aname);
    }
    std::size_t k = 0;
    for (double t : traj.times) {
        while (k + 1 < traj.stats.size() && traj.stats[k].time < t - 1e-9 * traj.step) ++k;
        masses.push_back(traj.stats[k].mass);
        norms.push_back(traj.stats[k].l1);
        weighted.push_back(traj.stats[k].weighted_norm);
        mins.push_back(traj.stats[k].min_value);
    }
    m["snapshots"] = snaps;
    m["cesaro_accumulators"] = accs;
    m["masses"] = masses;
    m["norms"] = norms;
    m["weighted_norms"] = weighted;
    m["min_values"] = mins;
    json steps = json::array();
    for (const auto& s : traj.stats)
        steps.push_back({{"time", s.time}, {"mass", s.mass}, {"l1", s.l1}, {"min", s.min_value}, {"weighted_norm", s.weighted_norm}});
    m["step_stats"] = steps;
    std::string diag;
    for (std::size_t step = 0; step < traj.diagnostics.size(); ++step)
        for (const auto& d : traj.diagnostics[step]) {
            json j = stamp(hash);
            j["step"] = step + 1;
            j["eps"] = d.eps;
            j["newton_iters"] = d.newton_iters;
            j["residual"] = d.residual;
            j["l1_diff_prev_stage"] = d.l1_diff_prev_stage < 0 ? json(nullptr) : json(d.l1_diff_prev_stage);
            j["picard_fallback"] = d.picard_fallback;
            diag += j.dump() + "\n";
        }
    io::write_text(dir / "diagnostics.jsonl", diag);
    write_json(dir / "manifest.json", m);
}

inline std::optional<json> read_manifest(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) return std::nullopt;
    try {
        return json::parse(io::read_text(dir / "manifest.json"));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

/// Rebuilds a Trajectory (snapshots and accumulators) from an evolve output directory.
inline Trajectory load_trajectory(const fs::path& dir, std::string* hash = nullptr) {
    const auto m = read_manifest(dir);
    if (!m) throw ConfigError("no readable manifest.json in " + dir.string());
    try {
        Trajectory traj;
        traj.grid.dim = m->at("grid").at("dim").get<int>();
        traj.grid.half_width = m->at("grid").at("half_width").get<double>();
        traj.grid.cells = m->at("grid").at("cells").get<int>();
        traj.step = m->at("step").get<double>();
        traj.times = m->at("times").get<std::vector<double>>();
        traj.complete = m->at("complete").get<bool>();
        traj.fingerprint = m->at("config_hash").get<std::string>();
        const auto snaps = m->at("snapshots").get<std::vector<std::string>>();
        const auto accs = m->at("cesaro_accumulators").get<std::vector<std::string>>();
        if (snaps.size() != traj.times.size() || accs.size() != traj.times.size())
            throw ConfigError("manifest lists inconsistent snapshot counts");
        for (std::size_t j = 0; j < snaps.size(); ++j) {
            DensityField u = io::read_binary(dir / snaps[j]);
            if (!(u.grid == traj.grid)) throw ConfigError("snapshot " + snaps[j] + " has a different grid");
            traj.snapshots.push_back(std::move(u));
            traj.cesaro_acc.push_back(io::read_binary(dir / accs[j]).values);
        }
        if (hash) *hash = traj.fingerprint;
        return traj;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
}

inline EvolveOptions evolve_options(const RunConfig& cfg) {
    EvolveOptions opt;
    opt.snapshots = cfg.evolve.snapshots;
    opt.extra_times = cfg.evolve.extra_times;
    // Cesaro values are exact at stored times.
    for (double t : cfg.ergodic.T_list)
        if (t > 0.0 && t <= cfg.evolve.T) opt.extra_times.push_back(t);
    opt.eta = cfg.evolve.eta;
    opt.keep_diagnostics = true;
    opt.fingerprint = cfg.hash;
    return opt;
}

inline void require_section(const RunConfig& cfg, const char* name, const char* cmd) {
    if (!cfg.raw.contains(name) || cfg.raw.at(name).is_null())
        throw ConfigError(std::string("config.") + name + ": section required by '" + cmd + "'");
}

inline int cmd_evolve(Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    require_section(cfg, "evolve", "evolve");
    fs::create_directories(ctx.out);
    if (const auto m = read_manifest(ctx.out)) {
        if (m->value("config_hash", "") == cfg.hash && m->value("complete", false) && m->value("version", "") == kToolVersion) {
            ctx.log->info("reusing cached trajectory in " + ctx.out.string());
            *ctx.out_stream << "evolve: cached (" << cfg.hash << ")\n";
            return kPass;
        }
    }
    const CoefficientSet cs = cfg.coefficients();
    const DensityField u0 = cfg.initial_density();
    const Trajectory traj = evolve(u0, cfg.evolve.T, cfg.evolve.h, cs, cfg.grid, cfg.solver, evolve_options(cfg));
    for (const auto& w : traj.warnings) ctx.log->warn(w);
    save_trajectory(ctx.out, traj, cfg.hash);
    if (!traj.complete) {
        mark_incomplete(ctx.out, cfg.hash, traj.error);
        ctx.log->error(traj.error);
        *ctx.out_stream << "evolve: INCOMPLETE\n";
        return kDomainFailure;
    }
    clear_incomplete(ctx.out);
    *ctx.out_stream << "evolve: " << traj.snapshots.size() << " snapshots to T=" << io::fmt(traj.end_time()) << "\n";
    return kPass;
}

// ---------------------------------------------------------------------------
// ergodic

/// Observables file: either a bare ergodic section or a full run config.
inline ErgodicSection read_observables(const fs::path& path, int dim) {
    json doc;
    try {
        doc = json::parse(io::read_text(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (doc.is_object() && doc.contains("ergodic")) doc = doc.at("ergodic");
    if (doc.is_array()) doc = json{{"observables", doc}};
    detail::Section s(doc, "observables");
    ErgodicSection e;
    e.T_list = s.numbers("T_list");
    e.window_fraction = s.number("window_fraction", e.window_fraction);
    e.observables = detail::parse_observables(s.at("observables"), "observables.observables", dim);
    s.finish();
    return e;
}

inline int cmd_ergodic(Context& ctx, const fs::path& traj_dir, const std::optional<fs::path>& obs_file,
                       const std::optional<RunConfig>& cfg) {
    std::string hash;
    const Trajectory traj = load_trajectory(traj_dir, &hash);
    ErgodicSection sec;
    if (obs_file) sec = read_observables(*obs_file, traj.grid.dim);
    else if (cfg) sec = cfg->ergodic;
    else throw ConfigError("ergodic needs --observables or --config");
    if (sec.observables.empty()) throw ConfigError("no observables given");
    std::vector<double> T_list = sec.T_list;
    if (T_list.empty())
        for (double t : traj.times)
            if (t > 0.0) T_list.push_back(t);
    if (!traj.complete) ctx.log->warn("trajectory is incomplete; averages cover the computed span only");

    if (ctx.out.has_parent_path()) fs::create_directories(ctx.out.parent_path());
    io::CsvWriter w(ctx.out);
    w.row({"T", "observable_label", "cesaro_value", "config_hash", "version"});
    for (const auto& spec : sec.observables) {
        const auto values = cesaro_observable(traj, to_cells(spec, traj.grid), T_list);
        for (std::size_t i = 0; i < T_list.size(); ++i) w.row({io::fmt(T_list[i]), spec.label, io::fmt(values[i]), hash, kToolVersion});
    }
    w.close();

    fs::path omega_dir = ctx.out;
    omega_dir.replace_filename(ctx.out.stem().string() + "_omega");
    fs::create_directories(omega_dir);
    json oj = stamp(hash);
    int code = kPass;
    if (T_list.size() >= 3) {
        const auto rep = cesaro_cauchy_test(traj, T_list);
        oj["cauchy"] = {{"times", rep.times}, {"distances", rep.distances}, {"log_slope", rep.log_slope}, {"passed", rep.passed}};
        *ctx.out_stream << "cesaro cauchy test: " << (rep.passed ? "PASS" : "FAIL") << " (slope " << io::fmt(rep.log_slope) << ")\n";
        if (!rep.passed) code = kDomainFailure;
    }
    try {
        const auto est = estimate_omega(traj, sec.window_fraction);
        json reps = json::array();
        for (std::size_t r = 0; r < est.representatives.size(); ++r) {
            const auto name = snapshot_name("rep", r);
            io::write_binary(omega_dir / name, est.representatives[r]);
            reps.push_back({{"file", name}, {"time", traj.times[est.representative_indices[r]]}});
        }
        std::vector<double> wtimes;
        for (auto i : est.window_indices) wtimes.push_back(traj.times[i]);
        oj["omega"] = {{"window", {est.window_start, est.window_end}},
                       {"window_times", wtimes},
                       {"distances", est.distances},
                       {"diameter", est.diameter},
                       {"threshold", est.threshold},
                       {"clusters", est.clusters},
                       {"representatives", reps}};
    } catch (const InvalidArgument& e) {
        ctx.log->warn(std::string("omega estimate skipped: ") + e.what());
        oj["omega"] = {{"error", e.what()}};
    }
    write_json(omega_dir / "omega.json", oj);
    return code;
}

// ---------------------------------------------------------------------------
// particles

inline SimulateOptions particle_options(const RunConfig& cfg, int threads) {
    const ParticleSection& p = cfg.particles;
    SimulateOptions opt;
    opt.particles = p.N;
    opt.T = p.T;
    opt.dt = p.dt;
    opt.refresh_every = p.refresh_every;
    opt.seed = p.seed;
    opt.bandwidth = p.bandwidth;
    opt.records = p.records;
    opt.observables = cfg.ergodic.observables;
    opt.ergodic_times = p.ergodic_times;
    if (opt.ergodic_times.empty()) {
        for (double t : cfg.ergodic.T_list)
            if (t > 0.0 && t <= p.T + 1e-9 * p.dt) opt.ergodic_times.push_back(t);
        if (opt.ergodic_times.empty()) opt.ergodic_times.push_back(p.T);
    }
    opt.em.u_floor = p.u_floor;
    opt.em.threads = threads;
    return opt;
}

inline void write_particle_outputs(const fs::path& dir, const ParticleSummary& sum, const SimulateOptions& opt,
                                   const std::string& hash) {
    fs::create_directories(dir / "estimates");
    const int d = sum.grid.dim;
    json m = stamp(hash);
    m["grid"] = grid_json(sum.grid);
    m["particles"] = sum.particles;
    m["dt"] = sum.dt;
    m["seed"] = sum.seed;
    json files = json::array();
    std::vector<double> times;
    io::CsvWriter s(dir / "summary.csv");
    std::vector<std::string> head{"t"};
    for (int a = 0; a < d; ++a) head.push_back("mean_x" + std::to_string(a));
    for (int a = 0; a < d; ++a) head.push_back("second_moment_x" + std::to_string(a));
    head.insert(head.end(), {"reflections", "config_hash", "version"});
    s.row(head);
    for (std::size_t r = 0; r < sum.records.size(); ++r) {
        const auto& rec = sum.records[r];
        const auto name = "estimates/" + snapshot_name("est", r);
        io::write_binary(dir / name, rec.estimate.field);
        files.push_back(name);
        times.push_back(rec.time);
        std::vector<std::string> row{io::fmt(rec.time)};
        for (double v : rec.mean) row.push_back(io::fmt(v));
        for (double v : rec.second_moment) row.push_back(io::fmt(v));
        row.push_back(std::to_string(rec.reflections));
        row.push_back(hash);
        row.push_back(kToolVersion);
        s.row(row);
    }
    s.close();
    io::CsvWriter e(dir / "ergodic.csv");
    e.row({"T", "observable_label", "ergodic_average", "standard_error", "config_hash", "version"});
    for (const auto& spec : opt.observables) {
        const auto vals = marginal_ergodic_average(sum, spec.label, opt.ergodic_times);
        for (const auto& v : vals) e.row({io::fmt(v.T), spec.label, io::fmt(v.value), io::fmt(v.stderr_), hash, kToolVersion});
    }
    e.close();
    m["times"] = times;
    m["estimates"] = files;
    m["method"] = sum.records.empty() ? "" : sum.records.front().estimate.method;
    m["complete"] = true;
    write_json(dir / "manifest.json", m);
}

inline int cmd_particles(Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    require_section(cfg, "particles", "particles");
    fs::create_directories(ctx.out);
    const SimulateOptions opt = particle_options(cfg, ctx.threads);
    try {
        const ParticleSummary sum = simulate(cfg.initial_density(), cfg.coefficients(), opt);
        write_particle_outputs(ctx.out, sum, opt, cfg.hash);
    } catch (const Error& e) {
        mark_incomplete(ctx.out, cfg.hash, e.what());
        throw;
    }
    clear_incomplete(ctx.out);
    *ctx.out_stream << "particles: done\n";
    return kPass;
}

// ---------------------------------------------------------------------------
// compare

inline int cmd_compare(Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    require_section(cfg, "particles", "compare");
    require_section(cfg, "evolve", "compare");
    fs::create_directories(ctx.out);
    const CoefficientSet cs = cfg.coefficients();
    const DensityField u0 = cfg.initial_density();
    const SimulateOptions popt = particle_options(cfg, ctx.threads);
    const double h = cfg.evolve.h;

    ParticleSummary sum;
    Trajectory traj;
    try {
        sum = simulate(u0, cs, popt);
        write_particle_outputs(ctx.out / "particles", sum, popt, cfg.hash);
        EvolveOptions eopt = evolve_options(cfg);
        eopt.extra_times.clear();
        for (const auto& rec : sum.records) eopt.extra_times.push_back(rec.time);
        for (double t : popt.ergodic_times) eopt.extra_times.push_back(t);
        traj = evolve(u0, cfg.particles.T, h, cs, cfg.grid, cfg.solver, eopt);
        save_trajectory(ctx.out / "pde", traj, cfg.hash);
        if (!traj.complete) throw Error("PDE run incomplete: " + traj.error);
    } catch (const Error& e) {
        mark_incomplete(ctx.out, cfg.hash, e.what());
        throw;
    }

    auto pde_index = [&](double t) -> std::optional<std::size_t> {
        for (std::size_t j = 0; j < traj.times.size(); ++j)
            if (std::abs(traj.times[j] - t) <= 0.5 * h) return j;
        return std::nullopt;
    };
    std::vector<Observable> cells;
    for (const auto& spec : popt.observables) cells.push_back(to_cells(spec, cfg.grid));

    bool ok = true;
    json verdict = stamp(cfg.hash);
    io::CsvWriter w(ctx.out / "compare.csv");
    std::vector<std::string> head{"t", "l1_distance"};
    for (const auto& spec : popt.observables) head.push_back("gap_" + spec.label);
    head.insert(head.end(), {"config_hash", "version"});
    w.row(head);
    double worst_l1 = 0.0;
    for (const auto& rec : sum.records) {
        const auto j = pde_index(rec.time);
        if (!j) continue;
        const double dist = l1_distance(rec.estimate.field, traj.snapshots[*j]);
        worst_l1 = std::max(worst_l1, dist);
        std::vector<std::string> row{io::fmt(rec.time), io::fmt(dist)};
        const long k = std::lround(rec.time / sum.dt);
        for (std::size_t o = 0; o < cells.size(); ++o)
            row.push_back(io::fmt(sum.observable_means[o][static_cast<std::size_t>(k)] - cells[o](traj.snapshots[*j])));
        row.push_back(cfg.hash);
        row.push_back(kToolVersion);
        w.row(row);
    }
    w.close();
    const bool l1_ok = worst_l1 <= cfg.compare.l1_max;
    ok = ok && l1_ok;
    verdict["l1"] = {{"worst", worst_l1}, {"tolerance", cfg.compare.l1_max}, {"passed", l1_ok}};

    json erg = json::array();
    for (std::size_t o = 0; o < popt.observables.size(); ++o) {
        const auto& spec = popt.observables[o];
        const auto part = marginal_ergodic_average(sum, spec.label, popt.ergodic_times);
        const auto pde = cesaro_observable(traj, cells[o], popt.ergodic_times);
        for (std::size_t i = 0; i < part.size(); ++i) {
            const double gap = std::abs(part[i].value - pde[i]);
            const double tol = std::max(cfg.compare.stderr_factor * part[i].stderr_, 1e-9);
            const bool pass = gap <= tol;
            ok = ok && pass;
            erg.push_back({{"observable", spec.label},
                           {"T", part[i].T},
                           {"particles", part[i].value},
                           {"pde", pde[i]},
                           {"standard_error", part[i].stderr_},
                           {"gap", gap},
                           {"tolerance", tol},
                           {"passed", pass}});
        }
    }
    verdict["ergodic"] = erg;
    if (cfg.compare.has_box) {
        const double T = popt.ergodic_times.back();
        const double occ = occupation_measure(sum, cfg.compare.box_lo, cfg.compare.box_hi, T);
        const auto mean = cesaro_mean_field(traj, {T}).front();
        const double pde = integrate_against(mean, indicator_observable(cfg.grid, cfg.compare.box_lo, cfg.compare.box_hi).values);
        const bool pass = std::abs(occ - pde) <= cfg.compare.occupation_tol;
        ok = ok && pass;
        verdict["occupation"] = {{"T", T}, {"particles", occ}, {"pde", pde}, {"tolerance", cfg.compare.occupation_tol}, {"passed", pass}};
    }
    verdict["passed"] = ok;
    write_json(ctx.out / "compare.json", verdict);
    clear_incomplete(ctx.out);
    *ctx.out_stream << "compare: " << (ok ? "PASS" : "FAIL") << " (worst L1 " << io::fmt(worst_l1) << ")\n";
    return ok ? kPass : kDomainFailure;
}

// ---------------------------------------------------------------------------

inline int resolve_threads(std::optional<int> flag) {
    if (flag) return std::max(1, *flag);
    if (const char* env = std::getenv("FPFLOW_THREADS")) {
        try {
            return std::max(1, std::stoi(env));
        } catch (const std::exception&) {
            throw ConfigError(std::string("FPFLOW_THREADS is not an integer: ") + env);
        }
    }
    return 1;
}

/// Entry point; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Nonlinear Fokker-Planck flows: resolvent, semigroup, ergodic averages and particle cross-checks", "fpflow"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_path, log_level = "warn";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    app.add_option("--config", config_path, "run configuration (JSON)");
    app.add_option("--out", out_path, "output directory (or CSV file for ergodic)");
    app.add_option("--seed", seed, "particle seed (overrides the config)");
    app.add_option("--threads", threads, "worker threads (default: FPFLOW_THREADS or 1)");
    app.add_option("--log-level", log_level, "error, warn, info or debug")
        ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

    auto* check = app.add_subcommand("check", "audit the coefficient hypotheses");
    auto* evolve_cmd = app.add_subcommand("evolve", "run the implicit flow and store snapshots");
    auto* ergodic = app.add_subcommand("ergodic", "Cesaro averages and omega-limit estimate of a stored trajectory");
    auto* particles = app.add_subcommand("particles", "interacting-particle simulation");
    auto* compare = app.add_subcommand("compare", "particle simulation against the PDE flow");
    std::string traj_dir, obs_path;
    ergodic->add_option("--traj", traj_dir, "directory written by evolve")->required();
    ergodic->add_option("--observables", obs_path, "observables file (JSON)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kPass;
    } catch (const CLI::CallForVersion& e) {
        out << kToolVersion << "\n";
        return kPass;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return kUsage;
    }

    const LogLevel level = log_level == "error" ? LogLevel::Error
                           : log_level == "info"  ? LogLevel::Info
                           : log_level == "debug" ? LogLevel::Debug
                                                  : LogLevel::Warn;
    Logger log(err, level);
    Context ctx;
    ctx.out_stream = &out;
    ctx.log = &log;
    try {
        ctx.threads = resolve_threads(threads);
        const bool is_ergodic = ergodic->parsed();
        std::optional<RunConfig> cfg;
        if (!config_path.empty()) {
            cfg = load_config(config_path, seed);
            ctx.cfg = *cfg;
        } else if (!is_ergodic) {
            err << "usage error: --config is required\n";
            return kUsage;
        }
        if (out_path.empty()) {
            err << "usage error: --out is required\n";
            return kUsage;
        }
        ctx.out = out_path;
        log.info("config hash " + ctx.cfg.hash + ", threads " + std::to_string(ctx.threads));
        if (check->parsed()) return cmd_check(ctx);
        if (evolve_cmd->parsed()) return cmd_evolve(ctx);
        if (is_ergodic)
            return cmd_ergodic(ctx, traj_dir, obs_path.empty() ? std::nullopt : std::optional<fs::path>(obs_path), cfg);
        if (particles->parsed()) return cmd_particles(ctx);
        if (compare->parsed()) return cmd_compare(ctx);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kDomainFailure;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kDomainFailure;
    }
    return kUsage;
}

}  // namespace fpflow::cli
