#pragma once
/// The flow S(t): backward-Euler (implicit) stepping u_k = J_h(u_{k-1}) and
/// the exponential formula (I + (t/n) A)^-n u0.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fpflow/coefficients.hpp"
#include "fpflow/error.hpp"
#include "fpflow/grid.hpp"
#include "fpflow/resolvent.hpp"

namespace fpflow {

/// Per-step scalar record (kept for every step, not only snapshots).
struct StepStats {
    double time = 0.0;
    double mass = 0.0;
    double min_value = 0.0;
    double l1 = 0.0;
    double weighted_norm = 0.0;
};

/// Time-stamped snapshots plus running Cesaro accumulators.
///
/// cesaro_acc[j] = sum_{k < K_j} h u_k, the left-endpoint integral of the
/// piecewise-constant flow over [0, times[j]].
struct Trajectory {
    GridSpec grid;
    double step = 0.0;
    std::vector<double> times;
    std::vector<DensityField> snapshots;
    std::vector<std::vector<double>> cesaro_acc;
    std::vector<StepStats> stats;
    std::vector<std::vector<StageDiagnostics>> diagnostics;
    std::string fingerprint;
    bool complete = true;
    std::string error;
    std::vector<std::string> warnings;

    double end_time() const { return times.empty() ? 0.0 : times.back(); }
    const DensityField& final_snapshot() const { return snapshots.back(); }
};

struct EvolveOptions {
    /// Target number of snapshots after the initial one; the stride is ceil(steps / snapshots).
    int snapshots = 64;
    /// Extra snapshot times, rounded to the nearest step.
    std::vector<double> extra_times;
    /// Bound of the weighted-norm ball; unset means the weighted norm of u0.
    std::optional<double> eta;
    bool keep_diagnostics = false;
    /// Recompute weighted norms every step (needs Phi on the grid).
    bool weighted_stats = true;
    std::string fingerprint;
};

inline constexpr double kNegativeTolerance = 1e-10;

/// Clips roundoff negatives and renormalizes a field that started in P.
/// Larger violations are errors.
inline void enforce_probability(std::vector<double>& v, const GridSpec& g) {
    bool clipped = false;
    for (double& x : v) {
        if (!(x >= -kNegativeTolerance)) throw InvarianceViolation("flow produced a negative value below -1e-10");
        if (x < 0.0) {
            x = 0.0;
            clipped = true;
        }
    }
    double m = 0.0;
    for (double x : v) m += x;
    m *= g.cell_volume();
    const double drift = std::abs(m - 1.0);
    if (drift > kMassTolerance) throw InvarianceViolation("mass drifted by " + detail::fmt_scalar(drift));
    if (clipped && m != 1.0)
        for (double& x : v) x /= m;
}

/// One backward-Euler step u -> J_h(u).
inline DensityField step(const DensityField& u, const CoefficientSet& cs, const GridSpec& grid, SolverConfig cfg,
                         double h) {
    if (!(h > 0.0)) throw InvalidArgument("time step must be positive");
    cfg.lambda = h;
    return resolvent(u, cs, grid, cfg).solution;
}

inline int step_count(double T, double h) {
    if (!(T > 0.0) || !(h > 0.0)) throw InvalidArgument("need T > 0 and h > 0");
    return static_cast<int>(std::ceil(T / h - 1e-9));
}

/// Implicit stepping from u0 for ceil(T/h) steps. Step failures abort the
/// run; the partial trajectory is returned with complete = false.
inline Trajectory evolve(const DensityField& u0, double T, double h, const CoefficientSet& cs, const GridSpec& grid,
                         SolverConfig cfg, const EvolveOptions& opt = {}) {
    require_same_grid(u0.grid, grid);
    const int K = step_count(T, h);
    if (opt.snapshots < 1) throw InvalidArgument("need at least one snapshot");
    cfg.lambda = h;
    ResolventSolver solver(cs, grid, cfg);
    const bool probability = u0.kind == DensityKind::Probability;

    std::optional<WeightedNormContext> wctx;
    double eta = 0.0;
    if (opt.weighted_stats) {
        wctx.emplace(grid, cs, 1.0);
        eta = opt.eta ? *opt.eta : weighted_norm(u0, *wctx);
        wctx->eta = eta;
    }

    Trajectory traj;
    traj.grid = grid;
    traj.step = h;
    traj.fingerprint = opt.fingerprint;
    if (wctx && weighted_norm(u0, *wctx) > eta)
        traj.warnings.push_back("initial weighted norm exceeds eta=" + detail::fmt_scalar(eta));

    const int stride = std::max(1, (K + opt.snapshots - 1) / opt.snapshots);
    std::vector<char> record(static_cast<std::size_t>(K) + 1, 0);
    for (int k = 0; k <= K; k += stride) record[k] = 1;
    record[K] = 1;
    for (double t : opt.extra_times) {
        const long k = std::lround(t / h);
        if (k < 0 || k > K) throw InvalidArgument("extra snapshot time outside [0, T]");
        record[static_cast<std::size_t>(k)] = 1;
    }

    auto stats_of = [&](const std::vector<double>& v, double t) {
        StepStats s;
        s.time = t;
        DensityField tmp(grid, v);
        s.mass = mass(tmp);
        s.min_value = min_value(tmp);
        s.l1 = l1_norm(tmp);
        s.weighted_norm = wctx ? weighted_norm(tmp, *wctx) : 0.0;
        return s;
    };

    std::vector<double> u = u0.values, acc(u.size(), 0.0);
    auto snapshot = [&](int k) {
        traj.times.push_back(k * h);
        traj.snapshots.emplace_back(grid, u, probability ? DensityKind::Probability : DensityKind::Signed);
        traj.cesaro_acc.push_back(acc);
    };
    traj.stats.push_back(stats_of(u, 0.0));
    snapshot(0);
    for (int k = 1; k <= K; ++k) {
        for (std::size_t i = 0; i < u.size(); ++i) acc[i] += h * u[i];
        try {
            ResolventResult r = solver.resolve(DensityField(grid, u), h);
            if (opt.keep_diagnostics) traj.diagnostics.push_back(std::move(r.stages));
            u = std::move(r.solution.values);
            if (probability) enforce_probability(u, grid);
        } catch (const Error& e) {
            traj.complete = false;
            traj.error = "step " + std::to_string(k) + ": " + e.what();
            return traj;
        }
        traj.stats.push_back(stats_of(u, k * h));
        if (record[k]) snapshot(k);
    }
    return traj;
}

/// (I + (t/n) A)^-n u0.
inline DensityField exponential_formula(const DensityField& u0, double t, int n, const CoefficientSet& cs,
                                        const GridSpec& grid, SolverConfig cfg) {
    if (n < 1) throw InvalidArgument("exponential formula needs n >= 1");
    if (!(t > 0.0)) throw InvalidArgument("exponential formula needs t > 0");
    require_same_grid(u0.grid, grid);
    cfg.lambda = t / n;
    ResolventSolver solver(cs, grid, cfg);
    DensityField u = u0;
    for (int k = 0; k < n; ++k) u = solver.resolve(u, t / n).solution;
    u.kind = DensityKind::Signed;
    return u;
}

struct ContractionReport {
    std::vector<double> times;
    std::vector<double> distances;
    /// Largest step-to-step increase of the distance (negative when strictly decreasing).
    double worst_increase = 0.0;
    bool passed = true;
};

/// Tracks |S(t)u0 - S(t)v0|_1 on the step grid; passes iff it never grows by more than 1e-10 per step.
inline ContractionReport check_contraction(const DensityField& u0, const DensityField& v0, double T, double h,
                                           const CoefficientSet& cs, const GridSpec& grid, SolverConfig cfg) {
    require_same_grid(u0.grid, v0.grid);
    const int K = step_count(T, h);
    cfg.lambda = h;
    ResolventSolver solver(cs, grid, cfg);
    ContractionReport rep;
    rep.worst_increase = -std::numeric_limits<double>::infinity();
    DensityField u = u0, v = v0;
    rep.times.push_back(0.0);
    rep.distances.push_back(l1_distance(u, v));
    for (int k = 1; k <= K; ++k) {
        u = solver.resolve(u, h).solution;
        v = solver.resolve(v, h).solution;
        rep.times.push_back(k * h);
        rep.distances.push_back(l1_distance(u, v));
        const double inc = rep.distances[k] - rep.distances[k - 1];
        rep.worst_increase = std::max(rep.worst_increase, inc);
        if (inc > 1e-10) rep.passed = false;
    }
    return rep;
}

/// |S_h(t+s) u0 - S_h(t) S_h(s) u0|_1 with S_h(t) = ceil(t/h) implicit steps.
/// Zero whenever t and s are multiples of h.
inline double check_semigroup_property(const DensityField& u0, double t, double s, double h,
                                       const CoefficientSet& cs, const GridSpec& grid, SolverConfig cfg) {
    cfg.lambda = h;
    ResolventSolver solver(cs, grid, cfg);
    auto flow = [&](DensityField u, double time) {
        const int K = step_count(time, h);
        for (int k = 0; k < K; ++k) u = solver.resolve(u, h).solution;
        return u;
    };
    const DensityField whole = flow(u0, t + s);
    const DensityField split = flow(flow(u0, s), t);
    return l1_distance(whole, split);
}

}  // namespace fpflow
