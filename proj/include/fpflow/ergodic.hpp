#pragma once
/// Long-time behaviour of a trajectory: Cesaro averages of the flow and of
/// linear observables, an empirical omega-limit estimate, stationary
/// residuals and fixed-point probing.
///
/// The ergodic limit is only ever approached through the Cesaro averages
/// themselves; no measure on the omega-limit set is constructed.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fpflow/error.hpp"
#include "fpflow/flux_operator.hpp"
#include "fpflow/grid.hpp"
#include "fpflow/semigroup.hpp"

namespace fpflow {

/// Bounded cell-sampled function g; F(u) = int g u dx.
struct Observable {
    std::string label;
    std::vector<double> values;

    double operator()(const DensityField& u) const { return integrate_against(u, values); }
};

inline Observable constant_observable(const GridSpec& g, double c, std::string label = "one") {
    return {std::move(label), std::vector<double>(g.size(), c)};
}

/// g(x) = x_axis^power at cell centres.
inline Observable moment_observable(const GridSpec& g, int axis, int power, std::string label = "") {
    if (axis < 0 || axis >= g.dim) throw InvalidArgument("moment axis out of range");
    if (label.empty()) label = "x" + std::to_string(axis) + "^" + std::to_string(power);
    Observable o{std::move(label), std::vector<double>(g.size())};
    for (std::size_t i = 0; i < g.size(); ++i) o.values[i] = std::pow(g.center_of(i)[axis], power);
    return o;
}

/// Fraction of each cell covered by the box [lo, hi] (exact indicator when
/// the box is aligned with cell faces).
inline Observable indicator_observable(const GridSpec& g, const Point& lo, const Point& hi, std::string label = "box") {
    Observable o{std::move(label), std::vector<double>(g.size(), 1.0)};
    const double h = g.spacing();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto idx = g.unflatten(i);
        for (int k = 0; k < g.dim; ++k) {
            const double a = -g.half_width + idx[k] * h, b = a + h;
            o.values[i] *= std::max(0.0, std::min(b, hi[k]) - std::max(a, lo[k])) / h;
        }
    }
    return o;
}

/// g(x) = cos(frequency * x_axis).
inline Observable cosine_observable(const GridSpec& g, int axis, double frequency, std::string label = "") {
    if (axis < 0 || axis >= g.dim) throw InvalidArgument("cosine axis out of range");
    if (label.empty()) label = "cos" + std::to_string(axis);
    Observable o{std::move(label), std::vector<double>(g.size())};
    for (std::size_t i = 0; i < g.size(); ++i) o.values[i] = std::cos(frequency * g.center_of(i)[axis]);
    return o;
}

/// Declarative observable usable both on grid cells (PDE) and at particle
/// positions. kind is one of "constant", "moment", "indicator", "cosine".
struct ObservableSpec {
    std::string label;
    std::string kind = "constant";
    int axis = 0;
    int power = 1;
    double value = 1.0;
    double frequency = 1.0;
    Point lo{};
    Point hi{};

    void validate(int dim) const {
        if (kind != "constant" && kind != "moment" && kind != "indicator" && kind != "cosine")
            throw InvalidArgument("unknown observable kind '" + kind + "'");
        if ((kind == "moment" || kind == "cosine") && (axis < 0 || axis >= dim))
            throw InvalidArgument("observable axis out of range");
        if (kind == "moment" && power < 0) throw InvalidArgument("moment power must be >= 0");
    }

    /// Point evaluation g(x).
    double operator()(std::span<const double> x) const {
        if (kind == "constant") return value;
        if (kind == "moment") return std::pow(x[axis], power);
        if (kind == "cosine") return std::cos(frequency * x[axis]);
        for (std::size_t k = 0; k < x.size(); ++k)
            if (x[k] < lo[k] || x[k] > hi[k]) return 0.0;
        return 1.0;
    }
};

/// Cell sampling of a spec (indicators use the covered cell fraction).
inline Observable to_cells(const ObservableSpec& spec, const GridSpec& g) {
    spec.validate(g.dim);
    if (spec.kind == "constant") return constant_observable(g, spec.value, spec.label);
    if (spec.kind == "moment") return moment_observable(g, spec.axis, spec.power, spec.label);
    if (spec.kind == "cosine") return cosine_observable(g, spec.axis, spec.frequency, spec.label);
    return indicator_observable(g, spec.lo, spec.hi, spec.label);
}

namespace detail {

/// Left-endpoint integral int_0^T u dt. Exact at recorded times; linear
/// interpolation of the accumulator in between.
inline std::vector<double> accumulated(const Trajectory& traj, double T) {
    if (traj.times.empty()) throw InvalidArgument("empty trajectory");
    const double slack = 1e-9 * traj.step;
    if (!(T > 0.0)) throw InvalidArgument("Cesaro time must be positive");
    if (T > traj.end_time() + slack) throw InvalidArgument("Cesaro time " + fmt_scalar(T) + " beyond trajectory span");
    const auto it = std::lower_bound(traj.times.begin(), traj.times.end(), T - slack);
    const std::size_t j = static_cast<std::size_t>(it - traj.times.begin());
    if (std::abs(traj.times[j] - T) <= slack) return traj.cesaro_acc[j];
    const double t0 = traj.times[j - 1], t1 = traj.times[j];
    const double w = (T - t0) / (t1 - t0);
    std::vector<double> out(traj.cesaro_acc[j].size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (1.0 - w) * traj.cesaro_acc[j - 1][i] + w * traj.cesaro_acc[j][i];
    return out;
}

}  // namespace detail

/// (1/T) int_0^T S(t)u0 dt for each T.
inline std::vector<DensityField> cesaro_mean_field(const Trajectory& traj, const std::vector<double>& T_list) {
    std::vector<DensityField> out;
    const bool probability = !traj.snapshots.empty() && traj.snapshots.front().kind == DensityKind::Probability;
    for (double T : T_list) {
        std::vector<double> acc = detail::accumulated(traj, T);
        for (double& v : acc) v /= T;
        out.emplace_back(traj.grid, std::move(acc), probability ? DensityKind::Probability : DensityKind::Signed);
    }
    return out;
}

/// (1/T) int_0^T F(S(t)u0) dt for each T; by linearity of F this is F of the Cesaro mean.
inline std::vector<double> cesaro_observable(const Trajectory& traj, const Observable& obs,
                                             const std::vector<double>& T_list) {
    std::vector<double> out;
    for (double T : T_list) {
        const std::vector<double> acc = detail::accumulated(traj, T);
        double s = 0.0;
        for (std::size_t i = 0; i < acc.size(); ++i) s += obs.values[i] * acc[i];
        out.push_back(s * traj.grid.cell_volume() / T);
    }
    return out;
}

struct CauchyReport {
    std::vector<double> times;
    /// distances[k] = |M(T_{k+1}) - M(T_k)|_1
    std::vector<double> distances;
    /// Least-squares slope of log distance against log T_k.
    double log_slope = 0.0;
    bool passed = false;
};

/// Successive Cesaro-mean increments; passes when they trend down in log-log scale.
inline CauchyReport cesaro_cauchy_test(const Trajectory& traj, const std::vector<double>& T_seq) {
    if (T_seq.size() < 3) throw InvalidArgument("Cauchy test needs at least three times");
    for (std::size_t k = 1; k < T_seq.size(); ++k)
        if (!(T_seq[k] > T_seq[k - 1])) throw InvalidArgument("Cauchy test times must increase");
    CauchyReport rep;
    rep.times = T_seq;
    const auto means = cesaro_mean_field(traj, T_seq);
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k + 1 < means.size(); ++k) {
        const double d = l1_distance(means[k + 1], means[k]);
        rep.distances.push_back(d);
        if (d > 0.0) {
            lx.push_back(std::log(T_seq[k]));
            ly.push_back(std::log(d));
        }
    }
    if (lx.empty()) {
        rep.passed = true;  // all increments vanish: the averages are already constant
        return rep;
    }
    if (lx.size() < 2) {
        rep.log_slope = -std::numeric_limits<double>::infinity();
        rep.passed = true;
        return rep;
    }
    rep.log_slope = detail::least_squares_slope(lx, ly);
    rep.passed = rep.log_slope < 0.0;
    return rep;
}

struct OmegaEstimate {
    std::vector<std::size_t> representative_indices;  ///< into Trajectory::snapshots
    std::vector<DensityField> representatives;
    std::vector<std::size_t> window_indices;
    std::vector<std::vector<double>> distances;  ///< pairwise L1 over the window
    double window_start = 0.0;
    double window_end = 0.0;
    double diameter = 0.0;
    double threshold = 0.0;
    std::size_t clusters = 0;
};

/// Clusters the snapshots in the last window_fraction of the run
/// (single linkage at twice the median nearest-neighbour distance) and
/// returns one medoid per cluster.
inline OmegaEstimate estimate_omega(const Trajectory& traj, double window_fraction) {
    if (!(window_fraction > 0.0 && window_fraction <= 1.0)) throw InvalidArgument("window_fraction must lie in (0, 1]");
    OmegaEstimate est;
    est.window_end = traj.end_time();
    est.window_start = (1.0 - window_fraction) * traj.end_time();
    for (std::size_t j = 0; j < traj.times.size(); ++j)
        if (traj.times[j] >= est.window_start - 1e-12) est.window_indices.push_back(j);
    const std::size_t n = est.window_indices.size();
    if (n < 8) throw InvalidArgument("omega estimate needs >= 8 snapshots in the window, found " + std::to_string(n));
    est.distances.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            const double d = l1_distance(traj.snapshots[est.window_indices[a]], traj.snapshots[est.window_indices[b]]);
            est.distances[a][b] = est.distances[b][a] = d;
            est.diameter = std::max(est.diameter, d);
        }
    std::vector<double> nn(n, std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            if (a != b) nn[a] = std::min(nn[a], est.distances[a][b]);
    std::vector<double> sorted = nn;
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    est.threshold = 2.0 * sorted[n / 2];

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            if (est.distances[a][b] <= est.threshold) parent[find(a)] = find(b);
    std::vector<std::vector<std::size_t>> groups;
    std::vector<long> group_of(n, -1);
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t r = find(a);
        if (group_of[r] < 0) {
            group_of[r] = static_cast<long>(groups.size());
            groups.emplace_back();
        }
        groups[static_cast<std::size_t>(group_of[r])].push_back(a);
    }
    est.clusters = groups.size();
    for (const auto& grp : groups) {
        std::size_t best = grp.front();
        double best_sum = std::numeric_limits<double>::infinity();
        for (std::size_t a : grp) {
            double s = 0.0;
            for (std::size_t b : grp) s += est.distances[a][b];
            if (s < best_sum) {
                best_sum = s;
                best = a;
            }
        }
        est.representative_indices.push_back(est.window_indices[best]);
        est.representatives.push_back(traj.snapshots[est.window_indices[best]]);
    }
    return est;
}

/// |A_0 u|_1, the discrete residual of the stationary equation.
inline double stationary_residual(const DensityField& u, const CoefficientSet& cs, const GridSpec& grid) {
    require_same_grid(u.grid, grid);
    return l1_norm(apply_operator(u, cs, 0.0));
}

struct FixedPointResult {
    bool is_fixed_point = false;
    double drift = 0.0;
    double tolerance = 0.0;
};

/// drift = |S(t_probe)u - u|_1 with steps of cfg.lambda (capped at t_probe).
/// The scheme tolerance is the per-step Newton tolerance accumulated over
/// the steps; the flag is drift <= 10 * that.
inline FixedPointResult fixed_point_test(const DensityField& u, const CoefficientSet& cs, const GridSpec& grid,
                                         SolverConfig cfg, double t_probe) {
    if (!(t_probe > 0.0)) throw InvalidArgument("t_probe must be positive");
    const double h = std::min(cfg.lambda, t_probe);
    const int K = step_count(t_probe, h);
    cfg.lambda = h;
    ResolventSolver solver(cs, grid, cfg);
    DensityField v = u;
    for (int k = 0; k < K; ++k) v = solver.resolve(v, h).solution;
    FixedPointResult res;
    res.drift = l1_distance(v, u);
    res.tolerance = 10.0 * K * solver.tolerance();
    res.is_fixed_point = res.drift <= res.tolerance;
    return res;
}

}  // namespace fpflow
