#pragma once
/// Interacting-particle (mean-field) approximation of the McKean-Vlasov SDE
///     dX = D(X) b(u(X)) dt + sqrt(2 beta(u(X)) / u(X)) dW,   law(X_t) = u(t) dx,
/// with u replaced by a grid density estimate of the ensemble.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "fpflow/coefficients.hpp"
#include "fpflow/ergodic.hpp"
#include "fpflow/error.hpp"
#include "fpflow/grid.hpp"
#include "fpflow/rng.hpp"

namespace fpflow {

struct ParticleEnsemble {
    int dim = 1;
    std::vector<double> positions;  ///< N x dim, particle-major
    std::uint64_t seed = 0;
    std::uint64_t step_index = 0;  ///< counter fed to the generator
    double time = 0.0;
    std::uint64_t reflections = 0;

    std::size_t size() const noexcept { return dim > 0 ? positions.size() / static_cast<std::size_t>(dim) : 0; }
    std::span<const double> particle(std::size_t i) const { return {positions.data() + i * dim, static_cast<std::size_t>(dim)}; }
};

struct DensityEstimate {
    DensityField field;
    int bandwidth = 0;  ///< triangular smoothing half-width in cells
    std::string method = "histogram";
};

namespace detail {

inline int cell_index(double x, const GridSpec& g) {
    const int i = static_cast<int>(std::floor((x + g.half_width) / g.spacing()));
    return std::clamp(i, 0, g.cells - 1);
}

/// Particle-count histogram (counts, not normalized).
inline std::vector<double> histogram_counts(const ParticleEnsemble& ens, const GridSpec& g) {
    std::vector<double> counts(g.size(), 0.0);
    for (std::size_t p = 0; p < ens.size(); ++p) {
        const auto x = ens.particle(p);
        std::array<int, 3> idx{};
        for (int k = 0; k < g.dim; ++k) idx[k] = cell_index(x[k], g);
        counts[g.flatten(idx)] += 1.0;
    }
    return counts;
}

inline int mirror(int j, int n) {
    while (j < 0 || j >= n) j = j < 0 ? -j - 1 : 2 * n - 1 - j;
    return j;
}

/// Separable triangular smoothing in scatter form with mirrored boundaries,
/// so every source cell hands out exactly its own mass.
inline void smooth_triangular(std::vector<double>& v, const GridSpec& g, int width) {
    if (width <= 0) return;
    std::vector<double> w(2 * width + 1);
    for (int j = -width; j <= width; ++j) w[j + width] = double(width + 1 - std::abs(j)) / ((width + 1.0) * (width + 1.0));
    std::vector<double> out(v.size());
    for (int axis = 0; axis < g.dim; ++axis) {
        std::fill(out.begin(), out.end(), 0.0);
        const std::size_t s = g.stride(axis);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] == 0.0) continue;
            const auto idx = g.unflatten(i);
            const std::size_t base = i - static_cast<std::size_t>(idx[axis]) * s;
            for (int j = -width; j <= width; ++j) {
                const int t = mirror(idx[axis] + j, g.cells);
                out[base + static_cast<std::size_t>(t) * s] += w[j + width] * v[i];
            }
        }
        v.swap(out);
    }
}

/// Multilinear interpolation of cell-centred values (constant beyond the outer centres).
inline double interpolate(const DensityField& u, std::span<const double> x) {
    const GridSpec& g = u.grid;
    std::array<int, 3> base{};
    std::array<double, 3> frac{};
    for (int k = 0; k < g.dim; ++k) {
        double s = (x[k] + g.half_width) / g.spacing() - 0.5;
        s = std::clamp(s, 0.0, double(g.cells - 1));
        int i = std::min(static_cast<int>(s), g.cells - 2);
        base[k] = i;
        frac[k] = s - i;
    }
    double v = 0.0;
    for (int corner = 0; corner < (1 << g.dim); ++corner) {
        double w = 1.0;
        std::array<int, 3> idx{};
        for (int k = 0; k < g.dim; ++k) {
            const int bit = (corner >> k) & 1;
            idx[k] = base[k] + bit;
            w *= bit ? frac[k] : 1.0 - frac[k];
        }
        if (w != 0.0) v += w * u[g.flatten(idx)];
    }
    return v;
}

/// Runs f(begin, end) over [0, n) in `threads` contiguous chunks.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
    if (threads <= 1 || n < 2048) {
        f(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const std::size_t b = t * chunk, e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&f, b, e] { f(b, e); });
    }
    for (auto& th : pool) th.join();
}

/// Fixed-order sum, independent of threading.
inline double ordered_sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace detail

/// Histogram normalized to unit mass, optionally smoothed by a separable
/// triangular kernel of half-width `bandwidth` cells.
inline DensityEstimate estimate_density(const ParticleEnsemble& ens, const GridSpec& g, int bandwidth = 0) {
    if (ens.size() == 0) throw InvalidArgument("cannot estimate a density from an empty ensemble");
    if (ens.dim != g.dim) throw GridMismatch("ensemble and grid dimensions differ");
    if (bandwidth < 0 || bandwidth >= g.cells) throw InvalidArgument("bandwidth must lie in [0, cells)");
    std::vector<double> v = detail::histogram_counts(ens, g);
    detail::smooth_triangular(v, g, bandwidth);
    const double scale = 1.0 / (static_cast<double>(ens.size()) * g.cell_volume());
    for (double& x : v) x *= scale;
    DensityEstimate est;
    est.bandwidth = bandwidth;
    est.method = bandwidth > 0 ? "smoothed-histogram" : "histogram";
    est.field = normalized(DensityField(g, std::move(v)));
    return est;
}

struct EmOptions {
    /// Below this density the diffusion ratio beta(u)/u is frozen at its value at u_floor.
    double u_floor = 1e-8;
    /// Multiplies the noise; 0 gives the deterministic drift flow.
    double noise_scale = 1.0;
    int threads = 1;
};

/// sigma^2(u) = 2 beta(u)/u, frozen below u_floor.
inline double diffusion_sigma2(const CoefficientSet& cs, double u, double u_floor) {
    const double r = u > u_floor ? u : u_floor;
    return std::max(0.0, 2.0 * cs.beta(r) / r);
}

/// One Euler-Maruyama step with reflection at the box faces.
inline ParticleEnsemble em_step(ParticleEnsemble ens, const DensityEstimate& est, double dt, const CoefficientSet& cs,
                                const EmOptions& opt = {}) {
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (cs.dim() != ens.dim || est.field.grid.dim != ens.dim) throw GridMismatch("ensemble dimension mismatch");
    const GridSpec& g = est.field.grid;
    const CounterRng rng(ens.seed);
    const double L = g.half_width;
    const double sqdt = std::sqrt(dt);
    const std::size_t n = ens.size();
    const int d = ens.dim;
    std::vector<std::uint64_t> refl(n, 0);
    std::vector<char> bad(n, 0);
    detail::parallel_for(n, opt.threads, [&](std::size_t b, std::size_t e) {
        std::array<double, 3> drift{};
        for (std::size_t p = b; p < e; ++p) {
            double* x = ens.positions.data() + p * d;
            const double u = detail::interpolate(est.field, {x, static_cast<std::size_t>(d)});
            cs.drift({x, static_cast<std::size_t>(d)}, {drift.data(), static_cast<std::size_t>(d)});
            const double bu = cs.b(u);
            const double sigma = opt.noise_scale == 0.0 ? 0.0 : opt.noise_scale * std::sqrt(diffusion_sigma2(cs, u, opt.u_floor));
            for (int k = 0; k < d; ++k) {
                double y = x[k] + drift[k] * bu * dt;
                if (sigma != 0.0) y += sigma * sqdt * rng.normal(p, ens.step_index, static_cast<std::uint64_t>(k));
                if (!std::isfinite(y)) {
                    bad[p] = 1;
                    break;
                }
                while (y > L || y < -L) {
                    y = y > L ? 2 * L - y : -2 * L - y;
                    ++refl[p];
                }
                x[k] = y;
            }
        }
    });
    for (std::size_t p = 0; p < n; ++p)
        if (bad[p]) throw EvaluationError("particle " + std::to_string(p) + " left the finite range; dt too large?");
    for (auto r : refl) ens.reflections += r;
    ++ens.step_index;
    ens.time += dt;
    return ens;
}

/// Stratified inverse-CDF sampling of N particles from a cell density:
/// the k-th particle takes quantile (k + U_k)/N over the row-major cell
/// order and is placed uniformly inside the selected cell.
inline ParticleEnsemble sample_initial(const DensityField& u0, std::size_t N, std::uint64_t seed) {
    if (N == 0) throw InvalidArgument("need at least one particle");
    const GridSpec& g = u0.grid;
    std::vector<double> cdf(g.size());
    double c = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (u0[i] < 0.0) throw InvalidArgument("initial density must be nonnegative");
        c += u0[i];
        cdf[i] = c;
    }
    if (!(c > 0.0)) throw InvalidArgument("initial density has no mass");
    for (double& v : cdf) v /= c;
    const CounterRng rng(seed);
    constexpr std::uint64_t kInitStep = std::numeric_limits<std::uint64_t>::max();
    ParticleEnsemble ens;
    ens.dim = g.dim;
    ens.seed = seed;
    ens.positions.resize(N * static_cast<std::size_t>(g.dim));
    const double h = g.spacing();
    for (std::size_t p = 0; p < N; ++p) {
        const double q = (static_cast<double>(p) + rng.uniform(p, kInitStep, 0)) / static_cast<double>(N);
        std::size_t cell = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), q) - cdf.begin());
        cell = std::min(cell, g.size() - 1);
        while (u0[cell] == 0.0 && cell > 0) --cell;
        const auto idx = g.unflatten(cell);
        for (int k = 0; k < g.dim; ++k)
            ens.positions[p * g.dim + k] = -g.half_width + (idx[k] + rng.uniform(p, kInitStep, 1 + k)) * h;
    }
    return ens;
}

struct SimulateOptions {
    std::size_t particles = 10000;
    double T = 1.0;
    double dt = 1e-3;
    int refresh_every = 1;
    std::uint64_t seed = 0;
    int bandwidth = 0;
    /// Target number of records after the initial one.
    int records = 64;
    std::vector<ObservableSpec> observables;
    /// Times at which per-particle time averages (and their standard errors) are frozen.
    std::vector<double> ergodic_times;
    EmOptions em;
};

struct ParticleRecord {
    double time = 0.0;
    DensityEstimate estimate;
    std::vector<double> mean;           ///< per axis
    std::vector<double> second_moment;  ///< per axis
    std::uint64_t reflections = 0;
    /// int_0^time of the raw particle-count histogram, divided by N.
    std::vector<double> occupation;
};

struct ErgodicValue {
    double T = 0.0;
    double value = 0.0;
    /// Monte-Carlo standard error of the time average (NaN when not frozen at T).
    double stderr_ = std::numeric_limits<double>::quiet_NaN();
};

struct ParticleSummary {
    GridSpec grid;
    double dt = 0.0;
    std::size_t particles = 0;
    std::uint64_t seed = 0;
    std::vector<ParticleRecord> records;
    std::vector<ObservableSpec> observables;
    /// observable_means[o][k] = ensemble mean of g_o at step k (k = 0..K).
    std::vector<std::vector<double>> observable_means;
    /// frozen[o][j] = value and stderr at ergodic_times[j]
    std::vector<std::vector<ErgodicValue>> frozen;
    std::vector<double> ergodic_times;
    ParticleEnsemble final_ensemble;
};

/// Runs the particle system from u0 and records density estimates, moments,
/// occupation integrals and time averages of the registered observables.
inline ParticleSummary simulate(const DensityField& u0, const CoefficientSet& cs, const SimulateOptions& opt) {
    const GridSpec& g = u0.grid;
    if (cs.dim() != g.dim) throw GridMismatch("coefficient and grid dimensions differ");
    if (u0.kind != DensityKind::Probability) throw InvalidArgument("particle initial law must be a probability density");
    if (opt.refresh_every < 1) throw InvalidArgument("refresh_every must be >= 1");
    if (opt.records < 1) throw InvalidArgument("need at least one record");
    for (const auto& o : opt.observables) o.validate(g.dim);
    const int K = step_count(opt.T, opt.dt);
    const std::size_t N = opt.particles;
    const int d = g.dim;

    ParticleSummary sum;
    sum.grid = g;
    sum.dt = opt.dt;
    sum.particles = N;
    sum.seed = opt.seed;
    sum.observables = opt.observables;
    sum.ergodic_times = opt.ergodic_times;

    const int stride = std::max(1, (K + opt.records - 1) / opt.records);
    std::vector<char> record(static_cast<std::size_t>(K) + 1, 0);
    for (int k = 0; k <= K; k += stride) record[k] = 1;
    record[K] = 1;
    std::vector<long> freeze_step;
    for (double t : opt.ergodic_times) {
        const long k = std::lround(t / opt.dt);
        if (k < 1 || k > K) throw InvalidArgument("ergodic time outside (0, T]");
        freeze_step.push_back(k);
        record[static_cast<std::size_t>(k)] = 1;
    }

    ParticleEnsemble ens = sample_initial(u0, N, opt.seed);
    const std::size_t nobs = opt.observables.size();
    std::vector<std::vector<double>> per_particle(nobs, std::vector<double>(N, 0.0));
    std::vector<double> gvals(N);
    sum.observable_means.assign(nobs, {});
    sum.frozen.assign(nobs, {});
    std::vector<double> occupation(g.size(), 0.0);

    auto make_record = [&](int k) {
        ParticleRecord rec;
        rec.time = k * opt.dt;
        rec.estimate = estimate_density(ens, g, opt.bandwidth);
        rec.mean.assign(d, 0.0);
        rec.second_moment.assign(d, 0.0);
        for (std::size_t p = 0; p < N; ++p)
            for (int a = 0; a < d; ++a) {
                const double x = ens.positions[p * d + a];
                rec.mean[a] += x;
                rec.second_moment[a] += x * x;
            }
        for (int a = 0; a < d; ++a) {
            rec.mean[a] /= double(N);
            rec.second_moment[a] /= double(N);
        }
        rec.reflections = ens.reflections;
        rec.occupation = occupation;
        for (double& v : rec.occupation) v /= double(N);
        sum.records.push_back(std::move(rec));
    };
    auto freeze = [&](int k) {
        for (std::size_t j = 0; j < freeze_step.size(); ++j) {
            if (freeze_step[j] != k) continue;
            const double T = k * opt.dt;
            for (std::size_t o = 0; o < nobs; ++o) {
                double s = 0.0, s2 = 0.0;
                for (double a : per_particle[o]) {
                    s += a / T;
                    s2 += (a / T) * (a / T);
                }
                const double mean = s / double(N);
                const double var = N > 1 ? std::max(0.0, (s2 - double(N) * mean * mean) / double(N - 1)) : 0.0;
                ErgodicValue ev;
                ev.T = T;
                ev.stderr_ = std::sqrt(var / double(N));
                double acc = 0.0;
                for (int i = 0; i < k; ++i) acc += sum.observable_means[o][i];
                ev.value = acc / k;
                sum.frozen[o].push_back(ev);
            }
        }
    };

    DensityEstimate est = estimate_density(ens, g, opt.bandwidth);
    for (int k = 0;; ++k) {
        // per_particle holds steps 0..k-1 here, the left-endpoint integral over [0, t_k].
        if (k > 0) freeze(k);
        for (std::size_t o = 0; o < nobs; ++o) {
            const auto& spec = opt.observables[o];
            for (std::size_t p = 0; p < N; ++p) gvals[p] = spec(ens.particle(p));
            sum.observable_means[o].push_back(detail::ordered_sum(gvals) / double(N));
            if (k < K)
                for (std::size_t p = 0; p < N; ++p) per_particle[o][p] += opt.dt * gvals[p];
        }
        if (record[k]) make_record(k);
        if (k == K) break;
        const auto counts = detail::histogram_counts(ens, g);
        for (std::size_t i = 0; i < counts.size(); ++i) occupation[i] += opt.dt * counts[i];
        if (k > 0 && k % opt.refresh_every == 0) est = estimate_density(ens, g, opt.bandwidth);
        ens = em_step(std::move(ens), est, opt.dt, cs, opt.em);
    }
    sum.final_ensemble = std::move(ens);
    return sum;
}

/// (1/T) int_0^T E[g(X_t)] dt (left-endpoint sum over steps) for a registered observable.
inline std::vector<ErgodicValue> marginal_ergodic_average(const ParticleSummary& sum, const std::string& label,
                                                          const std::vector<double>& T_list) {
    std::size_t o = 0;
    while (o < sum.observables.size() && sum.observables[o].label != label) ++o;
    if (o == sum.observables.size()) throw InvalidArgument("observable '" + label + "' was not registered");
    const auto& series = sum.observable_means[o];
    const long K = static_cast<long>(series.size()) - 1;
    std::vector<ErgodicValue> out;
    for (double T : T_list) {
        const long k = std::lround(T / sum.dt);
        if (k < 1 || k > K) throw InvalidArgument("ergodic time outside the simulated span");
        ErgodicValue ev;
        ev.T = k * sum.dt;
        // Uniform steps: (1/T) sum dt g_i = (1/k) sum g_i, exact for constants.
        double acc = 0.0;
        for (long i = 0; i < k; ++i) acc += series[static_cast<std::size_t>(i)];
        ev.value = acc / static_cast<double>(k);
        for (const auto& f : sum.frozen[o])
            if (std::abs(f.T - ev.T) < 1e-9 * sum.dt) ev.stderr_ = f.stderr_;
        out.push_back(ev);
    }
    return out;
}

/// (1/T) int_0^T P(X_t in B) dt from the occupation integrals; cells cut by
/// the box count with their covered fraction. T must be a record time.
inline double occupation_measure(const ParticleSummary& sum, const Point& lo, const Point& hi, double T) {
    for (const auto& rec : sum.records) {
        if (std::abs(rec.time - T) > 1e-9 * sum.dt) continue;
        if (!(T > 0.0)) throw InvalidArgument("occupation measure needs T > 0");
        const Observable box = indicator_observable(sum.grid, lo, hi);
        double s = 0.0;
        for (std::size_t i = 0; i < box.values.size(); ++i) s += box.values[i] * rec.occupation[i];
        return s / rec.time;
    }
    throw InvalidArgument("occupation measure requested at a time that was not recorded");
}

}  // namespace fpflow
