#pragma once
/// Resolvent J_lambda(f) = (I + lambda A)^-1 f through the viscosity
/// approximation y_eps + lambda A_eps(y_eps) = f and continuation eps -> 0.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "fpflow/coefficients.hpp"
#include "fpflow/error.hpp"
#include "fpflow/flux_operator.hpp"
#include "fpflow/grid.hpp"

namespace fpflow {

struct SolverConfig {
    double lambda = 0.01;
    /// Upper bound for admissible lambda; small lambda is where the resolvent is compact.
    double lambda_max = 1.0;
    std::vector<double> eps_schedule{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
    /// Residual L1 tolerance; unset means 1e-10 times the box volume.
    std::optional<double> newton_tol;
    int max_newton_iters = 60;
    double damping = 0.5;
    double continuation_tol = 1e-8;
    /// |r| range on which beta' is sampled to detect interval degeneracy.
    double degeneracy_probe_range = 10.0;

    void validate() const {
        if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
        if (!(lambda_max > 0.0)) throw InvalidArgument("lambda_max must be positive");
        if (lambda > lambda_max * (1.0 + 1e-12)) throw InvalidArgument("lambda exceeds lambda_max");
        if (eps_schedule.empty()) throw InvalidArgument("eps schedule is empty");
        for (std::size_t i = 0; i < eps_schedule.size(); ++i) {
            if (!(eps_schedule[i] > 0.0)) throw InvalidArgument("eps schedule must be positive");
            if (i > 0 && !(eps_schedule[i] < eps_schedule[i - 1]))
                throw InvalidArgument("eps schedule must be strictly decreasing");
        }
        if (!(damping > 0.0 && damping < 1.0)) throw InvalidArgument("damping must lie in (0, 1)");
        if (max_newton_iters < 1) throw InvalidArgument("max_newton_iters must be >= 1");
        if (newton_tol && !(*newton_tol > 0.0)) throw InvalidArgument("newton_tol must be positive");
        if (!(continuation_tol > 0.0)) throw InvalidArgument("continuation_tol must be positive");
    }

    double tolerance_for(const GridSpec& g) const {
        return newton_tol ? *newton_tol : 1e-10 * static_cast<double>(g.size()) * g.cell_volume();
    }
};

/// One eps stage of the continuation.
struct StageDiagnostics {
    double eps = 0.0;
    int newton_iters = 0;
    double residual = 0.0;
    /// L1 distance to the previous stage solution; negative for the first stage.
    double l1_diff_prev_stage = -1.0;
    bool picard_fallback = false;
};

struct ResolventResult {
    DensityField solution;
    std::vector<StageDiagnostics> stages;
    double final_residual = 0.0;
    double final_eps = 0.0;
    bool eps_converged = false;
};

/// True when beta' vanishes on two consecutive probe points, i.e. on a set
/// of positive sample measure. Isolated zeros (beta'(0) = 0) do not count.
inline bool degenerate_on_interval(const CoefficientSet& cs, double range, int count = 2001) {
    bool prev = false;
    for (int i = 0; i < count; ++i) {
        const double r = -range + 2.0 * range * i / (count - 1);
        const bool zero = !(cs.beta_prime(r) > 1e-14);
        if (zero && prev) return true;
        prev = zero;
    }
    return false;
}

/// Reusable solver for one (coefficients, grid, config). Keeps the sparsity
/// analysis between calls. Not thread-safe; use one instance per thread.
class ResolventSolver {
public:
    ResolventSolver(const CoefficientSet& cs, const GridSpec& grid, SolverConfig cfg)
        : op_(cs, grid), cfg_(std::move(cfg)), tol_(cfg_.tolerance_for(grid)) {
        cfg_.validate();
        degenerate_ = degenerate_on_interval(cs, cfg_.degeneracy_probe_range);
    }

    const SolverConfig& config() const noexcept { return cfg_; }
    const FluxOperator& op() const noexcept { return op_; }
    double tolerance() const noexcept { return tol_; }
    bool degenerate() const noexcept { return degenerate_; }

    /// Solves y + lambda A_eps(y) = f for one eps stage in place, warm-started from y.
    StageDiagnostics solve_stage(const std::vector<double>& f, double lambda, double eps, std::vector<double>& y) {
        StageDiagnostics diag;
        diag.eps = eps;
        std::vector<double> history;
        const std::vector<double> start = y;
        try {
            diag.newton_iters = newton(f, lambda, eps, y, history, Linearization::Tangent);
        } catch (const NonConvergence&) {
            // One retry with frozen-coefficient (Picard) iterations.
            y = start;
            history.clear();
            diag.picard_fallback = true;
            diag.newton_iters = newton(f, lambda, eps, y, history, Linearization::Secant, 20 * cfg_.max_newton_iters);
        }
        diag.residual = history.empty() ? 0.0 : history.back();
        return diag;
    }

    ResolventResult resolve(const DensityField& f) { return resolve(f, cfg_.lambda); }

    ResolventResult resolve(const DensityField& f, double lambda) {
        require_same_grid(f.grid, op_.grid());
        check_lambda(lambda);
        for (double v : f.values)
            if (!std::isfinite(v)) throw InvalidArgument("resolvent input is not finite");
        ResolventResult res;
        std::vector<double> y = f.values, prev;
        std::vector<double> stages = cfg_.eps_schedule;
        const double hd = f.grid.cell_volume();
        bool cauchy = false;
        for (std::size_t s = 0; s < stages.size(); ++s) {
            StageDiagnostics d;
            try {
                d = solve_stage(f.values, lambda, stages[s], y);
            } catch (NonConvergence& e) {
                throw NonConvergence("resolvent stage " + std::to_string(s) + " (eps=" + detail::fmt_scalar(stages[s]) +
                                         ") failed: " + e.what(),
                                     std::move(e.last_iterate), std::move(e.residual_history), static_cast<int>(s));
            }
            if (!prev.empty()) {
                double diff = 0.0;
                for (std::size_t i = 0; i < y.size(); ++i) diff += std::abs(y[i] - prev[i]);
                d.l1_diff_prev_stage = diff * hd;
                if (d.l1_diff_prev_stage <= cfg_.continuation_tol) cauchy = true;
            }
            res.stages.push_back(d);
            prev = y;
            if (cauchy) break;
        }
        res.final_eps = res.stages.back().eps;
        res.eps_converged = cauchy;
        if (!degenerate_) {
            // eps = 0 is well posed here: the Jacobian I + lambda dA is an M-matrix for any eps >= 0.
            StageDiagnostics d;
            try {
                d = solve_stage(f.values, lambda, 0.0, y);
            } catch (NonConvergence& e) {
                throw NonConvergence(std::string("resolvent final eps=0 stage failed: ") + e.what(),
                                     std::move(e.last_iterate), std::move(e.residual_history),
                                     static_cast<int>(res.stages.size()));
            }
            double diff = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) diff += std::abs(y[i] - prev[i]);
            d.l1_diff_prev_stage = diff * hd;
            res.stages.push_back(d);
            res.final_eps = 0.0;
            res.eps_converged = true;
        }
        res.final_residual = res.stages.back().residual;
        res.solution = DensityField(f.grid, std::move(y));
        return res;
    }

    /// L1 norm of y + lambda A_eps(y) - f.
    double residual_norm(const std::vector<double>& f, double lambda, double eps, const std::vector<double>& y,
                         std::vector<double>& r) const {
        r.resize(y.size());
        op_.apply(y, eps, r);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            r[i] = y[i] + lambda * r[i] - f[i];
            s += std::abs(r[i]);
        }
        return s * op_.grid().cell_volume();
    }

private:
    void check_lambda(double lambda) const {
        if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
        if (lambda > cfg_.lambda_max * (1.0 + 1e-12)) throw InvalidArgument("lambda exceeds lambda_max");
    }

    int newton(const std::vector<double>& f, double lambda, double eps, std::vector<double>& y,
               std::vector<double>& history, Linearization mode, int max_iters = -1) {
        if (max_iters < 0) max_iters = cfg_.max_newton_iters;
        const std::size_t n = y.size();
        std::vector<double> r, r_try, y_try(n);
        double rn = residual_norm(f, lambda, eps, y, r);
        history.push_back(rn);
        Eigen::VectorXd rhs(n), delta(n);
        std::vector<double> yk;
        int it = 0;
        bool polished = false;
        for (;;) {
            if (rn <= tol_) {
                // One extra full step drives a quadratically convergent iterate to roundoff.
                if (polished || rn <= 1e-3 * tol_ || mode == Linearization::Secant) break;
                polished = true;
            }
            if (it >= max_iters) throw NonConvergence("iteration limit reached", y, history);
            if (!std::isfinite(rn)) throw NonConvergence("residual is not finite", y, history);
            if (history.size() > 10 && rn > (1.0 - 1e-3) * history[history.size() - 11])
                throw NonConvergence("residual stagnated over 10 iterations", y, history);
            ++it;
            assemble(y, lambda, eps, mode);
            if (mode == Linearization::Tangent) {
                for (std::size_t i = 0; i < n; ++i) rhs[i] = -r[i];
            } else {
                for (std::size_t i = 0; i < n; ++i) rhs[i] = f[i];
            }
            factorize();
            delta = lu_.solve(rhs);
            if (lu_.info() != Eigen::Success) throw NonConvergence("linear solve failed", y, history);
            if (mode == Linearization::Secant) {
                for (std::size_t i = 0; i < n; ++i) y[i] = delta[i];
                rn = residual_norm(f, lambda, eps, y, r);
                history.push_back(rn);
                continue;
            }
            double t = 1.0, rn_try = 0.0;
            for (;;) {
                for (std::size_t i = 0; i < n; ++i) y_try[i] = y[i] + t * delta[i];
                rn_try = residual_norm(f, lambda, eps, y_try, r_try);
                if (rn_try <= (1.0 - 1e-4 * t) * rn || t < 1e-6) break;
                t *= cfg_.damping;
            }
            y.swap(y_try);
            r.swap(r_try);
            rn = rn_try;
            history.push_back(rn);
        }
        return it;
    }

    void assemble(const std::vector<double>& y, double lambda, double eps, Linearization mode) {
        const std::size_t n = y.size();
        triplets_.clear();
        triplets_.reserve(n + 4 * op_.faces().size());
        for (std::size_t i = 0; i < n; ++i) triplets_.emplace_back(i, i, 1.0);
        op_.linearize(y, eps, mode, lambda, triplets_);
        jac_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        jac_.setFromTriplets(triplets_.begin(), triplets_.end());
        jac_.makeCompressed();
    }

    void factorize() {
        if (!analyzed_) {
            lu_.analyzePattern(jac_);
            analyzed_ = true;
        }
        lu_.factorize(jac_);
    }

    FluxOperator op_;
    SolverConfig cfg_;
    double tol_;
    bool degenerate_ = false;
    std::vector<Eigen::Triplet<double>> triplets_;
    Eigen::SparseMatrix<double> jac_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
    bool analyzed_ = false;
};

/// y solving y + lambda A_eps(y) = f (lambda taken from cfg).
inline DensityField solve_regularized(const DensityField& f, const CoefficientSet& cs, const GridSpec& grid,
                                      const SolverConfig& cfg, double eps) {
    if (!(eps > 0.0)) throw InvalidArgument("solve_regularized needs eps > 0");
    require_same_grid(f.grid, grid);
    ResolventSolver solver(cs, grid, cfg);
    std::vector<double> y = f.values;
    solver.solve_stage(f.values, cfg.lambda, eps, y);
    return DensityField(grid, std::move(y));
}

/// J_lambda(f) via eps-continuation.
inline ResolventResult resolvent(const DensityField& f, const CoefficientSet& cs, const GridSpec& grid,
                                 const SolverConfig& cfg) {
    require_same_grid(f.grid, grid);
    ResolventSolver solver(cs, grid, cfg);
    return solver.resolve(f);
}

}  // namespace fpflow
