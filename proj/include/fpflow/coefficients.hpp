#pragma once
/// Coefficient families (beta, b, Phi with D = -grad Phi) and numerical
/// audits of the structural hypotheses the flow relies on.
///
/// All audits are sampling based: an inequality that must hold on all of R
/// or R^d is evaluated on a deterministic sample set and the worst margin is
/// reported. A negative margin always means failure.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fpflow/error.hpp"
#include "fpflow/rng.hpp"

namespace fpflow {

using ScalarFn = std::function<double(double)>;
using FieldFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;
using Point = std::array<double, 3>;

inline constexpr double kDerivativeStep = 1e-5;

/// Everything needed to build a CoefficientSet. Derivative slots may be left
/// empty; they then default to central finite differences.
struct CoefficientSpec {
    std::string id = "custom";
    int dim = 1;
    ScalarFn beta;
    ScalarFn beta_prime;
    ScalarFn b;
    ScalarFn b_prime;
    FieldFn phi;
    GradientFn grad_phi;
    FieldFn laplacian_phi;
    double mu1 = 1.0;
    double mu2 = 1.0;
    double nu = 1.0;
    double b0 = 1.0;
    double m = 2.0;
    std::optional<double> alpha;
    /// kappa with beta'(r) >= kappa for every r. The flux treats kappa*r as
    /// the linear part of beta. Zero is always safe.
    double beta_linear_part = 0.0;
    /// Set when b is the constant function; enables exponential fitting of the drift.
    std::optional<double> b_constant;
};

/// Immutable coefficient triple (beta, b, Phi) plus the structural constants.
/// The drift is always derived as D = -grad Phi.
class CoefficientSet {
public:
    explicit CoefficientSet(CoefficientSpec spec) : s_(std::make_shared<const CoefficientSpec>(complete(std::move(spec)))) {}

    const std::string& id() const noexcept { return s_->id; }
    int dim() const noexcept { return s_->dim; }
    double mu1() const noexcept { return s_->mu1; }
    double mu2() const noexcept { return s_->mu2; }
    double nu() const noexcept { return s_->nu; }
    double b0() const noexcept { return s_->b0; }
    double m() const noexcept { return s_->m; }
    std::optional<double> alpha() const noexcept { return s_->alpha; }
    double beta_linear_part() const noexcept { return s_->beta_linear_part; }
    std::optional<double> b_constant() const noexcept { return s_->b_constant; }

    double beta(double r) const { return s_->beta(r); }
    double beta_prime(double r) const { return s_->beta_prime(r); }
    double b(double r) const { return s_->b(r); }
    double b_prime(double r) const { return s_->b_prime(r); }
    double phi(std::span<const double> x) const { return s_->phi(x); }
    void grad_phi(std::span<const double> x, std::span<double> g) const { s_->grad_phi(x, g); }
    double laplacian_phi(std::span<const double> x) const { return s_->laplacian_phi(x); }

    /// D(x) = -grad Phi(x).
    void drift(std::span<const double> x, std::span<double> out) const {
        s_->grad_phi(x, out);
        for (auto& v : out) v = -v;
    }

    const CoefficientSpec& spec() const noexcept { return *s_; }

private:
    static CoefficientSpec complete(CoefficientSpec s) {
        if (s.dim < 1 || s.dim > 3) throw InvalidArgument("coefficient dimension must be 1, 2 or 3");
        if (!s.beta || !s.b || !s.phi) throw InvalidArgument("beta, b and phi are required");
        if (s.beta(0.0) != 0.0) throw InvalidArgument("beta(0) must be exactly 0");
        if (!(s.mu1 > 0.0) || !(s.mu2 > 0.0)) throw InvalidArgument("mu1 and mu2 must be positive");
        if (!(s.b0 > 0.0)) throw InvalidArgument("b0 must be positive");
        if (!(s.beta_linear_part >= 0.0)) throw InvalidArgument("linear part of beta must be >= 0");
        if (s.alpha && !(*s.alpha > 0.0)) throw InvalidArgument("alpha must be positive");
        if (!s.beta_prime) {
            s.beta_prime = [f = s.beta](double r) {
                return (f(r + kDerivativeStep) - f(r - kDerivativeStep)) / (2 * kDerivativeStep);
            };
        }
        if (!s.b_prime) {
            s.b_prime = [f = s.b](double r) {
                return (f(r + kDerivativeStep) - f(r - kDerivativeStep)) / (2 * kDerivativeStep);
            };
        }
        if (!s.grad_phi) {
            s.grad_phi = [f = s.phi](std::span<const double> x, std::span<double> g) {
                std::array<double, 3> y{};
                std::copy(x.begin(), x.end(), y.begin());
                for (std::size_t k = 0; k < x.size(); ++k) {
                    y[k] = x[k] + kDerivativeStep;
                    const double fp = f({y.data(), x.size()});
                    y[k] = x[k] - kDerivativeStep;
                    const double fm = f({y.data(), x.size()});
                    y[k] = x[k];
                    g[k] = (fp - fm) / (2 * kDerivativeStep);
                }
            };
        }
        if (!s.laplacian_phi) {
            s.laplacian_phi = [f = s.phi](std::span<const double> x) {
                std::array<double, 3> y{};
                std::copy(x.begin(), x.end(), y.begin());
                const double f0 = f(x);
                double lap = 0.0;
                for (std::size_t k = 0; k < x.size(); ++k) {
                    y[k] = x[k] + kDerivativeStep;
                    const double fp = f({y.data(), x.size()});
                    y[k] = x[k] - kDerivativeStep;
                    const double fm = f({y.data(), x.size()});
                    y[k] = x[k];
                    lap += (fp - 2 * f0 + fm) / (kDerivativeStep * kDerivativeStep);
                }
                return lap;
            };
        }
        return s;
    }

    std::shared_ptr<const CoefficientSpec> s_;
};

// ---------------------------------------------------------------------------
// Monotone cubic interpolation for tabulated beta.

/// Piecewise cubic Hermite interpolant whose node slopes are limited
/// (Fritsch-Carlson) so monotone data stays monotone. Linear extrapolation
/// outside the table.
class MonotoneCubic {
public:
    MonotoneCubic() = default;
    MonotoneCubic(std::vector<double> x, std::vector<double> y, std::vector<double> slopes = {})
        : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n) throw InvalidArgument("monotone cubic needs >= 2 matching nodes");
        for (std::size_t i = 1; i < n; ++i)
            if (!(x_[i] > x_[i - 1])) throw InvalidArgument("table abscissae must be strictly increasing");
        std::vector<double> delta(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
        if (slopes.size() == n) {
            m_ = std::move(slopes);
        } else {
            m_.assign(n, 0.0);
            m_[0] = delta[0];
            m_[n - 1] = delta[n - 2];
            for (std::size_t i = 1; i + 1 < n; ++i)
                m_[i] = (delta[i - 1] * delta[i] <= 0.0) ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
        }
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (delta[i] == 0.0) {
                m_[i] = m_[i + 1] = 0.0;
                continue;
            }
            if (m_[i] * delta[i] < 0.0) m_[i] = 0.0;
            if (m_[i + 1] * delta[i] < 0.0) m_[i + 1] = 0.0;
            const double a = m_[i] / delta[i];
            const double b = m_[i + 1] / delta[i];
            const double s = a * a + b * b;
            if (s > 9.0) {
                const double t = 3.0 / std::sqrt(s);
                m_[i] = t * a * delta[i];
                m_[i + 1] = t * b * delta[i];
            }
        }
    }

    double operator()(double t) const { return eval(t).first; }
    double derivative(double t) const { return eval(t).second; }

private:
    std::pair<double, double> eval(double t) const {
        if (t <= x_.front()) return {y_.front() + m_.front() * (t - x_.front()), m_.front()};
        if (t >= x_.back()) return {y_.back() + m_.back() * (t - x_.back()), m_.back()};
        const auto it = std::upper_bound(x_.begin(), x_.end(), t);
        const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
        const double hx = x_[i + 1] - x_[i];
        const double s = (t - x_[i]) / hx;
        const double s2 = s * s, s3 = s2 * s;
        const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
        const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
        const double v = h00 * y_[i] + h10 * hx * m_[i] + h01 * y_[i + 1] + h11 * hx * m_[i + 1];
        const double d00 = (6 * s2 - 6 * s) / hx, d10 = 3 * s2 - 4 * s + 1;
        const double d01 = (-6 * s2 + 6 * s) / hx, d11 = 3 * s2 - 2 * s;
        const double dv = d00 * y_[i] + d10 * m_[i] + d01 * y_[i + 1] + d11 * m_[i + 1];
        return {v, dv};
    }

    std::vector<double> x_, y_, m_;
};

// ---------------------------------------------------------------------------
// Builtin families. Parameters come in as a name -> value map so config
// files can pass them straight through.

using FamilyParams = std::map<std::string, double>;

namespace detail {

inline double param(const FamilyParams& p, const std::string& key, double fallback) {
    const auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

inline double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

/// Phi(x) = 1 + k|x|^2/2, so D(x) = -k x.
inline void set_harmonic_potential(CoefficientSpec& s, double k) {
    s.phi = [k](std::span<const double> x) { return 1.0 + 0.5 * k * norm2(x); };
    s.grad_phi = [k](std::span<const double> x, std::span<double> g) {
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = k * x[i];
    };
    s.laplacian_phi = [k](std::span<const double> x) { return k * static_cast<double>(x.size()); };
}

inline void set_constant_b(CoefficientSpec& s, double c) {
    s.b = [c](double) { return c; };
    s.b_prime = [](double) { return 0.0; };
    s.b0 = c;
    s.b_constant = c;
}

}  // namespace detail

/// beta(r) = r, b = const, Phi = 1 + k|x|^2/2 (Ornstein-Uhlenbeck drift).
inline CoefficientSet make_linear_ou(int dim, const FamilyParams& p = {}) {
    CoefficientSpec s;
    s.id = "linear-ou";
    s.dim = dim;
    s.beta = [](double r) { return r; };
    s.beta_prime = [](double) { return 1.0; };
    s.mu1 = s.mu2 = 1.0;
    s.nu = 1.0;
    s.m = detail::param(p, "m", 2.0);
    s.alpha = detail::param(p, "alpha", 1.0);
    s.beta_linear_part = 1.0;
    detail::set_constant_b(s, detail::param(p, "b", 1.0));
    detail::set_harmonic_potential(s, detail::param(p, "phi_scale", 1.0));
    return CoefficientSet(std::move(s));
}

/// beta(r) = r|r|^(p-1) (degenerate at 0), b = const, harmonic Phi.
/// The linear growth bound mu2 only holds on |r| <= mu2^(1/(p-1)); it is
/// a parameter so audits can be run on the density range that matters.
inline CoefficientSet make_porous_medium(int dim, const FamilyParams& p = {}) {
    const double q = detail::param(p, "exponent", 2.0);
    if (!(q > 1.0)) throw InvalidArgument("porous-medium exponent must exceed 1");
    CoefficientSpec s;
    s.id = "porous-medium";
    s.dim = dim;
    s.beta = [q](double r) { return r * std::pow(std::abs(r), q - 1.0); };
    s.beta_prime = [q](double r) { return q * std::pow(std::abs(r), q - 1.0); };
    s.mu1 = 1.0;
    s.mu2 = detail::param(p, "mu2", 4.0);
    s.nu = q;
    s.m = detail::param(p, "m", 2.0);
    if (p.count("alpha")) s.alpha = p.at("alpha");
    detail::set_constant_b(s, detail::param(p, "b", 1.0));
    detail::set_harmonic_potential(s, detail::param(p, "phi_scale", 1.0));
    return CoefficientSet(std::move(s));
}

/// Radius where the inner logarithmic branch of the example potential ends.
inline double paper_phi_delta(int d) {
    return std::exp(-(d + 2.0) / (2.0 * d));
}

/// Example potential Phi = |x|^2 log|x| + mu inside |x| <= delta and a
/// linear-growth outer branch mu + delta^2 log(delta) + eta (|x| - delta).
/// The outer branch is a stand-in: only continuity at delta is imposed.
/// beta is the piecewise power example mu1 r|r|^(p-1) for |r| <= r0 and the
/// continuous linear continuation with slope mu2 beyond r0.
inline CoefficientSet make_paper_phi(int dim, const FamilyParams& p = {}) {
    const double power = detail::param(p, "power", 3.0);
    const double r0 = detail::param(p, "r0", 1.0);
    const double mu1 = detail::param(p, "mu1", 1.0);
    const double mu2 = detail::param(p, "mu2", 1.0);
    const double mu = detail::param(p, "mu", 2.0);
    const double eta = detail::param(p, "eta", 10.0);
    if (!(power >= 1.0) || !(r0 > 0.0)) throw InvalidArgument("paper-phi needs power >= 1 and r0 > 0");
    const double delta = paper_phi_delta(dim);
    const double dim_d = dim;

    CoefficientSpec s;
    s.id = "paper-phi";
    s.dim = dim;
    const double inner_at_r0 = mu1 * std::pow(r0, power);
    s.beta = [=](double r) {
        const double a = std::abs(r);
        const double v = a <= r0 ? mu1 * std::pow(a, power) : inner_at_r0 + mu2 * (a - r0);
        return std::copysign(v, r);
    };
    s.beta_prime = [=](double r) {
        const double a = std::abs(r);
        return a <= r0 ? mu1 * power * std::pow(a, power - 1.0) : mu2;
    };
    s.mu1 = mu1;
    s.mu2 = mu2;
    s.nu = power;
    s.m = detail::param(p, "m", dim + 1.0);  // linear growth needs m > d
    if (p.count("alpha")) s.alpha = p.at("alpha");
    detail::set_constant_b(s, detail::param(p, "b", 1.0));

    const double outer_base = mu + delta * delta * std::log(delta);
    s.phi = [=](std::span<const double> x) {
        const double r = std::sqrt(detail::norm2(x));
        if (r <= delta) return r > 0.0 ? r * r * std::log(r) + mu : mu;
        return outer_base + eta * (r - delta);
    };
    s.grad_phi = [=](std::span<const double> x, std::span<double> g) {
        const double r = std::sqrt(detail::norm2(x));
        double radial_over_r = 0.0;
        if (r > 0.0) radial_over_r = r <= delta ? 2.0 * std::log(r) + 1.0 : eta / r;
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = radial_over_r * x[i];
    };
    s.laplacian_phi = [=](std::span<const double> x) {
        const double r = std::sqrt(detail::norm2(x));
        if (r <= delta) {
            if (r == 0.0) return -std::numeric_limits<double>::infinity();
            return 2.0 * dim_d * std::log(r) + dim_d + 2.0;
        }
        return eta * (dim_d - 1.0) / r;
    };
    return CoefficientSet(std::move(s));
}

/// One row of a tabulated beta.
struct BetaTableRow {
    double r, beta, beta_prime;
};

/// beta from a sampled table (monotone cubic), b = const, harmonic Phi.
/// The table must contain r = 0 with beta = 0.
inline CoefficientSet make_custom_table(int dim, const std::vector<BetaTableRow>& rows, const FamilyParams& p = {}) {
    std::vector<double> r, v, dv;
    for (const auto& row : rows) {
        r.push_back(row.r);
        v.push_back(row.beta);
        dv.push_back(row.beta_prime);
    }
    auto interp = std::make_shared<const MonotoneCubic>(r, v, dv);
    CoefficientSpec s;
    s.id = "custom-table";
    s.dim = dim;
    s.beta = [interp](double t) { return (*interp)(t); };
    s.beta_prime = [interp](double t) { return interp->derivative(t); };
    s.mu1 = detail::param(p, "mu1", 1.0);
    s.mu2 = detail::param(p, "mu2", 1.0);
    s.nu = detail::param(p, "nu", 1.0);
    s.m = detail::param(p, "m", 2.0);
    if (p.count("alpha")) s.alpha = p.at("alpha");
    s.beta_linear_part = detail::param(p, "beta_linear_part", 0.0);
    detail::set_constant_b(s, detail::param(p, "b", 1.0));
    detail::set_harmonic_potential(s, detail::param(p, "phi_scale", 1.0));
    return CoefficientSet(std::move(s));
}

/// Builtin family by id. "custom-table" needs rows, see make_custom_table.
/// The claimed constants b0, mu1, mu2, nu and m may be overridden by
/// parameters of the same name; the functions themselves are unchanged.
inline CoefficientSet make_family(const std::string& id, int dim, const FamilyParams& p = {},
                                  const std::vector<BetaTableRow>& table = {}) {
    auto build = [&]() {
        if (id == "linear-ou") return make_linear_ou(dim, p);
        if (id == "porous-medium") return make_porous_medium(dim, p);
        if (id == "paper-phi") return make_paper_phi(dim, p);
        if (id == "custom-table") {
            if (table.empty()) throw InvalidArgument("custom-table family needs a beta table");
            return make_custom_table(dim, table, p);
        }
        throw InvalidArgument("unknown coefficient family '" + id + "'");
    };
    CoefficientSet cs = build();
    if (!p.count("b0") && !p.count("mu1") && !p.count("mu2") && !p.count("nu") && !p.count("m")) return cs;
    CoefficientSpec s = cs.spec();
    s.b0 = detail::param(p, "b0", s.b0);
    s.mu1 = detail::param(p, "mu1", s.mu1);
    s.mu2 = detail::param(p, "mu2", s.mu2);
    s.nu = detail::param(p, "nu", s.nu);
    s.m = detail::param(p, "m", s.m);
    return CoefficientSet(std::move(s));
}

// ---------------------------------------------------------------------------
// Hypothesis audits.

/// Outcome of one sampled inequality. margin >= 0 means satisfied.
struct InequalityCheck {
    std::string name;
    double worst_margin = std::numeric_limits<double>::infinity();
    std::string worst_sample;
    bool passed = true;
    bool heuristic = false;
};

struct HypothesisReport {
    std::string hypothesis;
    bool passed = true;
    std::vector<InequalityCheck> checks;
    std::string samples;
    std::vector<std::string> notes;

    void add(InequalityCheck c) {
        passed = passed && c.passed;
        checks.push_back(std::move(c));
    }
    const InequalityCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

namespace detail {

inline std::string fmt_point(std::span<const double> x) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
    os << ')';
    return os.str();
}

inline std::string fmt_scalar(double r) {
    std::ostringstream os;
    os.precision(17);
    os << r;
    return os.str();
}

inline double checked(double v, const std::string& what, const std::string& where) {
    if (!std::isfinite(v)) throw EvaluationError(what + " is not finite at " + where);
    return v;
}

inline void track(InequalityCheck& c, double margin, const std::string& where) {
    if (margin < c.worst_margin) {
        c.worst_margin = margin;
        c.worst_sample = where;
    }
}

}  // namespace detail

/// Uniform grid of count points on [-r_max, r_max] followed by `random`
/// seeded uniform draws on the same interval.
inline std::vector<double> default_r_samples(double r_max, int count = 401, int random = 0, std::uint64_t seed = 0) {
    if (count < 2 || !(r_max > 0.0)) throw InvalidArgument("need r_max > 0 and count >= 2");
    std::vector<double> r(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) r[i] = -r_max + 2.0 * r_max * i / (count - 1);
    SplitMix rng(seed);
    for (int i = 0; i < random; ++i) r.push_back(rng.uniform(-r_max, r_max));
    return r;
}

/// Tensor grid of per_axis^dim points on [-radius, radius]^dim plus seeded random draws.
inline std::vector<Point> default_x_samples(int dim, double radius, int per_axis = 21, int random = 0,
                                            std::uint64_t seed = 0) {
    if (per_axis < 2 || !(radius > 0.0)) throw InvalidArgument("need radius > 0 and per_axis >= 2");
    std::vector<Point> pts;
    const int total = static_cast<int>(std::pow(per_axis, dim));
    for (int flat = 0; flat < total; ++flat) {
        Point p{};
        int rem = flat;
        for (int k = dim - 1; k >= 0; --k) {
            p[k] = -radius + 2.0 * radius * (rem % per_axis) / (per_axis - 1);
            rem /= per_axis;
        }
        pts.push_back(p);
    }
    SplitMix rng(seed);
    for (int i = 0; i < random; ++i) {
        Point p{};
        for (int k = 0; k < dim; ++k) p[k] = rng.uniform(-radius, radius);
        pts.push_back(p);
    }
    return pts;
}

/// Growth bounds mu1 min{|r|^nu, |r|} <= |beta(r)| <= mu2 |r|, strict
/// monotonicity away from 0, the exponent condition nu > (d-1)/d, and the
/// declared linear part kappa <= beta'.
inline HypothesisReport check_h1(const CoefficientSet& cs, std::span<const double> r_samples) {
    if (r_samples.empty()) throw InvalidArgument("check_h1 needs at least one sample");
    HypothesisReport rep;
    rep.hypothesis = "H1";
    InequalityCheck lower{"beta_lower_bound"}, upper{"beta_upper_bound"}, mono{"beta_prime_positive"},
        zero{"beta_zero_at_origin"}, linear{"beta_prime_above_linear_part"};
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double r : r_samples) {
        if (!std::isfinite(r)) throw InvalidArgument("check_h1 samples must be finite");
        lo = std::min(lo, r);
        hi = std::max(hi, r);
        const std::string where = "r=" + detail::fmt_scalar(r);
        const double br = detail::checked(cs.beta(r), "beta", where);
        const double a = std::abs(r);
        detail::track(lower, std::abs(br) - cs.mu1() * std::min(std::pow(a, cs.nu()), a), where);
        detail::track(upper, cs.mu2() * a - std::abs(br), where);
        if (r != 0.0) {
            const double bp = detail::checked(cs.beta_prime(r), "beta_prime", where);
            detail::track(mono, bp, where);
            detail::track(linear, bp - cs.beta_linear_part(), where);
        } else {
            detail::track(zero, br == 0.0 ? 0.0 : -std::abs(br), where);
        }
    }
    lower.passed = lower.worst_margin >= 0.0;
    upper.passed = upper.worst_margin >= 0.0;
    mono.passed = mono.worst_margin > 0.0;
    zero.passed = zero.worst_margin >= 0.0;
    // Finite differences make beta' noisy at the 1e-9 level.
    linear.passed = linear.worst_margin >= -1e-8;
    InequalityCheck nu_check{"nu_exponent"};
    const double d = cs.dim();
    nu_check.worst_margin = cs.nu() - (d - 1.0) / d;
    nu_check.worst_sample = "nu=" + detail::fmt_scalar(cs.nu()) + ",d=" + std::to_string(cs.dim());
    nu_check.passed = nu_check.worst_margin > 0.0;
    rep.add(lower);
    rep.add(upper);
    rep.add(mono);
    rep.add(zero);
    rep.add(linear);
    rep.add(nu_check);
    rep.samples = std::to_string(r_samples.size()) + " scalar samples in [" + detail::fmt_scalar(lo) + ", " +
                  detail::fmt_scalar(hi) + "]";
    return rep;
}

struct H2Options {
    /// Phi on the sphere of radius quad_radius must reach this value (coercivity).
    double phi_threshold = 10.0;
    /// Number of geometric shells used for the Phi^-m decay fit.
    int shells = 10;
};

namespace detail {

/// Gauss-Legendre nodes/weights on [-1, 1] via Newton on P_n.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
}

/// Tensor-product quadrature of f over the shell r0 <= |x| <= r1 in polar
/// coordinates (Gauss radial x angular).
template <class F>
double shell_integral(int dim, double r0, double r1, F&& f) {
    std::vector<double> gx, gw;
    gauss_legendre(16, gx, gw);
    double total = 0.0;
    Point x{};
    for (std::size_t i = 0; i < gx.size(); ++i) {
        const double r = 0.5 * (r0 + r1) + 0.5 * (r1 - r0) * gx[i];
        const double wr = 0.5 * (r1 - r0) * gw[i];
        if (dim == 1) {
            x[0] = r;
            double s = f(std::span<const double>(x.data(), 1));
            x[0] = -r;
            s += f(std::span<const double>(x.data(), 1));
            total += wr * s;
        } else if (dim == 2) {
            const int nt = 64;
            double s = 0.0;
            for (int j = 0; j < nt; ++j) {
                const double th = 2.0 * std::numbers::pi * j / nt;
                x[0] = r * std::cos(th);
                x[1] = r * std::sin(th);
                s += f(std::span<const double>(x.data(), 2));
            }
            total += wr * r * s * 2.0 * std::numbers::pi / nt;
        } else {
            const int np = 32;
            double s = 0.0;
            for (std::size_t a = 0; a < gx.size(); ++a) {
                const double ct = gx[a], st = std::sqrt(1.0 - ct * ct);
                for (int j = 0; j < np; ++j) {
                    const double ph = 2.0 * std::numbers::pi * j / np;
                    x[0] = r * st * std::cos(ph);
                    x[1] = r * st * std::sin(ph);
                    x[2] = r * ct;
                    s += gw[a] * f(std::span<const double>(x.data(), 3));
                }
            }
            total += wr * r * r * s * 2.0 * std::numbers::pi / np;
        }
    }
    return total;
}

inline double least_squares_slope(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double den = n * sxx - sx * sx;
    return den == 0.0 ? 0.0 : (n * sxy - sx * sy) / den;
}

}  // namespace detail

/// Phi >= 1, coercivity, the sign condition mu2 Lap Phi - b0 |grad Phi|^2 <= 0
/// on x_samples, and a heuristic integrability test for Phi^-m on the ball
/// of radius quad_radius (decay fit over geometric shells).
inline HypothesisReport check_h2(const CoefficientSet& cs, std::span<const Point> x_samples, double quad_radius,
                                 const H2Options& opt = {}) {
    if (!(quad_radius > 0.0)) throw InvalidArgument("quad_radius must be positive");
    if (opt.shells < 4) throw InvalidArgument("need at least 4 quadrature shells");
    const int d = cs.dim();
    HypothesisReport rep;
    rep.hypothesis = "H2";
    InequalityCheck lower{"phi_at_least_one"}, sign{"sign_condition"}, coercive{"phi_coercive"},
        integrable{"phi_power_integrable"};
    std::array<double, 3> g{};
    for (const auto& p : x_samples) {
        std::span<const double> x(p.data(), d);
        const std::string where = "x=" + detail::fmt_point(x);
        const double ph = detail::checked(cs.phi(x), "phi", where);
        detail::track(lower, ph - 1.0, where);
        cs.grad_phi(x, {g.data(), static_cast<std::size_t>(d)});
        double g2 = 0.0;
        for (int k = 0; k < d; ++k) g2 += g[k] * g[k];
        const double lap = cs.laplacian_phi(x);
        if (std::isnan(lap) || std::isnan(g2)) throw EvaluationError("Phi derivatives are NaN at " + where);
        detail::track(sign, -(cs.mu2() * lap - cs.b0() * g2), where);
    }
    lower.passed = lower.worst_margin >= 0.0;
    sign.passed = sign.worst_margin >= 0.0;

    // Coercivity surrogate: Phi on the far sphere along axes and diagonals.
    {
        std::vector<Point> dirs;
        for (int k = 0; k < d; ++k)
            for (double s : {-1.0, 1.0}) {
                Point e{};
                e[k] = s;
                dirs.push_back(e);
            }
        for (int mask = 0; mask < (1 << d); ++mask) {
            Point e{};
            for (int k = 0; k < d; ++k) e[k] = ((mask >> k) & 1 ? -1.0 : 1.0) / std::sqrt(double(d));
            dirs.push_back(e);
        }
        for (auto e : dirs) {
            for (int k = 0; k < d; ++k) e[k] *= quad_radius;
            std::span<const double> x(e.data(), d);
            const std::string where = "x=" + detail::fmt_point(x);
            detail::track(coercive, detail::checked(cs.phi(x), "phi", where) - opt.phi_threshold, where);
        }
        coercive.passed = coercive.worst_margin >= 0.0;
    }

    // Phi^-m on nested shells R_k = quad_radius 2^(k-K).
    {
        const int K = opt.shells;
        auto integrand = [&](std::span<const double> x) { return std::pow(cs.phi(x), -cs.m()); };
        std::vector<double> radii(K + 1), inc(K);
        for (int k = 0; k <= K; ++k) radii[k] = quad_radius * std::ldexp(1.0, k - K);
        double partial = detail::shell_integral(d, 0.0, radii[0], integrand);
        for (int k = 0; k < K; ++k) {
            inc[k] = detail::shell_integral(d, radii[k], radii[k + 1], integrand);
            partial += inc[k];
        }
        if (!std::isfinite(partial)) throw EvaluationError("Phi^-m quadrature is not finite");
        std::vector<double> lx, ly;
        for (int k = K / 2; k < K; ++k) {
            if (inc[k] <= 0.0) continue;
            lx.push_back(std::log(radii[k + 1]));
            ly.push_back(std::log(inc[k]));
        }
        const double slope = lx.size() >= 2 ? detail::least_squares_slope(lx, ly) : 0.0;
        integrable.heuristic = true;
        integrable.worst_margin = -slope;
        integrable.worst_sample = "partial_integral=" + detail::fmt_scalar(partial) +
                                  ",shell_decay_slope=" + detail::fmt_scalar(slope);
        integrable.passed = slope < 0.0;
        rep.notes.push_back("Phi^-m integrability decided by a decay-rate fit over geometric shells (heuristic)");
        rep.notes.push_back("div D in L^2 + L^inf is not checked");
    }
    rep.add(lower);
    rep.add(sign);
    rep.add(coercive);
    rep.add(integrable);
    rep.samples = std::to_string(x_samples.size()) + " points, quad_radius=" + detail::fmt_scalar(quad_radius);
    return rep;
}

/// b >= b0 on [0, r_max] and b bounded by b_upper.
inline HypothesisReport check_h3(const CoefficientSet& cs, double r_max = 10.0, int count = 1001,
                                 double b_upper = std::numeric_limits<double>::max()) {
    if (!(r_max > 0.0) || count < 2) throw InvalidArgument("check_h3 needs r_max > 0 and count >= 2");
    HypothesisReport rep;
    rep.hypothesis = "H3";
    InequalityCheck lower{"b_lower_bound"}, upper{"b_bounded"};
    for (int i = 0; i < count; ++i) {
        const double r = r_max * i / (count - 1);
        const std::string where = "r=" + detail::fmt_scalar(r);
        const double v = detail::checked(cs.b(r), "b", where);
        detail::track(lower, v - cs.b0(), where);
        detail::track(upper, b_upper - v, where);
    }
    lower.passed = lower.worst_margin >= 0.0;
    upper.passed = upper.worst_margin >= 0.0;
    rep.add(lower);
    rep.add(upper);
    rep.samples = std::to_string(count) + " samples in [0, " + detail::fmt_scalar(r_max) + "]";
    return rep;
}

/// |b(r)r - b(s)s| <= alpha |beta(r) - beta(s)| over all sample pairs.
/// worst_margin is alpha - max ratio; an infinite ratio marks a pair with
/// equal beta values but different b(r)r.
inline HypothesisReport check_uniqueness_condition(const CoefficientSet& cs, double alpha,
                                                   std::span<const double> r_samples) {
    if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
    HypothesisReport rep;
    rep.hypothesis = "uniqueness";
    InequalityCheck ratio{"lipschitz_ratio"};
    std::vector<double> g(r_samples.size()), be(r_samples.size());
    for (std::size_t i = 0; i < r_samples.size(); ++i) {
        const std::string where = "r=" + detail::fmt_scalar(r_samples[i]);
        g[i] = detail::checked(cs.b(r_samples[i]), "b", where) * r_samples[i];
        be[i] = detail::checked(cs.beta(r_samples[i]), "beta", where);
    }
    double worst = 0.0;
    std::string worst_where = "none";
    for (std::size_t i = 0; i < r_samples.size(); ++i)
        for (std::size_t j = i + 1; j < r_samples.size(); ++j) {
            const double num = std::abs(g[i] - g[j]);
            const double den = std::abs(be[i] - be[j]);
            double q;
            if (den == 0.0)
                q = num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
            else
                q = num / den;
            if (q > worst) {
                worst = q;
                worst_where = "r=" + detail::fmt_scalar(r_samples[i]) + ",rbar=" + detail::fmt_scalar(r_samples[j]);
            }
        }
    ratio.worst_margin = alpha - worst;
    ratio.worst_sample = worst_where + ",ratio=" + detail::fmt_scalar(worst);
    ratio.passed = worst <= alpha;
    rep.add(ratio);
    rep.samples = std::to_string(r_samples.size()) + " samples, all pairs, alpha=" + detail::fmt_scalar(alpha);
    return rep;
}

/// Result of the integral tests for int_1^r beta'(s)/(s b(s)) ds.
struct FixedPointReport {
    bool limit_at_infinity_diverges = false;
    bool limit_at_zero_diverges = false;
    /// Which of the two tests is relevant for the stored nu.
    std::string applicable_case;
    double integral_at_r_hi = 0.0;
    double integral_at_r_lo = 0.0;
    /// Ratio of the last two equal-log-width increments (toward r_hi / r_lo).
    double growth_ratio_hi = 0.0;
    double growth_ratio_lo = 0.0;
};

/// Integrates in tau = log s (integrand beta'(e^tau)/b(e^tau)) over equal
/// log-width intervals and calls the integral divergent when the last
/// increments stop decaying.
inline FixedPointReport fixed_point_criteria(const CoefficientSet& cs, double r_lo, double r_hi, int intervals = 24) {
    if (!(r_lo > 0.0 && r_lo < 1.0 && r_hi > 1.0)) throw InvalidArgument("need 0 < r_lo < 1 < r_hi");
    std::vector<double> gx, gw;
    detail::gauss_legendre(8, gx, gw);
    auto integrate = [&](double t0, double t1) {
        double s = 0.0;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const double tau = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * gx[i];
            const double r = std::exp(tau);
            const double v = cs.beta_prime(r) / cs.b(r);
            if (!std::isfinite(v))
                throw EvaluationError("fixed-point integrand is singular at s=" + detail::fmt_scalar(r));
            s += 0.5 * (t1 - t0) * gw[i] * v;
        }
        return s;
    };
    auto run = [&](double target, double& total, double& ratio) {
        const double t_end = std::log(target);
        std::vector<double> inc(intervals);
        total = 0.0;
        for (int k = 0; k < intervals; ++k) {
            inc[k] = integrate(t_end * k / intervals, t_end * (k + 1) / intervals);
            total += inc[k];
        }
        const double last = std::abs(inc[intervals - 1]);
        const double prev = std::abs(inc[intervals - 2]);
        ratio = prev > 0.0 ? last / prev : (last > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        // Non-decaying increments of a fixed sign keep the partial integral growing.
        return last > 1e-12 && ratio >= 0.9;
    };
    FixedPointReport rep;
    rep.limit_at_infinity_diverges = run(r_hi, rep.integral_at_r_hi, rep.growth_ratio_hi) && rep.integral_at_r_hi > 0.0;
    rep.limit_at_zero_diverges = run(r_lo, rep.integral_at_r_lo, rep.growth_ratio_lo) && rep.integral_at_r_lo < 0.0;
    const double d = cs.dim();
    if (cs.nu() > 1.0 - 1.0 / d && cs.nu() <= 1.0)
        rep.applicable_case = "r->infinity (nu in (1-1/d, 1])";
    else if (cs.nu() > 1.0)
        rep.applicable_case = "r->0 (nu > 1)";
    else
        rep.applicable_case = "none (nu <= 1-1/d)";
    return rep;
}

}  // namespace fpflow
