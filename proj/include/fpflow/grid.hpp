#pragma once
/// Truncated-box tensor grid [-L, L]^d and cell-averaged densities on it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fpflow/coefficients.hpp"
#include "fpflow/error.hpp"

namespace fpflow {

/// Uniform grid of n cells per axis on [-L, L]^d, row-major with axis 0
/// slowest.
struct GridSpec {
    int dim = 1;
    double half_width = 1.0;
    int cells = 4;

    GridSpec() = default;
    GridSpec(int d, double L, int n) : dim(d), half_width(L), cells(n) { validate(); }

    void validate() const {
        if (dim < 1 || dim > 3) throw InvalidArgument("grid dimension must be 1, 2 or 3");
        if (!(half_width > 0.0) || !std::isfinite(half_width)) throw InvalidArgument("half_width must be positive");
        if (cells < 4) throw InvalidArgument("need at least 4 cells per axis");
    }

    double spacing() const noexcept { return 2.0 * half_width / cells; }
    double cell_volume() const noexcept { return std::pow(spacing(), dim); }
    std::size_t size() const noexcept {
        std::size_t s = 1;
        for (int k = 0; k < dim; ++k) s *= static_cast<std::size_t>(cells);
        return s;
    }
    /// Flat-index distance between neighbours along axis k.
    std::size_t stride(int axis) const noexcept {
        std::size_t s = 1;
        for (int k = axis + 1; k < dim; ++k) s *= static_cast<std::size_t>(cells);
        return s;
    }
    double center(int i) const noexcept { return -half_width + (i + 0.5) * spacing(); }

    std::array<int, 3> unflatten(std::size_t flat) const noexcept {
        std::array<int, 3> idx{};
        for (int k = dim - 1; k >= 0; --k) {
            idx[k] = static_cast<int>(flat % cells);
            flat /= cells;
        }
        return idx;
    }
    std::size_t flatten(const std::array<int, 3>& idx) const noexcept {
        std::size_t f = 0;
        for (int k = 0; k < dim; ++k) f = f * cells + static_cast<std::size_t>(idx[k]);
        return f;
    }
    Point center_of(std::size_t flat) const noexcept {
        const auto idx = unflatten(flat);
        Point x{};
        for (int k = 0; k < dim; ++k) x[k] = center(idx[k]);
        return x;
    }

    bool operator==(const GridSpec&) const = default;
};

enum class DensityKind { Signed, Probability };

inline constexpr double kMassTolerance = 1e-12;

/// Cell averages on a grid. A probability field is nonnegative with unit
/// mass (sum of values times cell volume) up to kMassTolerance.
struct DensityField {
    GridSpec grid;
    std::vector<double> values;
    DensityKind kind = DensityKind::Signed;

    DensityField() = default;
    DensityField(GridSpec g, std::vector<double> v, DensityKind k = DensityKind::Signed)
        : grid(g), values(std::move(v)), kind(k) {
        if (values.size() != grid.size()) throw GridMismatch("value count does not match grid size");
        if (kind == DensityKind::Probability) check_probability();
    }
    static DensityField zeros(const GridSpec& g) { return DensityField(g, std::vector<double>(g.size(), 0.0)); }

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t i) const noexcept { return values[i]; }
    double& operator[](std::size_t i) noexcept { return values[i]; }

    void check_probability() const {
        double m = 0.0;
        for (double v : values) {
            if (!(v >= 0.0)) throw InvarianceViolation("probability field has a negative or NaN value");
            m += v;
        }
        m *= grid.cell_volume();
        if (std::abs(m - 1.0) > kMassTolerance) throw InvarianceViolation("probability field does not have unit mass");
    }
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b) {
    if (!(a == b)) throw GridMismatch("fields live on different grids");
}

inline double mass(const DensityField& u) {
    return std::accumulate(u.values.begin(), u.values.end(), 0.0) * u.grid.cell_volume();
}

inline double l1_norm(const DensityField& u) {
    double s = 0.0;
    for (double v : u.values) s += std::abs(v);
    return s * u.grid.cell_volume();
}

inline double l1_distance(const DensityField& u, const DensityField& v) {
    require_same_grid(u.grid, v.grid);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += std::abs(u[i] - v[i]);
    return s * u.grid.cell_volume();
}

inline double min_value(const DensityField& u) {
    return u.values.empty() ? 0.0 : *std::min_element(u.values.begin(), u.values.end());
}

/// Divides by the mass and tags the field as a probability density.
/// Throws if any value is negative or the mass is not positive.
inline DensityField normalized(DensityField u) {
    const double m = mass(u);
    if (!(m > 0.0)) throw InvalidArgument("cannot normalize a field with non-positive mass");
    for (double& v : u.values) {
        if (v < 0.0) throw InvalidArgument("cannot normalize a field with negative values");
        v /= m;
    }
    u.kind = DensityKind::Probability;
    u.check_probability();
    return u;
}

/// Phi sampled at cell centres, used by the weighted norm.
struct WeightedNormContext {
    GridSpec grid;
    std::vector<double> phi;
    double eta = 1.0;

    WeightedNormContext(const GridSpec& g, const CoefficientSet& cs, double eta_bound) : grid(g), phi(g.size()), eta(eta_bound) {
        if (cs.dim() != g.dim) throw GridMismatch("coefficient and grid dimensions differ");
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Point x = g.center_of(i);
            phi[i] = cs.phi({x.data(), static_cast<std::size_t>(g.dim)});
            if (!(phi[i] >= 1.0)) throw InvalidArgument("Phi < 1 at a cell centre");
        }
    }
};

/// sum_i |u_i| Phi(x_i) h^d.
inline double weighted_norm(const DensityField& u, const WeightedNormContext& ctx) {
    require_same_grid(u.grid, ctx.grid);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += std::abs(u[i]) * ctx.phi[i];
    return s * u.grid.cell_volume();
}

/// F(u) = sum_i g(x_i) u_i h^d for cell-sampled g.
inline double integrate_against(const DensityField& u, std::span<const double> g) {
    if (g.size() != u.size()) throw GridMismatch("observable and field sizes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += g[i] * u[i];
    return s * u.grid.cell_volume();
}

/// Samples f at cell centres.
template <class F>
DensityField sample_cells(const GridSpec& g, F&& f) {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point x = g.center_of(i);
        v[i] = f(std::span<const double>(x.data(), static_cast<std::size_t>(g.dim)));
    }
    return DensityField(g, std::move(v));
}

/// Exact cell averages of the isotropic Gaussian N(center, sigma^2 I),
/// renormalized to unit mass on the box.
inline DensityField project_gaussian(const GridSpec& g, std::span<const double> center, double sigma) {
    if (static_cast<int>(center.size()) != g.dim) throw GridMismatch("gaussian centre has wrong dimension");
    if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
    const double h = g.spacing();
    std::vector<std::vector<double>> axis(g.dim, std::vector<double>(g.cells));
    for (int k = 0; k < g.dim; ++k)
        for (int i = 0; i < g.cells; ++i) {
            const double a = (-g.half_width + i * h - center[k]) / (sigma * std::numbers::sqrt2);
            const double b = (-g.half_width + (i + 1) * h - center[k]) / (sigma * std::numbers::sqrt2);
            axis[k][i] = 0.5 * (std::erf(b) - std::erf(a)) / h;
        }
    std::vector<double> v(g.size());
    for (std::size_t f = 0; f < g.size(); ++f) {
        const auto idx = g.unflatten(f);
        double p = 1.0;
        for (int k = 0; k < g.dim; ++k) p *= axis[k][idx[k]];
        v[f] = p;
    }
    return normalized(DensityField(g, std::move(v)));
}

/// Uniform probability density on the whole box.
inline DensityField uniform_density(const GridSpec& g) {
    return normalized(DensityField(g, std::vector<double>(g.size(), 1.0)));
}

}  // namespace fpflow
