#pragma once
/// Conservative two-point flux discretization of
///     A_eps(u) = -Lap(beta(u) + eps u) + div(D b(u) u)
/// on a truncated box with zero-flux boundary faces.
///
/// The face flux (positive along +axis) is
///     F = F_lin(u_L, u_R) - (beta~(u_R) - beta~(u_L)) / h,
/// where beta~(r) = beta(r) - kappa r and kappa = beta_linear_part. With a
/// constant b = c the linear part is exponentially fitted,
///     F_lin = (k/h) [B(-P) u_L - B(P) u_R],  k = kappa + eps,  P = c v h / k,
/// B(z) = z / (e^z - 1), which is exact for the stationary Ornstein-Uhlenbeck
/// profile and turns into donor-cell upwinding as k -> 0. A non-constant b
/// uses central linear diffusion plus donor-cell drift on g(u) = b(u) u.
/// Both variants are monotone two-point fluxes: dF/du_L >= 0, dF/du_R <= 0
/// whenever (b(r) r)' >= 0.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "fpflow/coefficients.hpp"
#include "fpflow/error.hpp"
#include "fpflow/grid.hpp"

namespace fpflow {

/// B(z) = z / (e^z - 1), B(0) = 1.
inline double bernoulli(double z) noexcept {
    if (std::abs(z) < 1e-8) return 1.0 - 0.5 * z;
    return z / std::expm1(z);
}

enum class Linearization {
    Tangent,  ///< exact Jacobian (Newton)
    Secant,   ///< frozen coefficients, A(y) ~ L(y_k) y (Picard)
};

class FluxOperator {
public:
    struct Face {
        std::size_t left, right;
        double velocity;  ///< D . e_axis at the face centre
    };

    FluxOperator(const CoefficientSet& cs, const GridSpec& grid) : cs_(cs), grid_(grid) {
        grid.validate();
        if (cs.dim() != grid.dim) throw GridMismatch("coefficient and grid dimensions differ");
        const double h = grid.spacing();
        std::array<double, 3> d{};
        for (int axis = 0; axis < grid.dim; ++axis) {
            const std::size_t s = grid.stride(axis);
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const auto idx = grid.unflatten(i);
                if (idx[axis] + 1 >= grid.cells) continue;
                Point x = grid.center_of(i);
                x[axis] += 0.5 * h;
                cs.drift({x.data(), static_cast<std::size_t>(grid.dim)}, {d.data(), static_cast<std::size_t>(grid.dim)});
                if (!std::isfinite(d[axis])) throw EvaluationError("drift is not finite at a face centre");
                faces_.push_back({i, i + s, d[axis]});
            }
        }
    }

    const GridSpec& grid() const noexcept { return grid_; }
    const CoefficientSet& coefficients() const noexcept { return cs_; }
    const std::vector<Face>& faces() const noexcept { return faces_; }

    /// out = A_eps(u), cell-wise.
    void apply(std::span<const double> u, double eps, std::span<double> out) const {
        check_size(u.size());
        std::fill(out.begin(), out.end(), 0.0);
        const double inv_h = 1.0 / grid_.spacing();
        for (const auto& f : faces_) {
            const double F = flux(f, u[f.left], u[f.right], eps);
            out[f.left] += F * inv_h;
            out[f.right] -= F * inv_h;
        }
    }

    /// Appends the triplets of scale * dA_eps/du (Tangent) or of scale * L(u)
    /// with A_eps(y) = L(u) y at y = u (Secant).
    void linearize(std::span<const double> u, double eps, Linearization mode, double scale,
                   std::vector<Eigen::Triplet<double>>& out) const {
        check_size(u.size());
        const double inv_h = 1.0 / grid_.spacing();
        for (const auto& f : faces_) {
            double aL, aR;
            coefficients_of(f, u[f.left], u[f.right], eps, mode, aL, aR);
            // F ~ aL u_L + aR u_R, cell L gains +F/h, cell R gains -F/h.
            const double s = scale * inv_h;
            out.emplace_back(f.left, f.left, s * aL);
            out.emplace_back(f.left, f.right, s * aR);
            out.emplace_back(f.right, f.left, -s * aL);
            out.emplace_back(f.right, f.right, -s * aR);
        }
    }

    /// Face flux F(u_L, u_R) in the +axis direction.
    double flux(const Face& f, double uL, double uR, double eps) const {
        const double h = grid_.spacing();
        const double kappa = cs_.beta_linear_part();
        const double k = kappa + eps;
        const double nl = -((cs_.beta(uR) - kappa * uR) - (cs_.beta(uL) - kappa * uL)) / h;
        if (const auto c = cs_.b_constant()) {
            if (k > 0.0) {
                const double P = *c * f.velocity * h / k;
                return k / h * (bernoulli(-P) * uL - bernoulli(P) * uR) + nl;
            }
            return *c * (std::max(f.velocity, 0.0) * uL + std::min(f.velocity, 0.0) * uR) + nl;
        }
        const double gL = cs_.b(uL) * uL, gR = cs_.b(uR) * uR;
        return -k * (uR - uL) / h + nl + std::max(f.velocity, 0.0) * gL + std::min(f.velocity, 0.0) * gR;
    }

private:
    void check_size(std::size_t n) const {
        if (n != grid_.size()) throw GridMismatch("field size does not match operator grid");
    }

    /// Linear(ized) flux coefficients: F ~ aL u_L + aR u_R.
    void coefficients_of(const Face& f, double uL, double uR, double eps, Linearization mode, double& aL,
                         double& aR) const {
        const double h = grid_.spacing();
        const double kappa = cs_.beta_linear_part();
        const double k = kappa + eps;
        auto nl_slope = [&](double r) {
            if (mode == Linearization::Tangent || r == 0.0) return cs_.beta_prime(r) - kappa;
            return (cs_.beta(r) - kappa * r) / r;
        };
        aL = nl_slope(uL) / h;
        aR = -nl_slope(uR) / h;
        const double vp = std::max(f.velocity, 0.0), vm = std::min(f.velocity, 0.0);
        if (const auto c = cs_.b_constant()) {
            if (k > 0.0) {
                const double P = *c * f.velocity * h / k;
                aL += k / h * bernoulli(-P);
                aR -= k / h * bernoulli(P);
            } else {
                aL += *c * vp;
                aR += *c * vm;
            }
            return;
        }
        aL += k / h;
        aR -= k / h;
        auto g_slope = [&](double r) {
            if (mode == Linearization::Tangent) return cs_.b(r) + cs_.b_prime(r) * r;
            return cs_.b(r);
        };
        aL += vp * g_slope(uL);
        aR += vm * g_slope(uR);
    }

    CoefficientSet cs_;
    GridSpec grid_;
    std::vector<Face> faces_;
};

/// Discrete A_eps(u) as a signed field.
inline DensityField apply_operator(const DensityField& u, const CoefficientSet& cs, double eps = 0.0) {
    if (!(eps >= 0.0)) throw InvalidArgument("eps must be >= 0");
    if (cs.dim() != u.grid.dim) throw GridMismatch("coefficient and field dimensions differ");
    FluxOperator op(cs, u.grid);
    DensityField out = DensityField::zeros(u.grid);
    op.apply(u.values, eps, out.values);
    return out;
}

}  // namespace fpflow
