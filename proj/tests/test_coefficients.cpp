#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fpflow/coefficients.hpp"
#include "fpflow/config.hpp"

using namespace fpflow;

namespace {

CoefficientSpec base_spec(int dim) {
    CoefficientSpec s;
    s.dim = dim;
    s.beta = [](double r) { return r; };
    s.b = [](double) { return 1.0; };
    s.phi = [](std::span<const double> x) {
        double r2 = 0.0;
        for (double v : x) r2 += v * v;
        return 1.0 + r2;
    };
    return s;
}

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
    return v;
}

}  // namespace

TEST(CoefficientSet, RejectsNonzeroBetaAtOrigin) {
    auto s = base_spec(1);
    s.beta = [](double r) { return r + 1e-3; };
    EXPECT_THROW(CoefficientSet{s}, InvalidArgument);
}

TEST(CoefficientSet, FiniteDifferenceDefaultsMatchAnalytic) {
    auto s = base_spec(2);
    s.beta = [](double r) { return r * r * r + r; };
    s.b = [](double r) { return 2.0 + std::sin(r); };
    const CoefficientSet cs(s);
    for (double r : {-1.3, 0.0, 0.7, 2.5}) {
        EXPECT_NEAR(cs.beta_prime(r), 3 * r * r + 1, 1e-8);
        EXPECT_NEAR(cs.b_prime(r), std::cos(r), 1e-8);
    }
    const double x[2] = {0.3, -1.1};
    double g[2];
    cs.grad_phi(x, g);
    EXPECT_NEAR(g[0], 0.6, 1e-8);
    EXPECT_NEAR(g[1], -2.2, 1e-8);
    EXPECT_NEAR(cs.laplacian_phi(x), 4.0, 1e-4);
    double d[2];
    cs.drift(x, d);
    EXPECT_NEAR(d[0], -0.6, 1e-8);
}

TEST(H1, IdentityPassesInThreeDimensions) {
    const auto cs = make_linear_ou(3);
    const auto rep = check_h1(cs, default_r_samples(5.0));
    EXPECT_TRUE(rep.passed);
    EXPECT_EQ(rep.find("beta_lower_bound")->worst_margin, 0.0);
    EXPECT_EQ(rep.find("beta_upper_bound")->worst_margin, 0.0);
}

TEST(H1, PiecewisePowerExamplePasses) {
    // beta = mu1 r|r|^(d-1) inside r0, linear continuation beyond, nu = d.
    const auto cs = make_paper_phi(3, {{"power", 3.0}, {"r0", 1.0}, {"mu1", 1.0}, {"mu2", 1.0}});
    const auto rep = check_h1(cs, default_r_samples(10.0, 2001));
    EXPECT_TRUE(rep.passed);
    EXPECT_EQ(cs.nu(), 3.0);
}

TEST(H1, CubicWithNuOneFailsLowerBound) {
    auto s = base_spec(3);
    s.beta = [](double r) { return r * r * r; };
    s.nu = 1.0;
    s.mu1 = 1.0;
    s.mu2 = 100.0;
    const CoefficientSet cs(s);
    const auto rep = check_h1(cs, linspace(-2, 2, 401));
    EXPECT_FALSE(rep.passed);
    EXPECT_FALSE(rep.find("beta_lower_bound")->passed);
    EXPECT_TRUE(rep.find("beta_upper_bound")->passed);
    // |r|^3 - |r| is most negative at |r| = 1/sqrt(3).
    EXPECT_NEAR(rep.find("beta_lower_bound")->worst_margin, -2.0 / (3.0 * std::sqrt(3.0)), 1e-3);
}

TEST(H1, NuExponentCheckedArithmetically) {
    auto s = base_spec(3);
    s.nu = 2.0 / 3.0;
    const auto rep = check_h1(CoefficientSet(s), std::vector<double>{0.0, 1.0});
    EXPECT_FALSE(rep.find("nu_exponent")->passed);
}

TEST(H1, OriginSampleAlonePasses) {
    const auto rep = check_h1(make_porous_medium(1), std::vector<double>{0.0});
    EXPECT_TRUE(rep.find("beta_zero_at_origin")->passed);
}

TEST(H1, NonFiniteBetaNamesTheSample) {
    auto s = base_spec(1);
    s.beta = [](double r) { return r > 1.5 ? std::numeric_limits<double>::infinity() : r; };
    const CoefficientSet cs(s);
    try {
        check_h1(cs, std::vector<double>{0.0, 1.0, 2.0});
        FAIL() << "expected an evaluation error";
    } catch (const EvaluationError& e) {
        EXPECT_NE(std::string(e.what()).find("r=2"), std::string::npos);
    }
}

TEST(H2, QuadraticPotentialIntegrableButSignConditionFails) {
    auto s = base_spec(3);
    s.m = 2.0;
    const CoefficientSet cs(s);
    const auto rep = check_h2(cs, default_x_samples(3, 2.0, 9), 64.0);
    EXPECT_TRUE(rep.find("phi_power_integrable")->passed);
    EXPECT_TRUE(rep.find("phi_power_integrable")->heuristic);
    EXPECT_FALSE(rep.find("sign_condition")->passed);
    // mu2 * 6 - b0 * 4|x|^2 is largest at the origin.
    EXPECT_NEAR(rep.find("sign_condition")->worst_margin, -6.0, 1e-3);
    EXPECT_FALSE(rep.passed);
}

TEST(H2, ExamplePotentialPasses) {
    for (int d : {1, 2, 3}) {
        const auto cs = make_paper_phi(d);
        const auto rep = check_h2(cs, default_x_samples(d, 2.0, d == 3 ? 11 : 21), 50.0);
        EXPECT_TRUE(rep.passed) << "d=" << d;
    }
    EXPECT_NEAR(paper_phi_delta(3), std::exp(-5.0 / 6.0), 1e-15);
}

TEST(H2, ConstantPotentialIsNotCoercive) {
    auto s = base_spec(2);
    s.phi = [](std::span<const double>) { return 1.0; };
    const auto rep = check_h2(CoefficientSet(s), default_x_samples(2, 1.0, 5), 100.0);
    EXPECT_FALSE(rep.find("phi_coercive")->passed);
    EXPECT_TRUE(rep.find("phi_at_least_one")->passed);
}

TEST(H2, PotentialBelowOneFails) {
    auto s = base_spec(1);
    s.phi = [](std::span<const double> x) { return 0.5 + x[0] * x[0]; };
    const auto rep = check_h2(CoefficientSet(s), default_x_samples(1, 1.0, 5), 10.0);
    EXPECT_FALSE(rep.find("phi_at_least_one")->passed);
}

TEST(H3, Examples) {
    auto s = base_spec(1);
    EXPECT_TRUE(check_h3(CoefficientSet(s)).passed);

    s.b = [](double r) { return 1.0 / (1.0 + r); };
    s.b0 = 0.1;
    const auto pass = check_h3(CoefficientSet(s), 5.0);
    EXPECT_TRUE(pass.passed);
    EXPECT_NEAR(pass.find("b_lower_bound")->worst_margin, 1.0 / 6.0 - 0.1, 1e-12);

    s.b = [](double r) { return std::exp(-r); };
    s.b0 = 0.5;
    const auto fail = check_h3(CoefficientSet(s), 5.0);
    EXPECT_FALSE(fail.passed);
    EXPECT_NEAR(fail.find("b_lower_bound")->worst_margin, std::exp(-5.0) - 0.5, 1e-12);
}

TEST(H3, UpperBound) {
    auto s = base_spec(1);
    s.b = [](double r) { return 1.0 + r; };
    EXPECT_FALSE(check_h3(CoefficientSet(s), 10.0, 101, 5.0).find("b_bounded")->passed);
}

TEST(Uniqueness, Examples) {
    const auto lin = check_uniqueness_condition(make_linear_ou(1), 1.0, linspace(-3, 3, 61));
    EXPECT_TRUE(lin.passed);
    EXPECT_NEAR(lin.find("lipschitz_ratio")->worst_margin, 0.0, 1e-12);

    auto s = base_spec(1);
    s.beta = [](double r) { return r * std::abs(r); };
    const auto sq = check_uniqueness_condition(CoefficientSet(s), 10.0, linspace(-1, 1, 100));
    EXPECT_FALSE(sq.passed);

    s.beta = [](double r) { return 2.0 * r; };
    const auto two = check_uniqueness_condition(CoefficientSet(s), 0.5, linspace(-3, 3, 61));
    EXPECT_TRUE(two.passed);
    EXPECT_NEAR(two.find("lipschitz_ratio")->worst_margin, 0.0, 1e-12);
}

TEST(Uniqueness, EqualBetaWithDifferentFluxIsImmediateFailure) {
    auto s = base_spec(1);
    s.beta = [](double r) { return r > 1.0 ? 1.0 : (r < -1.0 ? -1.0 : r); };
    const auto rep = check_uniqueness_condition(CoefficientSet(s), 100.0, std::vector<double>{1.5, 2.0});
    EXPECT_FALSE(rep.passed);
    EXPECT_TRUE(std::isinf(rep.find("lipschitz_ratio")->worst_margin));
}

TEST(FixedPointCriteria, LinearBetaDivergesBothWays) {
    const auto rep = fixed_point_criteria(make_linear_ou(3), 1e-6, 1e6);
    EXPECT_TRUE(rep.limit_at_infinity_diverges);
    EXPECT_TRUE(rep.limit_at_zero_diverges);
    EXPECT_NEAR(rep.integral_at_r_hi, std::log(1e6), 1e-9);
    EXPECT_NEAR(rep.integral_at_r_lo, std::log(1e-6), 1e-9);
}

TEST(FixedPointCriteria, ArctanConvergesAtInfinity) {
    auto s = base_spec(3);
    s.beta = [](double r) { return std::atan(r); };
    s.beta_prime = [](double r) { return 1.0 / (1.0 + r * r); };
    const auto rep = fixed_point_criteria(CoefficientSet(s), 1e-6, 1e6);
    EXPECT_FALSE(rep.limit_at_infinity_diverges);
    // int_1^inf ds / (s (1+s^2)) = log(2)/2
    EXPECT_NEAR(rep.integral_at_r_hi, 0.5 * std::log(2.0), 1e-6);
}

TEST(FixedPointCriteria, ScalingBLeavesFlagsUnchanged) {
    for (double c : {1.0, 2.0}) {
        const auto rep = fixed_point_criteria(make_linear_ou(3, {{"b", c}}), 1e-6, 1e6);
        EXPECT_TRUE(rep.limit_at_infinity_diverges);
        EXPECT_TRUE(rep.limit_at_zero_diverges);
    }
}

TEST(Families, LinearOuPassesH1H3AndUniqueness) {
    const auto cs = make_linear_ou(2);
    const auto r = default_r_samples(10.0);
    EXPECT_TRUE(check_h1(cs, r).passed);
    EXPECT_TRUE(check_h3(cs).passed);
    EXPECT_TRUE(check_uniqueness_condition(cs, 1.0, r).passed);
}

TEST(Families, PorousMediumGrowthBoundHoldsOnlyOnConfiguredRange) {
    const auto cs = make_porous_medium(1, {{"mu2", 4.0}});
    EXPECT_TRUE(check_h1(cs, default_r_samples(4.0)).passed);
    EXPECT_FALSE(check_h1(cs, default_r_samples(5.0)).find("beta_upper_bound")->passed);
}

TEST(Families, OverridesOfClaimedConstants) {
    const auto cs = make_family("linear-ou", 1, {{"b0", 2.0}});
    EXPECT_EQ(cs.b0(), 2.0);
    EXPECT_FALSE(check_h3(cs).find("b_lower_bound")->passed);
    EXPECT_THROW(make_family("nope", 1), InvalidArgument);
}

TEST(Audits, DeterministicForSameSeed) {
    const auto cs = make_paper_phi(2);
    const auto a = check_h1(cs, default_r_samples(3.0, 101, 50, 42));
    const auto b = check_h1(cs, default_r_samples(3.0, 101, 50, 42));
    ASSERT_EQ(a.checks.size(), b.checks.size());
    for (std::size_t i = 0; i < a.checks.size(); ++i) {
        EXPECT_EQ(std::memcmp(&a.checks[i].worst_margin, &b.checks[i].worst_margin, sizeof(double)), 0);
        EXPECT_EQ(a.checks[i].worst_sample, b.checks[i].worst_sample);
    }
    const auto c = default_x_samples(2, 1.0, 3, 10, 7), d = default_x_samples(2, 1.0, 3, 10, 7);
    EXPECT_EQ(c, d);
}

TEST(MonotoneCubic, InterpolatesAndStaysMonotone) {
    std::vector<double> r{-2, -1, 0, 0.5, 1, 3}, v, dv;
    for (double x : r) {
        v.push_back(x * std::abs(x));
        dv.push_back(2 * std::abs(x));
    }
    const MonotoneCubic f(r, v, dv);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(f(r[i]), v[i], 1e-14);
    double prev = f(-2.5);
    for (double x = -2.5; x <= 3.5; x += 0.01) {
        EXPECT_GE(f(x), prev - 1e-14);
        prev = f(x);
    }
    EXPECT_NEAR(f(0.75), 0.5625, 0.05);
}

TEST(CustomTable, ReadFromCsv) {
    const auto dir = std::filesystem::temp_directory_path() / "fpflow_table_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "beta.csv");
        os << "r,beta,beta_prime\n";
        for (int i = -20; i <= 20; ++i) {
            const double r = 0.25 * i;
            os << r << "," << 2 * r << ",2\n";
        }
    }
    const auto rows = detail::read_beta_table(dir / "beta.csv");
    const auto cs = make_family("custom-table", 1, {{"mu1", 1.99}, {"mu2", 2.01}}, rows);
    EXPECT_NEAR(cs.beta(1.1), 2.2, 1e-12);
    EXPECT_NEAR(cs.beta_prime(-0.3), 2.0, 1e-12);
    EXPECT_TRUE(check_h1(cs, default_r_samples(5.0)).passed);
}
