#include <gtest/gtest.h>

#include <cmath>

#include "fpflow/ergodic.hpp"
#include "oracles.hpp"

using namespace fpflow;

namespace {

SolverConfig tight() {
    SolverConfig cfg;
    cfg.newton_tol = 1e-13;
    return cfg;
}

DensityField gaussian(const GridSpec& g, double mu, double sigma) {
    const double c[1] = {mu};
    return project_gaussian(g, c, sigma);
}

DensityField nodal_gaussian(const GridSpec& g) {
    return normalized(sample_cells(g, [](std::span<const double> x) { return std::exp(-0.5 * x[0] * x[0]); }));
}

// u_k alternates between p and q; every step is a snapshot.
Trajectory alternating(const DensityField& p, const DensityField& q, int K, double h) {
    Trajectory t;
    t.grid = p.grid;
    t.step = h;
    std::vector<double> acc(p.size(), 0.0);
    for (int k = 0; k <= K; ++k) {
        const DensityField& u = k % 2 ? q : p;
        t.times.push_back(k * h);
        t.snapshots.push_back(u);
        t.cesaro_acc.push_back(acc);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += h * u[i];
    }
    return t;
}

}  // namespace

class OuTrajectory : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        EvolveOptions opt;
        opt.snapshots = 200;
        traj_ = new Trajectory(evolve(gaussian(grid(), 0.5, 1.0), 20.0, 0.01, make_linear_ou(1), grid(), tight(), opt));
    }
    static void TearDownTestSuite() { delete traj_; }
    static GridSpec grid() { return GridSpec(1, 6.0, 128); }
    static Trajectory* traj_;
};
Trajectory* OuTrajectory::traj_ = nullptr;

TEST_F(OuTrajectory, ConstantObservableAveragesToItself) {
    const auto v = cesaro_observable(*traj_, constant_observable(grid(), 1.0), {0.5, 1.25, 7.3, 20.0});
    for (double x : v) EXPECT_NEAR(x, 1.0, 1e-12);
}

TEST_F(OuTrajectory, LinearInTheObservable) {
    const auto g1 = moment_observable(grid(), 0, 2), g2 = cosine_observable(grid(), 0, 1.3);
    Observable mix{"mix", g1.values};
    for (std::size_t i = 0; i < mix.values.size(); ++i) mix.values[i] = 2.0 * g1.values[i] - 0.5 * g2.values[i];
    const std::vector<double> T{1.0, 5.0, 20.0};
    const auto a = cesaro_observable(*traj_, g1, T), b = cesaro_observable(*traj_, g2, T),
               m = cesaro_observable(*traj_, mix, T);
    for (std::size_t k = 0; k < T.size(); ++k) EXPECT_NEAR(m[k], 2.0 * a[k] - 0.5 * b[k], 1e-12);
}

TEST_F(OuTrajectory, ObservableOfMeanEqualsMeanOfObservable) {
    const auto g1 = moment_observable(grid(), 0, 1);
    const std::vector<double> T{2.0, 10.0};
    const auto means = cesaro_mean_field(*traj_, T);
    const auto vals = cesaro_observable(*traj_, g1, T);
    for (std::size_t k = 0; k < T.size(); ++k) EXPECT_NEAR(g1(means[k]), vals[k], 1e-13);
}

TEST_F(OuTrajectory, SecondMomentApproachesEquilibrium) {
    // E x^2(t) = 1 + 0.25 e^{-2t} for N(0.5, 1) data; its time average is known in closed form.
    const std::vector<double> T{2.5, 20.0};
    const auto v = cesaro_observable(*traj_, moment_observable(grid(), 0, 2), T);
    const double m2 = oracle::truncated_normal_second_moment(6.0);
    for (std::size_t k = 0; k < T.size(); ++k)
        EXPECT_NEAR(v[k], m2 + 0.25 * (1.0 - std::exp(-2.0 * T[k])) / (2.0 * T[k]), 3e-3) << "T=" << T[k];
    EXPECT_LT(std::abs(v[1] - m2), std::abs(v[0] - m2));
}

TEST_F(OuTrajectory, CauchyIncrementsDecrease) {
    const auto rep = cesaro_cauchy_test(*traj_, {1.25, 2.5, 5.0, 10.0, 20.0});
    EXPECT_TRUE(rep.passed);
    EXPECT_LT(rep.log_slope, -0.5);
    EXPECT_EQ(rep.distances.size(), 4u);
}

TEST_F(OuTrajectory, OmegaCollapsesAndShrinksWithWindow) {
    const auto wide = estimate_omega(*traj_, 0.9), narrow = estimate_omega(*traj_, 0.3);
    EXPECT_LE(narrow.diameter, wide.diameter);
    EXPECT_LT(narrow.diameter, 1e-3);
    EXPECT_GE(wide.clusters, 1u);
    EXPECT_EQ(narrow.representatives.size(), narrow.clusters);
}

TEST(Ergodic, InterpolatesBetweenCheckpoints) {
    const GridSpec g(1, 4.0, 16);
    const auto p = gaussian(g, -1.0, 0.5), q = gaussian(g, 1.0, 0.5);
    Trajectory t = alternating(p, q, 4, 0.5);
    // keep only the checkpoints at 0, 1 and 2
    t.times = {0.0, 1.0, 2.0};
    t.snapshots = {p, p, p};
    t.cesaro_acc = {t.cesaro_acc[0], t.cesaro_acc[2], t.cesaro_acc[4]};
    const auto m = cesaro_mean_field(t, {1.5})[0];
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(m[i], 0.5 * (p[i] + q[i]), 1e-14);
    EXPECT_THROW(cesaro_mean_field(t, {2.5}), InvalidArgument);
    EXPECT_THROW(cesaro_mean_field(t, {0.0}), InvalidArgument);
}

TEST(Ergodic, FixedPointHasConstantAverages) {
    const GridSpec g(1, 6.0, 64);
    const auto u0 = nodal_gaussian(g);
    const auto traj = evolve(u0, 5.0, 0.1, make_linear_ou(1), g, tight());
    for (const auto& m : cesaro_mean_field(traj, {0.5, 2.0, 5.0})) EXPECT_LE(l1_distance(m, u0), 1e-12);
    const auto rep = cesaro_cauchy_test(traj, {1.0, 2.0, 4.0});
    for (double d : rep.distances) EXPECT_LE(d, 1e-12);
    const auto om = estimate_omega(traj, 0.5);
    EXPECT_LE(om.diameter, 1e-12);
}

TEST(Ergodic, PeriodicTrajectoryIsCesaroCauchy) {
    const GridSpec g(1, 4.0, 16);
    const auto p = gaussian(g, -1.0, 0.5), q = gaussian(g, 1.0, 0.5);
    const auto traj = alternating(p, q, 400, 0.05);
    const auto rep = cesaro_cauchy_test(traj, {1.05, 2.05, 4.05, 8.05, 16.05});
    EXPECT_TRUE(rep.passed);
    EXPECT_NEAR(rep.log_slope, -1.0, 0.2);
    const auto om = estimate_omega(traj, 0.5);
    EXPECT_EQ(om.clusters, 2u);
    EXPECT_NEAR(om.diameter, l1_distance(p, q), 1e-14);
}

TEST(Ergodic, OmegaNeedsEnoughSnapshots) {
    const GridSpec g(1, 4.0, 16);
    const auto traj = alternating(uniform_density(g), uniform_density(g), 6, 0.1);
    EXPECT_THROW(estimate_omega(traj, 1.0), InvalidArgument);
    EXPECT_THROW(estimate_omega(traj, 0.0), InvalidArgument);
}

TEST(Ergodic, CauchyTestValidatesTimes) {
    const GridSpec g(1, 4.0, 16);
    const auto traj = alternating(uniform_density(g), uniform_density(g), 20, 0.1);
    EXPECT_THROW(cesaro_cauchy_test(traj, {0.5, 1.0}), InvalidArgument);
    EXPECT_THROW(cesaro_cauchy_test(traj, {0.5, 1.0, 0.8}), InvalidArgument);
}

TEST(Ergodic, StationaryResidualAndFixedPointProbe) {
    const GridSpec g(1, 6.0, 64);
    const auto cs = make_linear_ou(1);
    const auto u = nodal_gaussian(g);
    EXPECT_LE(stationary_residual(u, cs, g), 1e-13);
    EXPECT_GT(stationary_residual(gaussian(g, 1.0, 1.0), cs, g), 0.1);
    SolverConfig cfg = tight();
    cfg.lambda = 0.1;
    EXPECT_TRUE(fixed_point_test(u, cs, g, cfg, 1.0).is_fixed_point);
    const auto moved = fixed_point_test(gaussian(g, 1.0, 1.0), cs, g, cfg, 1.0);
    EXPECT_FALSE(moved.is_fixed_point);
    EXPECT_GT(moved.drift, moved.tolerance);
}

TEST(Ergodic, ObservableSpecsOnCellsAndPoints) {
    const GridSpec g(1, 2.0, 8);
    ObservableSpec box;
    box.kind = "indicator";
    box.lo = {-0.25, 0, 0};
    box.hi = {2.0, 0, 0};
    const auto cells = to_cells(box, g);
    EXPECT_DOUBLE_EQ(cells.values[3], 0.5);
    EXPECT_DOUBLE_EQ(cells.values[4], 1.0);
    EXPECT_DOUBLE_EQ(cells.values[2], 0.0);
    const double x[1] = {0.1};
    EXPECT_EQ(box(x), 1.0);
    ObservableSpec mom;
    mom.kind = "moment";
    mom.power = 3;
    EXPECT_DOUBLE_EQ(mom(std::span<const double>(x, 1)), 0.1 * 0.1 * 0.1);
    ObservableSpec bad;
    bad.kind = "spline";
    EXPECT_THROW(bad.validate(1), InvalidArgument);
}
