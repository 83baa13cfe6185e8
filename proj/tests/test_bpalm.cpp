#include <rgw/bpalm.hpp>
#include <rgw/graph_bench.hpp>
#include <rgw/oracles.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rgw;

namespace {

CostMatrix swap2() { return CostMatrix((Matrix(2, 2) << 0, 1, 1, 0).finished()); }

/// Uniform plan nudged towards the identity; the exact uniform plan is a symmetric
/// stationary point on identical spaces and never breaks the tie.
Coupling nudged_identity(Eigen::Index n, double delta)
{
    Matrix p = Matrix::Constant(n, n, 1.0 / static_cast<double>(n * n));
    p.diagonal().array() += delta;
    p.array() -= delta / static_cast<double>(n);
    return Coupling(p);
}

bool argmax_is_identity(const Coupling& pi)
{
    const auto match = predicted_matching(pi);
    for (std::size_t i = 0; i < match.size(); ++i)
        if (match[i] != static_cast<int>(i)) return false;
    return true;
}

} // namespace

TEST(RgwParams, DefaultsAndValidation)
{
    const RgwParams p;
    EXPECT_EQ(p.rho1, 0.2);
    EXPECT_EQ(p.rho2, 0.2);
    EXPECT_EQ(p.tau1, 0.1);
    EXPECT_EQ(p.tau2, 0.1);
    EXPECT_EQ(p.t, 0.01);
    EXPECT_EQ(p.c, 0.1);
    EXPECT_EQ(p.r, 0.1);
    EXPECT_EQ(p.max_outer_iterations, 2000);
    EXPECT_EQ(p.outer_tolerance, 1e-6);
    EXPECT_EQ(p.step_mode, StepMode::practical);
    RgwParams bad;
    bad.rho1 = -1;
    try {
        bad.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("rho1"), std::string::npos);
    }
    bad = {};
    bad.t = 0;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(SolveRgw, IdenticalTwoPointSpaces)
{
    const auto u = ProbabilityVector::uniform(2);
    RgwParams p;
    p.t = 1.0;
    const auto sol = solve_rgw(swap2(), swap2(), u, u, nudged_identity(2, 0.01), p);
    EXPECT_LE(sol.report.final_objective(), 1e-6);
    EXPECT_TRUE(argmax_is_identity(sol.pi));
    EXPECT_TRUE(sol.report.converged);
    // swapping the two points is also an isometry, so the anti-diagonal plan is optimal too
    Matrix swapped(2, 2);
    swapped << 0, 0.5, 0.5, 0;
    EXPECT_EQ(gw_quadratic_value(swap2(), swap2(), Coupling(swapped)), 0.0);
}

TEST(SolveRgw, ZeroRadiusPinsMarginals)
{
    std::mt19937_64 rng(1);
    const auto D = oracle::random_metric(4, rng), Db = oracle::random_metric(3, rng);
    const auto mu = oracle::random_simplex(4, rng), nu = oracle::random_simplex(3, rng);
    RgwParams p;
    p.rho1 = p.rho2 = 0.0;
    p.max_outer_iterations = 50;
    const auto sol = solve_rgw(D, Db, mu, nu, Coupling::product(mu, nu), p);
    EXPECT_EQ(sol.alpha.weights(), mu.weights());
    EXPECT_EQ(sol.beta.weights(), nu.weights());
    for (const auto& d : sol.report.iterate_diffs) {
        EXPECT_EQ(d.alpha, 0.0);
        EXPECT_EQ(d.beta, 0.0);
    }
}

TEST(SolveRgw, SinglePoint)
{
    const CostMatrix z(Matrix::Zero(1, 1));
    const auto one = ProbabilityVector::uniform(1);
    RgwParams p;
    p.t = 1.0;
    p.outer_tolerance = 1e-12;
    p.max_outer_iterations = 5000;
    const auto sol = solve_rgw(z, z, one, one, Coupling(Matrix::Constant(1, 1, 0.3)), p);
    // F(pi) = (tau1 + tau2)(pi log pi - pi + 1) is minimized at pi = 1.
    EXPECT_NEAR(sol.pi(0, 0), 1.0, 1e-8);
    EXPECT_EQ(sol.alpha[0], 1.0);
    EXPECT_EQ(sol.beta[0], 1.0);
}

TEST(SolveRgw, InitialCouplingChecks)
{
    const auto u = ProbabilityVector::uniform(2);
    try {
        solve_rgw(swap2(), swap2(), u, u, Coupling(Matrix::Constant(2, 2, 1.5)), RgwParams{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::infeasible_init);
    }
    try {
        solve_rgw(swap2(), swap2(), u, u, Matrix(Matrix::Constant(2, 2, -0.1)), RgwParams{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::infeasible_init);
    }
    EXPECT_THROW(solve_rgw(swap2(), swap2(), u, ProbabilityVector::uniform(3), Coupling::uniform(2, 2), RgwParams{}),
                 Error);
}

TEST(SolveRgw, WarmStartMustBeFeasible)
{
    const auto u = ProbabilityVector::uniform(2);
    const ProbabilityVector far((Vector(2) << 0.99, 0.01).finished());
    RgwParams p;
    EXPECT_THROW(solve_rgw(swap2(), swap2(), u, u, WarmStart{Coupling::uniform(2, 2), far, u}, p), Error);
    p.max_outer_iterations = 3;
    const ProbabilityVector near((Vector(2) << 0.55, 0.45).finished());
    const auto sol = solve_rgw(swap2(), swap2(), u, u, WarmStart{Coupling::uniform(2, 2), near, u}, p);
    EXPECT_NEAR(sol.report.objective_trace.front(),
                rgw_objective(swap2(), swap2(), Coupling::uniform(2, 2), near, u, p.tau1, p.tau2), 1e-15);
}

TEST(SolveRgw, FinalMarginalsInsideBalls)
{
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto D = oracle::random_metric(6, rng), Db = oracle::random_metric(5, rng);
        const auto mu = oracle::random_simplex(6, rng), nu = oracle::random_simplex(5, rng);
        RgwParams p;
        p.t = 1.0;
        p.rho1 = 0.05;
        p.rho2 = 0.1;
        p.max_outer_iterations = 300;
        const auto sol = solve_rgw(D, Db, mu, nu, Coupling::product(mu, nu), p);
        EXPECT_LE(sol.report.final_kl_mu_alpha, p.rho1 + 1e-8);
        EXPECT_LE(sol.report.final_kl_nu_beta, p.rho2 + 1e-8);
        EXPECT_LE(sol.report.max_pi_entry, 1.0 + 1e-9);
    }
}

TEST(SolveRgw, TheoreticalStepDescends)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto D = oracle::random_metric(6, rng), Db = oracle::random_metric(7, rng);
        const auto mu = oracle::random_simplex(6, rng), nu = oracle::random_simplex(7, rng);
        RgwParams p;
        p.step_mode = StepMode::theoretical;
        p.max_outer_iterations = 300;
        const auto sol = solve_rgw(D, Db, mu, nu, Coupling::product(mu, nu), p);
        EXPECT_NEAR(sol.report.step_t, 0.99 / lipschitz_constant(D, Db), 1e-15);
        const auto& tr = sol.report.objective_trace;
        for (std::size_t k = 1; k < tr.size(); ++k) EXPECT_LE(tr[k], tr[k - 1] + 1e-9) << "trial " << trial << " k " << k;
        EXPECT_LE(sol.report.max_pi_entry, 1.0 + 1e-9);
        EXPECT_EQ(sol.report.descent_violations, 0);
    }
}

TEST(SolveRgw, HalfTheoreticalStepDescends)
{
    std::mt19937_64 rng(4);
    const auto D = oracle::random_metric(5, rng), Db = oracle::random_metric(5, rng);
    const auto mu = ProbabilityVector::uniform(5);
    RgwParams p;
    p.t = 0.5 * theoretical_step_bound(D, Db);
    EXPECT_GT(p.t, 0.0);
    p.max_outer_iterations = 200;
    const auto sol = solve_rgw(D, Db, mu, mu, Coupling::uniform(5, 5), p);
    const auto& tr = sol.report.objective_trace;
    for (std::size_t k = 1; k < tr.size(); ++k) EXPECT_LE(tr[k], tr[k - 1] + 1e-9);
}

TEST(SolveRgw, PinnedLimitApproachesBalanced)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const auto D = oracle::random_metric(5, rng), Db = oracle::random_metric(5, rng);
        const auto mu = oracle::random_simplex(5, rng), nu = oracle::random_simplex(5, rng);
        RgwParams p;
        p.rho1 = p.rho2 = 0.0;
        p.tau1 = p.tau2 = 1e3;
        p.t = 0.1;
        const auto r = solve_rgw(D, Db, mu, nu, Coupling::product(mu, nu), p);
        BalancedParams b;
        b.t = 0.1;
        const auto bal = solve_balanced_gw(D, Db, mu, nu, Coupling::product(mu, nu), b);
        EXPECT_LE((r.pi.row_marginal() - mu.weights()).cwiseAbs().maxCoeff(), 1e-2);
        EXPECT_LE((r.pi.col_marginal() - nu.weights()).cwiseAbs().maxCoeff(), 1e-2);
        const double qr = gw_quadratic_value(D, Db, r.pi), qb = gw_quadratic_value(D, Db, bal.pi);
        EXPECT_LE(std::abs(qr - qb), 0.05 * qb);
    }
}

TEST(SolveRgw, IdenticalTenPointSpacesBecomeStationary)
{
    std::mt19937_64 rng(6);
    const auto D = oracle::random_metric(10, rng);
    const auto u = ProbabilityVector::uniform(10);
    const auto sol = solve_rgw(D, D, u, u, Coupling::uniform(10, 10), RgwParams{});
    EXPECT_LT(stationarity_measure(sol.report, sol.report.iterations), 1e-4);
}

TEST(StepBound, Examples)
{
    EXPECT_NEAR(theoretical_step_bound(swap2(), swap2()), 1.0 / std::sqrt(2.0), 1e-15);
    const CostMatrix z(Matrix::Zero(2, 2));
    try {
        theoretical_step_bound(z, z);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::zero_lipschitz);
    }
}

TEST(Stationarity, Measure)
{
    std::mt19937_64 rng(7);
    const auto D = oracle::random_metric(4, rng), Db = oracle::random_metric(4, rng);
    const auto u = ProbabilityVector::uniform(4);
    RgwParams p;
    p.t = 1.0;
    p.max_outer_iterations = 100;
    p.outer_tolerance = 0.0;
    const auto sol = solve_rgw(D, Db, u, u, Coupling::uniform(4, 4), p);
    const auto& r = sol.report;
    EXPECT_EQ(stationarity_measure(r, 1), r.iterate_diffs[0].sum());
    for (int K = 2; K <= r.iterations; ++K) EXPECT_LE(stationarity_measure(r, K), stationarity_measure(r, K - 1));
    EXPECT_EQ(stationarity_measure(r, r.iterations), r.stationarity_measure);
    EXPECT_THROW(stationarity_measure(r, 0), Error);
    EXPECT_THROW(stationarity_measure(r, r.iterations + 1), Error);

    p.outer_tolerance = 1e-6;
    p.max_outer_iterations = 5000;
    const auto conv = solve_rgw(D, Db, u, u, Coupling::uniform(4, 4), p);
    ASSERT_TRUE(conv.report.converged);
    EXPECT_LE(conv.report.stationarity_measure, 1e-6);
    EXPECT_LE(conv.report.iterate_diffs.back().sum(), 1e-6);
}

TEST(SolveBalanced, Examples)
{
    const auto u = ProbabilityVector::uniform(2);
    BalancedParams b;
    b.t = 1.0;
    b.outer_tolerance = 1e-10;
    const auto sol = solve_balanced_gw(swap2(), swap2(), u, u, nudged_identity(2, 0.1), b);
    EXPECT_LE(sol.report.final_objective(), 1e-6);
    EXPECT_TRUE(argmax_is_identity(sol.pi));

    const CostMatrix z(Matrix::Zero(1, 1));
    const auto one = ProbabilityVector::uniform(1);
    const auto single = solve_balanced_gw(z, z, one, one, Coupling(Matrix::Constant(1, 1, 0.4)), b);
    EXPECT_NEAR(single.pi(0, 0), 1.0, 1e-12);

    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const auto D = oracle::random_metric(5, rng), Db = oracle::random_metric(4, rng);
        const auto mu = oracle::random_simplex(5, rng), nu = oracle::random_simplex(4, rng);
        BalancedParams q;
        q.t = 0.5;
        q.max_outer_iterations = 100;
        const auto r = solve_balanced_gw(D, Db, mu, nu, Coupling::uniform(5, 4), q);
        EXPECT_LE((r.pi.row_marginal() - mu.weights()).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LE((r.pi.col_marginal() - nu.weights()).cwiseAbs().maxCoeff(), 1e-8);
    }
}
