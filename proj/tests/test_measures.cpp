#include <rgw/measures.hpp>
#include <rgw/oracles.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rgw;

namespace {

ProbabilityVector pv(std::initializer_list<double> xs)
{
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return ProbabilityVector(v);
}

PositiveMeasure pm(std::initializer_list<double> xs)
{
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return PositiveMeasure(v);
}

double scalar_kl_sum(const Vector& a, const Vector& b)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a[i] > 0) s += a[i] * std::log(a[i] / b[i]);
        s += b[i] - a[i];
    }
    return s;
}

} // namespace

TEST(ProbabilityVector, RejectsBadInput)
{
    EXPECT_THROW(ProbabilityVector{Vector()}, Error);
    EXPECT_THROW(pv({0.5, 0.6}), Error);
    EXPECT_THROW(pv({1.5, -0.5}), Error);
    EXPECT_NO_THROW(pv({0.25, 0.75}));
    // no silent renormalization
    EXPECT_THROW(pv({0.5, 0.5 + 1e-10}), Error);
    EXPECT_NEAR(ProbabilityVector::normalized(Vector::Constant(3, 2.0))[0], 1.0 / 3.0, 1e-15);
}

TEST(PositiveMeasure, RejectsNegative)
{
    EXPECT_THROW(pm({-1e-3, 1.0}), Error);
    EXPECT_DOUBLE_EQ(pm({0.2, 3.0}).total_mass(), 3.2);
}

TEST(KlDivergence, Examples)
{
    EXPECT_DOUBLE_EQ(kl_divergence(pv({0.5, 0.5}), pv({0.5, 0.5})), 0.0);
    const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    EXPECT_NEAR(kl_divergence(pv({0.5, 0.5}), pv({0.25, 0.75})), expected, 1e-15);
    EXPECT_NEAR(expected, scalar_kl_sum(pv({0.5, 0.5}).weights(), pv({0.25, 0.75}).weights()), 1e-15);
    const double generalized = 0.2 * std::log(0.5) + 0.3 * std::log(3.0) - 0.5 + 0.5;
    EXPECT_NEAR(kl_divergence(pm({0.2, 0.3}), pm({0.4, 0.1})), generalized, 1e-15);
}

TEST(KlDivergence, Errors)
{
    EXPECT_THROW(kl_divergence(pv({0.5, 0.5}), pv({1.0, 0.0})), Error);
    try {
        kl_divergence(pv({0.5, 0.5}), pv({1.0, 0.0}));
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::divergence_infinite);
    }
    try {
        kl_divergence(pv({0.5, 0.5}), pv({1.0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
    }
    // 0 log 0 = 0
    EXPECT_NEAR(kl_divergence(pv({1.0, 0.0}), pv({0.5, 0.5})), std::log(2.0), 1e-15);
    // zero measure against mass-one measure
    EXPECT_DOUBLE_EQ(kl_divergence(pm({0.0, 0.0}), pm({0.5, 0.5})), 1.0);
}

TEST(KlBall, Examples)
{
    const auto mu = pv({0.3, 0.7});
    EXPECT_TRUE(is_in_kl_ball(mu, mu, 0.0));
    EXPECT_FALSE(is_in_kl_ball(pv({0.5, 0.5}), pv({0.25, 0.75}), 0.1));
    EXPECT_TRUE(is_in_kl_ball(pv({0.5, 0.5}), pv({0.25, 0.75}), 0.2));
    EXPECT_THROW(is_in_kl_ball(mu, mu, -1.0), Error);
}

TEST(HuberMixture, Examples)
{
    const auto clean = pv({1.0, 0.0});
    const auto out = pv({0.0, 1.0});
    EXPECT_EQ(huber_mixture(clean, out, 0.0).weights(), clean.weights());
    EXPECT_EQ(huber_mixture(clean, out, 1.0).weights(), out.weights());
    const auto m = huber_mixture(clean, out, 0.1);
    EXPECT_NEAR(m[0], 0.9, 1e-15);
    EXPECT_NEAR(m[1], 0.1, 1e-15);
    try {
        huber_mixture(clean, out, 1.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::epsilon_out_of_range);
    }
}

TEST(KlProperties, NonnegativeAndZeroOnlyAtEquality)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 9);
        const auto a = oracle::random_simplex(n, rng, 0.01, 1.0);
        const auto b = oracle::random_simplex(n, rng, 0.01, 1.0);
        const double kl = kl_divergence(a, b);
        EXPECT_GE(kl, 0.0);
        EXPECT_NEAR(kl_divergence(a, a), 0.0, 1e-15);
        if ((a.weights() - b.weights()).cwiseAbs().maxCoeff() > 1e-3) EXPECT_GT(kl, 0.0);
    }
}

TEST(KlProperties, JointConvexity)
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 7);
        const auto a1 = oracle::random_simplex(n, rng, 0.0, 1.0), b1 = oracle::random_simplex(n, rng, 0.05, 1.0);
        const auto a2 = oracle::random_simplex(n, rng, 0.0, 1.0), b2 = oracle::random_simplex(n, rng, 0.05, 1.0);
        const double lam = unit(rng);
        const PositiveMeasure a(lam * a1.weights() + (1 - lam) * a2.weights());
        const PositiveMeasure b(lam * b1.weights() + (1 - lam) * b2.weights());
        EXPECT_LE(kl_divergence(a, b), lam * kl_divergence(a1, b1) + (1 - lam) * kl_divergence(a2, b2) + 1e-10);
    }
}

TEST(HuberMixture, SumsToOne)
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 10);
        const auto m = huber_mixture(oracle::random_simplex(n, rng, 0.0, 1.0), oracle::random_simplex(n, rng, 0.0, 1.0),
                                     unit(rng));
        EXPECT_NEAR(m.weights().sum(), 1.0, 1e-12);
    }
}
