#include <rgw/robustness.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rgw;

namespace {

ContaminationSpec two_atom_spec(double epsilon)
{
    // KL(a, c) = 0.5 log(0.5 / 0.9) + 0.5 log(0.5 / 0.1)
    return {ProbabilityVector((Vector(2) << 0.9, 0.1).finished()), ProbabilityVector((Vector(2) << 0.5, 0.5).finished()),
            epsilon};
}

} // namespace

TEST(Contamination, Validation)
{
    EXPECT_THROW(two_atom_spec(-0.1).validate(), Error);
    EXPECT_THROW(two_atom_spec(1.5).mixture(), Error);
    ContaminationSpec bad{ProbabilityVector::uniform(2), ProbabilityVector::uniform(3), 0.1};
    EXPECT_THROW(bad.validate(), Error);
    const auto mixed = two_atom_spec(0.25).mixture();
    EXPECT_NEAR(mixed[0], 0.75 * 0.9 + 0.25 * 0.5, 1e-15);
}

TEST(Bound, CleanDataGivesGwClean)
{
    const auto spec = two_atom_spec(0.0);
    EXPECT_EQ(theorem1_bound(0.37, spec, spec, 0.0, 0.0, 0.1, 0.1), 0.37);
    EXPECT_EQ(theorem1_bound(0.37, spec, spec, 1.0, 2.0, 5.0, 5.0), 0.37);
}

TEST(Bound, RecommendedRhoCollapsesToGwClean)
{
    for (double eps : {0.01, 0.1, 0.3, 0.9}) {
        const auto spec = two_atom_spec(eps);
        const double rho = recommended_rho(spec);
        EXPECT_NEAR(theorem1_bound(0.5, spec, clean_spec(3), rho, 0.0, 0.1, 0.1), 0.5, 1e-12);
    }
}

TEST(Bound, RecommendedRhoExample)
{
    const auto spec = two_atom_spec(0.1);
    const double kl = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
    EXPECT_NEAR(recommended_rho(spec), 0.1 * kl, 1e-15);
    EXPECT_EQ(recommended_rho(two_atom_spec(0.0)), 0.0);
}

TEST(Bound, ZeroRhoExample)
{
    const auto spec = two_atom_spec(0.2);
    const double kl_ca = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
    EXPECT_NEAR(theorem1_bound(0.0, spec, clean_spec(1), 0.0, 0.0, 0.1, 0.1), 0.2 * 0.1 * kl_ca, 1e-15);
    const auto term = theorem1_term(spec, 0.0, 0.1);
    EXPECT_EQ(term.active_fraction, 0.2);
    EXPECT_NEAR(term.kl_clean_outlier, kl_ca, 1e-15);
}

TEST(Bound, NonIncreasingInRho)
{
    const auto spec = two_atom_spec(0.3);
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 40; ++k) {
        const double b = theorem1_bound(0.1, spec, clean_spec(2), 0.01 * k, 0.0, 0.1, 0.1);
        EXPECT_LE(b, prev);
        EXPECT_GE(b, 0.1);
        prev = b;
    }
}

TEST(Bound, LinearInTau)
{
    const auto spec = two_atom_spec(0.3);
    const double base = theorem1_bound(0.0, spec, clean_spec(2), 0.01, 0.0, 1.0, 1.0);
    for (double tau : {0.0, 0.5, 2.0, 7.0})
        EXPECT_NEAR(theorem1_bound(0.0, spec, clean_spec(2), 0.01, 0.0, tau, 1.0), tau * base, 1e-14);
}

TEST(Bound, DisjointSupports)
{
    const ContaminationSpec spec{ProbabilityVector((Vector(2) << 1.0, 0.0).finished()),
                                 ProbabilityVector((Vector(2) << 0.0, 1.0).finished()), 0.1};
    try {
        theorem1_bound(0.0, spec, clean_spec(2), 0.5, 0.0, 0.1, 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::divergence_infinite);
    }
    EXPECT_THROW(recommended_rho(spec), Error);
    EXPECT_TRUE(std::isinf(theorem1_term(spec, 0.5, 0.1).kl_outlier_clean));
}

TEST(Certificate, StaysInsideBall)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto spec = overlapping_spec(5, 3, 0.01 + 0.2 * u(rng), 0.5 * u(rng));
        const double rho = u(rng) * 2.0 * recommended_rho(spec);
        const auto alpha = relaxed_certificate_marginal(spec, rho);
        EXPECT_LE(kl_divergence(spec.mixture(), alpha), rho + 1e-12);
    }
    const auto spec = overlapping_spec(5, 3, 0.01, 0.2);
    const auto full = relaxed_certificate_marginal(spec, recommended_rho(spec));
    EXPECT_LE((full.weights() - spec.clean_weights.weights()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(OverlappingSpec, Layout)
{
    const auto spec = overlapping_spec(4, 2, 0.1, 0.2);
    EXPECT_NEAR(spec.clean_weights[0], 0.9 / 4, 1e-15);
    EXPECT_NEAR(spec.clean_weights[5], 0.1 / 2, 1e-15);
    EXPECT_NEAR(spec.outlier_weights[0], 0.1 / 4, 1e-15);
    EXPECT_NEAR(spec.outlier_weights[4], 0.9 / 2, 1e-15);
    EXPECT_THROW(overlapping_spec(0, 2, 0.1, 0.2), Error);
    EXPECT_THROW(overlapping_spec(2, 2, 1.0, 0.2), Error);
}

TEST(ToyClouds, ShapesAndDeterminism)
{
    const auto a = make_toy_clouds(12, 15, 3);
    const auto b = make_toy_clouds(12, 15, 3);
    EXPECT_EQ(a.source.rows(), 12);
    EXPECT_EQ(a.target.rows(), 15);
    EXPECT_EQ(a.source.cols(), 2);
    EXPECT_EQ(a.source, b.source);
    EXPECT_EQ(a.target, b.target);
    std::mt19937_64 rng(1);
    const OutlierBox box;
    const Matrix out = sample_box(50, box, rng);
    EXPECT_GE(out.col(0).minCoeff(), box.x_min);
    EXPECT_LE(out.col(0).maxCoeff(), box.x_max);
    EXPECT_GE(out.col(1).minCoeff(), box.y_min);
    EXPECT_LE(out.col(1).maxCoeff(), box.y_max);
    const Matrix rot = rotate_points(a.source, 0.7);
    EXPECT_NEAR(pairwise_distances(rot).entries().maxCoeff(), pairwise_distances(a.source).entries().maxCoeff(), 1e-12);
}

TEST(Sweep, RgwStaysBelowBound)
{
    const auto clouds = make_toy_clouds(15, 18, 2);
    SweepOptions opt;
    opt.n_outliers = 4;
    opt.params.max_outer_iterations = 400;
    opt.balanced.max_outer_iterations = 400;
    const auto rows = contamination_sweep(clouds.source, clouds.target, OutlierBox{}, {0.0, 0.1, 0.3}, opt);
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) {
        ASSERT_TRUE(r.error.empty()) << r.error;
        ASSERT_TRUE(r.bound.has_value());
        EXPECT_NEAR(*r.bound, r.gw_clean, 1e-12);
        EXPECT_LE(r.rgw_value, *r.bound + 1e-6);
        EXPECT_LE(r.rgw_value, r.balanced_value + 1e-6);
    }
    EXPECT_GT(rows[2].balanced_value, rows[0].balanced_value);

    opt.jobs = 3;
    const auto again = contamination_sweep(clouds.source, clouds.target, OutlierBox{}, {0.0, 0.1, 0.3}, opt);
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].rgw_value, again[i].rgw_value);
}

TEST(Sweep, RhoGrid)
{
    const auto clouds = make_toy_clouds(12, 14, 5);
    SweepOptions opt;
    opt.n_outliers = 3;
    opt.params.max_outer_iterations = 300;
    opt.balanced.max_outer_iterations = 300;
    const auto rows = rho_sweep(clouds.source, clouds.target, OutlierBox{}, 0.2, {0.0, 0.2, 0.5, 1.0, 2.0}, opt);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ASSERT_TRUE(rows[i].error.empty()) << rows[i].error;
        ASSERT_TRUE(rows[i].bound.has_value());
        EXPECT_LE(rows[i].rgw_value, *rows[i].bound + 1e-6);
        if (i > 0) EXPECT_LE(*rows[i].bound, *rows[i - 1].bound);
    }
    EXPECT_THROW(rho_sweep(clouds.source, clouds.target, OutlierBox{}, 0.2, {-1.0}, opt), Error);
    EXPECT_THROW(contamination_sweep(clouds.source, clouds.target, OutlierBox{}, {1.0}, opt), Error);
}
