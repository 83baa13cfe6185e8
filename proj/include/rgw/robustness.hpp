#pragma once
#include <rgw/bpalm.hpp>
#include <rgw/error.hpp>
#include <rgw/gw_kernel.hpp>
#include <rgw/measures.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace rgw {

/// Huber model (1 - epsilon) * clean + epsilon * outlier on a common support.
struct ContaminationSpec
{
    ProbabilityVector clean_weights;
    ProbabilityVector outlier_weights;
    double epsilon = 0.0;

    void validate() const
    {
        detail::require(epsilon >= 0.0 && epsilon <= 1.0, ErrorCode::epsilon_out_of_range,
                        "epsilon = " + std::to_string(epsilon));
        detail::require(clean_weights.size() == outlier_weights.size(), ErrorCode::dimension_mismatch,
                        "clean and outlier weights differ in length");
    }

    ProbabilityVector mixture() const
    {
        validate();
        return huber_mixture(clean_weights, outlier_weights, epsilon);
    }
};

namespace detail {

inline double kl_or_infinity(const Vector& a, const Vector& b)
{
    try {
        return kl_raw(a, b);
    } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
    }
}

} // namespace detail

/// One side of the robust bound: max(0, eps - rho / KL(a, c)) * tau * KL(c, a).
struct BoundTerm
{
    double kl_outlier_clean = 0.0;  ///< KL(mu_a, mu_c)
    double kl_clean_outlier = 0.0;  ///< KL(mu_c, mu_a)
    double active_fraction = 0.0;   ///< max(0, eps - rho / KL(mu_a, mu_c))
    double value = 0.0;
};

/// rho / infinity is taken as 0. A zero fraction contributes 0 even when KL(c, a) is infinite.
inline BoundTerm theorem1_term(const ContaminationSpec& spec, double rho, double tau)
{
    spec.validate();
    detail::require(rho >= 0.0 && tau >= 0.0, ErrorCode::invalid_argument, "rho and tau must be nonnegative");
    BoundTerm term;
    term.kl_outlier_clean = detail::kl_or_infinity(spec.outlier_weights.weights(), spec.clean_weights.weights());
    term.kl_clean_outlier = detail::kl_or_infinity(spec.clean_weights.weights(), spec.outlier_weights.weights());
    if (spec.epsilon == 0.0 || term.kl_outlier_clean == 0.0) return term;
    const double ratio = std::isinf(term.kl_outlier_clean) ? 0.0 : rho / term.kl_outlier_clean;
    term.active_fraction = std::max(0.0, spec.epsilon - ratio);
    if (term.active_fraction == 0.0 || tau == 0.0) return term;
    term.value = term.active_fraction * tau * term.kl_clean_outlier;
    return term;
}

/// Right-hand side of the robust GW upper bound. Throws DivergenceInfinite when a
/// term is infinite, which happens for disjoint clean and outlier supports.
inline double theorem1_bound(double gw_clean, const ContaminationSpec& spec_mu, const ContaminationSpec& spec_nu,
                             double rho1, double rho2, double tau1, double tau2)
{
    const BoundTerm a = theorem1_term(spec_mu, rho1, tau1);
    const BoundTerm b = theorem1_term(spec_nu, rho2, tau2);
    detail::require(std::isfinite(a.value), ErrorCode::divergence_infinite,
                    "source term is infinite: KL(clean, outlier) = inf with active fraction "
                        + std::to_string(a.active_fraction));
    detail::require(std::isfinite(b.value), ErrorCode::divergence_infinite,
                    "target term is infinite: KL(clean, outlier) = inf with active fraction "
                        + std::to_string(b.active_fraction));
    return gw_clean + a.value + b.value;
}

/// epsilon * KL(outlier, clean); the radius at which the bound collapses to GW(clean).
inline double recommended_rho(const ContaminationSpec& spec)
{
    spec.validate();
    if (spec.epsilon == 0.0) return 0.0;
    const double kl = detail::kl_or_infinity(spec.outlier_weights.weights(), spec.clean_weights.weights());
    detail::require(std::isfinite(kl), ErrorCode::divergence_infinite,
                    "KL(outlier, clean) is infinite; the supports do not nest");
    return spec.epsilon * kl;
}

/// (1 - gamma) * mixture + gamma * clean with the largest gamma the radius allows.
/// It lies in the KL ball of radius rho around the mixture.
inline ProbabilityVector relaxed_certificate_marginal(const ContaminationSpec& spec, double rho)
{
    const ProbabilityVector mixed = spec.mixture();
    if (spec.epsilon == 0.0) return mixed;
    const double kl = detail::kl_or_infinity(spec.outlier_weights.weights(), spec.clean_weights.weights());
    double gamma = 1.0;
    if (std::isinf(kl)) gamma = 0.0;
    else if (kl > 0.0) gamma = std::min(1.0, rho / (spec.epsilon * kl));
    if (gamma == 0.0) return mixed;
    Vector w = (1.0 - gamma) * mixed.weights() + gamma * spec.clean_weights.weights();
    return ProbabilityVector::normalized(std::move(w));
}

// 2D shapes ---------------------------------------------------------------------------

/// Axis-aligned box outliers are drawn from.
struct OutlierBox
{
    double x_min = -3.0;
    double x_max = -2.5;
    double y_min = 0.0;
    double y_max = 0.5;
};

/// Noisy open spiral arc; it has no rotational or mirror symmetry.
inline Matrix sample_spiral_shape(int count, std::mt19937_64& rng, double noise = 0.02)
{
    detail::require(count >= 1, ErrorCode::invalid_argument, "shape needs at least one point");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, noise);
    Matrix points(count, 2);
    for (int i = 0; i < count; ++i) {
        const double s = unit(rng);
        const double angle = 1.5 * std::numbers::pi * s;
        const double radius = 0.3 + 0.7 * s;
        points(i, 0) = radius * std::cos(angle) + jitter(rng);
        points(i, 1) = radius * std::sin(angle) + jitter(rng);
    }
    return points;
}

inline Matrix rotate_points(const Matrix& points, double angle)
{
    Eigen::Matrix2d rotation;
    rotation << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return points * rotation.transpose();
}

inline Matrix sample_box(int count, const OutlierBox& box, std::mt19937_64& rng)
{
    detail::require(box.x_min <= box.x_max && box.y_min <= box.y_max, ErrorCode::invalid_argument,
                    "outlier box is empty");
    std::uniform_real_distribution<double> ux(box.x_min, box.x_max);
    std::uniform_real_distribution<double> uy(box.y_min, box.y_max);
    Matrix points(count, 2);
    for (int i = 0; i < count; ++i) {
        points(i, 0) = ux(rng);
        points(i, 1) = uy(rng);
    }
    return points;
}

/// Source atoms are the clean points followed by the outlier points. The clean weight
/// puts `overlap` mass on the outliers and the outlier weight puts `overlap` mass on
/// the clean points, so both KL divergences stay finite. overlap = 0 gives disjoint supports.
inline ContaminationSpec overlapping_spec(int clean_count, int outlier_count, double overlap, double epsilon)
{
    detail::require(clean_count >= 1 && outlier_count >= 1, ErrorCode::invalid_argument,
                    "need clean and outlier atoms");
    detail::require(overlap >= 0.0 && overlap < 1.0, ErrorCode::invalid_argument, "overlap must lie in [0, 1)");
    const Eigen::Index n = clean_count + outlier_count;
    Vector clean(n), outlier(n);
    clean.head(clean_count).setConstant((1.0 - overlap) / clean_count);
    clean.tail(outlier_count).setConstant(overlap / outlier_count);
    outlier.head(clean_count).setConstant(overlap / clean_count);
    outlier.tail(outlier_count).setConstant((1.0 - overlap) / outlier_count);
    return {ProbabilityVector::normalized(clean), ProbabilityVector::normalized(outlier), epsilon};
}

/// Clean target side: no contamination.
inline ContaminationSpec clean_spec(Eigen::Index size)
{
    const auto u = ProbabilityVector::uniform(size);
    return {u, u, 0.0};
}

struct ToyClouds
{
    Matrix source;
    Matrix target;
};

/// Clean spiral source and an independently sampled, rotated spiral target.
inline ToyClouds make_toy_clouds(int n_source, int n_target, std::uint64_t seed,
                                 double rotation = std::numbers::pi / 3.0)
{
    detail::require(n_source >= 1 && n_target >= 1, ErrorCode::invalid_argument, "toy cloud sizes must be positive");
    std::mt19937_64 rng(seed);
    Matrix source = sample_spiral_shape(n_source, rng);
    Matrix target = rotate_points(sample_spiral_shape(n_target, rng), rotation);
    return {std::move(source), std::move(target)};
}

// Sweeps -----------------------------------------------------------------------------

struct SweepOptions
{
    RgwParams params{};
    BalancedParams balanced{};
    int n_outliers = 10;
    double overlap = 1e-3;
    std::uint64_t seed = 0;
    /// Replaces recommended_rho for the source radius when set.
    std::optional<double> rho1{};
    int jobs = 1;
};

struct SweepRow
{
    double epsilon = 0.0;
    double rho1 = 0.0;
    double rho2 = 0.0;
    double rgw_value = std::numeric_limits<double>::quiet_NaN();
    double balanced_value = std::numeric_limits<double>::quiet_NaN();
    double gw_clean = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> bound{};  ///< empty when unbounded
    bool converged_rgw = false;
    bool converged_balanced = false;
    std::uint64_t seed = 0;
    std::string error;
};

namespace detail {

inline std::vector<Eigen::Index> support_of(const Vector& w)
{
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) idx.push_back(i);
    return idx;
}

/// Balanced GW restricted to the support of mu. The plan is returned at full size
/// with zero rows on the dropped atoms.
inline BalancedSolution balanced_on_support(const CostMatrix& D, const CostMatrix& Dbar, const ProbabilityVector& mu,
                                            const ProbabilityVector& nu, const BalancedParams& params)
{
    const auto idx = support_of(mu.weights());
    if (static_cast<Eigen::Index>(idx.size()) == mu.size())
        return solve_balanced_gw(D, Dbar, mu, nu, Coupling::product(mu, nu), params);
    const Eigen::Index k = static_cast<Eigen::Index>(idx.size());
    Matrix sub(k, k);
    Vector w(k);
    for (Eigen::Index a = 0; a < k; ++a) {
        w[a] = mu[idx[a]];
        for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = D(idx[a], idx[b]);
    }
    const ProbabilityVector sub_mu = ProbabilityVector::normalized(w);
    auto sol = solve_balanced_gw(CostMatrix(sub), Dbar, sub_mu, nu, Coupling::product(sub_mu, nu), params);
    Matrix full = Matrix::Zero(mu.size(), nu.size());
    for (Eigen::Index a = 0; a < k; ++a) full.row(idx[a]) = sol.pi.entries().row(a);
    return {Coupling(std::move(full)), std::move(sol.report)};
}

/// Everything a sweep row needs that does not depend on epsilon.
struct SweepContext
{
    CostMatrix D;
    CostMatrix Dbar;
    ProbabilityVector nu;
    ContaminationSpec nu_spec;
    int clean_count = 0;
    int outlier_count = 0;
    double gw_clean = 0.0;
    Coupling clean_plan;
};

inline SweepContext make_sweep_context(const Matrix& clean_source, const Matrix& clean_target, const OutlierBox& box,
                                       const SweepOptions& options)
{
    detail::require(clean_source.cols() == 2 && clean_target.cols() == 2, ErrorCode::invalid_argument,
                    "point clouds must be 2D");
    detail::require(options.n_outliers >= 1, ErrorCode::invalid_params, "need at least one outlier");
    // Outliers are placed from their own stream so that the clean clouds can come from anywhere.
    std::mt19937_64 rng(options.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
    Matrix source(clean_source.rows() + options.n_outliers, 2);
    source << clean_source, sample_box(options.n_outliers, box, rng);

    SweepContext ctx{pairwise_distances(source), pairwise_distances(clean_target),
                     ProbabilityVector::uniform(clean_target.rows()), clean_spec(clean_target.rows()),
                     static_cast<int>(clean_source.rows()), options.n_outliers};
    const ContaminationSpec clean_only = overlapping_spec(ctx.clean_count, ctx.outlier_count, options.overlap, 0.0);
    auto sol = balanced_on_support(ctx.D, ctx.Dbar, clean_only.clean_weights, ctx.nu, options.balanced);
    ctx.gw_clean = sol.report.final_objective();
    ctx.clean_plan = std::move(sol.pi);
    return ctx;
}

inline SweepRow sweep_row(const SweepContext& ctx, double epsilon, std::optional<double> rho1_override,
                          const SweepOptions& options)
{
    SweepRow row;
    row.epsilon = epsilon;
    row.seed = options.seed;
    row.gw_clean = ctx.gw_clean;
    try {
        const ContaminationSpec mu_spec = overlapping_spec(ctx.clean_count, ctx.outlier_count, options.overlap, epsilon);
        const ProbabilityVector mu = mu_spec.mixture();
        row.rho1 = rho1_override ? *rho1_override : recommended_rho(mu_spec);
        row.rho2 = recommended_rho(ctx.nu_spec);

        RgwParams params = options.params;
        params.rho1 = row.rho1;
        params.rho2 = row.rho2;
        // Two starts: the product plan, and the clean plan with the relaxed marginals the
        // bound is built from. The lower final objective is reported.
        const auto from_product = solve_rgw(ctx.D, ctx.Dbar, mu, ctx.nu, Coupling::product(mu, ctx.nu), params);
        const WarmStart certificate{ctx.clean_plan, relaxed_certificate_marginal(mu_spec, row.rho1),
                                    relaxed_certificate_marginal(ctx.nu_spec, row.rho2)};
        const auto from_clean = solve_rgw(ctx.D, ctx.Dbar, mu, ctx.nu, certificate, params);
        const auto& best = from_clean.report.final_objective() < from_product.report.final_objective() ? from_clean
                                                                                                        : from_product;
        row.rgw_value = best.report.final_objective();
        row.converged_rgw = best.report.converged;

        const auto balanced = balanced_on_support(ctx.D, ctx.Dbar, mu, ctx.nu, options.balanced);
        row.balanced_value = balanced.report.final_objective();
        row.converged_balanced = balanced.report.converged;

        try {
            row.bound = theorem1_bound(ctx.gw_clean, mu_spec, ctx.nu_spec, row.rho1, row.rho2, params.tau1,
                                       params.tau2);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::divergence_infinite) throw;
        }
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

template <class F>
void run_indexed(std::size_t count, int jobs, F&& body)
{
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) body(i);
    };
    jobs = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(count, 1)));
    if (jobs == 1) {
        worker();
        return;
    }
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
}

} // namespace detail

/// One row per epsilon (in input order): RGW value, balanced value and the robust bound.
/// The source radius follows recommended_rho unless options.rho1 is set.
inline std::vector<SweepRow> contamination_sweep(const Matrix& clean_source, const Matrix& clean_target,
                                                 const OutlierBox& box, const std::vector<double>& epsilons,
                                                 const SweepOptions& options)
{
    for (double e : epsilons)
        detail::require(e >= 0.0 && e < 1.0, ErrorCode::epsilon_out_of_range, "epsilon = " + std::to_string(e));
    const auto ctx = detail::make_sweep_context(clean_source, clean_target, box, options);
    std::vector<SweepRow> rows(epsilons.size());
    detail::run_indexed(rows.size(), options.jobs,
                        [&](std::size_t i) { rows[i] = detail::sweep_row(ctx, epsilons[i], options.rho1, options); });
    return rows;
}

/// Fixed epsilon, varying source radius.
inline std::vector<SweepRow> rho_sweep(const Matrix& clean_source, const Matrix& clean_target, const OutlierBox& box,
                                       double epsilon, const std::vector<double>& rhos, const SweepOptions& options)
{
    detail::require(epsilon >= 0.0 && epsilon < 1.0, ErrorCode::epsilon_out_of_range,
                    "epsilon = " + std::to_string(epsilon));
    for (double r : rhos) detail::require(r >= 0.0, ErrorCode::invalid_params, "rho values must be >= 0");
    const auto ctx = detail::make_sweep_context(clean_source, clean_target, box, options);
    std::vector<SweepRow> rows(rhos.size());
    detail::run_indexed(rows.size(), options.jobs,
                        [&](std::size_t i) { rows[i] = detail::sweep_row(ctx, epsilon, rhos[i], options); });
    return rows;
}

} // namespace rgw
