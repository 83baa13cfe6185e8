#pragma once
#include <rgw/error.hpp>
#include <rgw/measures.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

/// Marginal subproblems of BPALM:
///
///     min_{alpha in simplex, KL(mu, alpha) <= rho} KL(pi1, alpha) + (1/c) KL(alpha_prev, alpha).
///
/// For a multiplier w >= 0 the Lagrangian minimizer is
///
///     alpha(w) = (pi1 + alpha_prev / c + w mu) / (sum(pi1) + 1/c + w),
///
/// and p(w) = KL(mu, alpha(w)) - rho is convex and non-increasing on w >= 0. Either
/// p(0) <= 0 (constraint inactive) or Newton from w = 0 climbs monotonically to the
/// unique root. The same routine serves the column marginal beta.
namespace rgw {

inline constexpr double root_tolerance = 1e-10;
inline constexpr double root_step_tolerance = 1e-14;
inline constexpr int newton_iteration_cap = 100;

struct DualRootResult
{
    double w_star = 0.0;
    int newton_iterations = 0;
    /// |p(w*)|, or 0 when the constraint is inactive.
    double residual = 0.0;
    bool used_bisection = false;
    /// Newton iterates w_0 = 0, w_1, ... (for monotonicity checks).
    std::vector<double> newton_path;
};

struct MarginalSolveResult
{
    ProbabilityVector value;
    DualRootResult root;
};

struct DualValue
{
    double value;
    double derivative;
};

namespace detail {

inline void check_marginal_inputs(const PositiveMeasure& pi_marginal, const ProbabilityVector& prev,
                                  const ProbabilityVector& reference, double step)
{
    require(pi_marginal.size() == prev.size() && prev.size() == reference.size(), ErrorCode::dimension_mismatch,
            "marginal subproblem vectors differ in length");
    require(step > 0.0 && std::isfinite(step), ErrorCode::invalid_argument, "step must be positive");
}

} // namespace detail

/// Closed-form minimizer alpha(w) of the Lagrangian at multiplier w.
inline ProbabilityVector alpha_closed_form(const PositiveMeasure& pi_marginal, const ProbabilityVector& prev,
                                           const ProbabilityVector& reference, double step, double w)
{
    detail::check_marginal_inputs(pi_marginal, prev, reference, step);
    detail::require(w >= 0.0, ErrorCode::invalid_argument, "multiplier w must be nonnegative");
    if (std::isinf(w)) return reference;
    Vector numer = pi_marginal.weights() + prev.weights() / step + w * reference.weights();
    // sum(numer) equals sum(pi1) + 1/c + w; summing the numerators keeps the result on the simplex.
    numer /= numer.sum();
    return ProbabilityVector(std::move(numer));
}

/// p(w) = KL(reference, alpha(w)) - rho together with its analytic derivative.
inline DualValue dual_function_p(double w, const PositiveMeasure& pi_marginal, const ProbabilityVector& prev,
                                 const ProbabilityVector& reference, double step, double rho)
{
    detail::check_marginal_inputs(pi_marginal, prev, reference, step);
    detail::require(w >= 0.0, ErrorCode::invalid_argument, "multiplier w must be nonnegative");
    const Vector& mu = reference.weights();
    const Vector s_i = pi_marginal.weights() + prev.weights() / step + w * mu;
    const double s = s_i.sum();
    double value = 0.0;
    double weighted = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (!(mu[i] > 0.0)) continue;
        value += mu[i] * std::log(mu[i] * s / s_i[i]);
        weighted += mu[i] * mu[i] * s / s_i[i];
    }
    return {value - rho, (1.0 - weighted) / s};
}

/// Objective of the marginal subproblem at `candidate`.
inline double marginal_subproblem_objective(const PositiveMeasure& pi_marginal, const ProbabilityVector& prev,
                                            const ProbabilityVector& candidate, double step)
{
    return kl_divergence(pi_marginal, candidate) + kl_divergence(prev, candidate) / step;
}

/// Solves the KL-ball constrained marginal update. Requires rho > 0; a zero radius pins the
/// variable to the reference and is handled by the caller.
inline MarginalSolveResult solve_marginal_subproblem(const PositiveMeasure& pi_marginal,
                                                     const ProbabilityVector& prev,
                                                     const ProbabilityVector& reference, double step, double rho)
{
    detail::check_marginal_inputs(pi_marginal, prev, reference, step);
    detail::require(rho > 0.0 && std::isfinite(rho), ErrorCode::invalid_argument,
                    "rho must be positive (pin the variable when rho = 0)");
    auto p = [&](double w) { return dual_function_p(w, pi_marginal, prev, reference, step, rho); };

    DualRootResult root;
    root.newton_path.push_back(0.0);
    DualValue at = p(0.0);
    if (at.value <= 0.0) {
        return {alpha_closed_form(pi_marginal, prev, reference, step, 0.0), std::move(root)};
    }

    double w = 0.0;
    bool stalled = false;
    // Iterate until the Newton step is negligible, not merely until |p| is small: on a flat
    // dual a small residual still leaves the multiplier far from the root.
    while (at.value > 0.0) {
        if (root.newton_iterations >= newton_iteration_cap || !(at.derivative < 0.0)) {
            stalled = std::abs(at.value) > root_tolerance;
            break;
        }
        const double next = w - at.value / at.derivative;
        if (next - w <= root_step_tolerance * std::max(1.0, w)) break;
        const DualValue next_at = p(next);
        ++root.newton_iterations;
        // Convexity keeps exact Newton iterates left of the root; overshooting past the
        // tolerance means floating point broke the argument.
        if (!std::isfinite(next) || next < w || next_at.value < -root_tolerance) {
            stalled = true;
            break;
        }
        w = next;
        at = next_at;
        root.newton_path.push_back(w);
    }
    if (std::abs(at.value) > root_tolerance) stalled = true;

    if (stalled) {
        // Bisection on [w_lo, w_hi], where p(w_lo) > 0 > p(w_hi).
        double lo = w;
        double hi = std::max(1.0, 2.0 * w);
        while (p(hi).value >= 0.0) {
            lo = hi;
            hi *= 2.0;
            detail::require(std::isfinite(hi), ErrorCode::newton_stalled, "no sign change of p found");
        }
        for (int it = 0; it < 400; ++it) {
            const double mid = 0.5 * (lo + hi);
            at = p(mid);
            w = mid;
            if (std::abs(at.value) <= root_tolerance || mid == lo || mid == hi) break;
            (at.value > 0.0 ? lo : hi) = mid;
        }
        if (at.value > root_tolerance) {
            // Interval exhausted on the infeasible side; the right end is feasible.
            w = hi;
            at = p(hi);
        }
        root.used_bisection = true;
    }
    root.w_star = w;
    root.residual = std::abs(at.value);
    return {alpha_closed_form(pi_marginal, prev, reference, step, w), std::move(root)};
}

} // namespace rgw
