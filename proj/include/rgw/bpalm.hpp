#pragma once
#include <rgw/error.hpp>
#include <rgw/gw_kernel.hpp>
#include <rgw/marginal_solver.hpp>
#include <rgw/measures.hpp>
#include <rgw/pi_solver.hpp>

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace rgw {

enum class StepMode { practical, theoretical };

inline constexpr std::string_view to_string(StepMode mode)
{
    return mode == StepMode::practical ? "practical" : "theoretical";
}

/// Parameters of the robust GW solve. Defaults follow the subgraph-alignment setup:
/// tau = 0.1, rho = 0.2, t = 0.01, c = r = 0.1.
struct RgwParams
{
    double rho1 = 0.2;
    double rho2 = 0.2;
    double tau1 = 0.1;
    double tau2 = 0.1;
    double t = 0.01;
    double c = 0.1;
    double r = 0.1;
    int max_outer_iterations = 2000;
    double outer_tolerance = 1e-6;
    StepMode step_mode = StepMode::practical;
    /// In theoretical mode t = theoretical_fraction / L_f (strictly below the bound).
    double theoretical_fraction = 0.99;
    SinkhornSettings inner{};

    void validate() const
    {
        auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
        detail::require(rho1 >= 0.0 && std::isfinite(rho1), ErrorCode::invalid_params, "rho1 must be >= 0");
        detail::require(rho2 >= 0.0 && std::isfinite(rho2), ErrorCode::invalid_params, "rho2 must be >= 0");
        detail::require(positive(tau1), ErrorCode::invalid_params, "tau1 must be > 0");
        detail::require(positive(tau2), ErrorCode::invalid_params, "tau2 must be > 0");
        detail::require(positive(t), ErrorCode::invalid_params, "step-t must be > 0");
        detail::require(positive(c), ErrorCode::invalid_params, "step-c must be > 0");
        detail::require(positive(r), ErrorCode::invalid_params, "step-r must be > 0");
        detail::require(max_outer_iterations >= 1, ErrorCode::invalid_params, "max-iters must be >= 1");
        detail::require(outer_tolerance >= 0.0, ErrorCode::invalid_params, "tol must be >= 0");
        detail::require(theoretical_fraction > 0.0 && theoretical_fraction < 1.0, ErrorCode::invalid_params,
                        "theoretical_fraction must lie in (0, 1)");
        inner.validate();
    }
};

struct IterateDiff
{
    double pi = 0.0;     ///< Frobenius norm
    double alpha = 0.0;  ///< Euclidean norm
    double beta = 0.0;   ///< Euclidean norm

    double sum() const { return pi + alpha + beta; }
};

struct SolveReport
{
    /// Objective at the initial point followed by one entry per iteration.
    std::vector<double> objective_trace;
    std::vector<IterateDiff> iterate_diffs;
    double stationarity_measure = std::numeric_limits<double>::infinity();
    double final_kl_mu_alpha = 0.0;
    double final_kl_nu_beta = 0.0;
    int iterations = 0;
    bool converged = false;
    double wall_time = 0.0;
    std::vector<std::string> warnings;

    double step_t = 0.0;
    double lipschitz = 0.0;  ///< only computed in theoretical mode
    long inner_iterations = 0;
    int inner_unconverged = 0;
    int descent_violations = 0;
    double max_objective_increase = 0.0;
    double max_pi_entry = 0.0;

    double final_objective() const
    {
        return objective_trace.empty() ? std::numeric_limits<double>::quiet_NaN() : objective_trace.back();
    }
};

struct RgwSolution
{
    Coupling pi;
    ProbabilityVector alpha;
    ProbabilityVector beta;
    SolveReport report;
};

struct BalancedSolution
{
    Coupling pi;
    SolveReport report;
};

inline constexpr double descent_tolerance = 1e-8;
inline constexpr std::size_t warning_cap = 20;

namespace detail {

inline void warn(SolveReport& report, std::string message)
{
    if (report.warnings.size() < warning_cap) report.warnings.push_back(std::move(message));
}

inline void finish_report(SolveReport& report)
{
    for (const auto& d : report.iterate_diffs) report.stationarity_measure = std::min(report.stationarity_measure, d.sum());
    if (report.inner_unconverged > 0)
        report.warnings.push_back(std::to_string(report.inner_unconverged)
                                  + " inner scaling solves hit max_inner_iterations");
    if (report.descent_violations > 0)
        report.warnings.push_back(std::to_string(report.descent_violations)
                                  + " iterations increased the objective by more than 1e-8 (max "
                                  + std::to_string(report.max_objective_increase) + ")");
}

inline void check_problem(const CostMatrix& D, const CostMatrix& Dbar, const ProbabilityVector& mu,
                          const ProbabilityVector& nu, const Coupling& init)
{
    check_dims(D, Dbar, init.rows(), init.cols());
    require(mu.size() == D.size() && nu.size() == Dbar.size(), ErrorCode::dimension_mismatch,
            "marginals do not match the spaces");
    require(init.within_unit_box(0.0), ErrorCode::infeasible_init, "initial coupling has entries above 1");
}

} // namespace detail

/// Upper end 1 / L_f of the admissible coupling step (sigma = 1 on [0, 1]^{n x m}).
inline double theoretical_step_bound(const CostMatrix& D, const CostMatrix& Dbar)
{
    const double lf = lipschitz_constant(D, Dbar);
    detail::require(lf > 0.0, ErrorCode::zero_lipschitz, "both cost matrices are zero");
    return 1.0 / lf;
}

/// min over the first K iterations of ||dpi||_F + ||dalpha||_2 + ||dbeta||_2.
inline double stationarity_measure(const SolveReport& report, int K)
{
    detail::require(K >= 1 && K <= static_cast<int>(report.iterate_diffs.size()), ErrorCode::out_of_range,
                    "K = " + std::to_string(K) + " outside [1, " + std::to_string(report.iterate_diffs.size())
                        + "]");
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) best = std::min(best, report.iterate_diffs[static_cast<std::size_t>(k)].sum());
    return best;
}

/// Starting point of BPALM. alpha and beta must lie in their KL balls.
struct WarmStart
{
    Coupling pi;
    ProbabilityVector alpha;
    ProbabilityVector beta;
};

/// BPALM for the robust GW problem. Each iteration updates pi (unbalanced scaling at
/// cost L (x) pi^k), then alpha, then beta (closed form + Newton). A zero radius pins
/// the corresponding marginal to mu or nu.
///
/// The coupling step linearizes with L (x) pi^k, not the gradient 2 L (x) pi^k of the
/// quadratic; the factor is absorbed into the step size t.
inline RgwSolution solve_rgw(const CostMatrix& D, const CostMatrix& Dbar, const ProbabilityVector& mu,
                             const ProbabilityVector& nu, const WarmStart& start_point, const RgwParams& params)
{
    params.validate();
    const Coupling& init_pi = start_point.pi;
    detail::check_problem(D, Dbar, mu, nu, init_pi);
    detail::require(start_point.alpha.size() == mu.size() && start_point.beta.size() == nu.size(),
                    ErrorCode::dimension_mismatch, "warm-start marginals do not match the spaces");
    detail::require(is_in_kl_ball(mu, start_point.alpha, params.rho1), ErrorCode::infeasible_init,
                    "warm-start alpha violates KL(mu, alpha) <= rho1");
    detail::require(is_in_kl_ball(nu, start_point.beta, params.rho2), ErrorCode::infeasible_init,
                    "warm-start beta violates KL(nu, beta) <= rho2");
    const auto start = std::chrono::steady_clock::now();

    SolveReport report;
    double t = params.t;
    if (params.step_mode == StepMode::theoretical) {
        t = params.theoretical_fraction * theoretical_step_bound(D, Dbar);
        report.lipschitz = lipschitz_constant(D, Dbar);
    }
    report.step_t = t;

    Coupling pi = init_pi;
    ProbabilityVector alpha = params.rho1 > 0.0 ? start_point.alpha : mu;
    ProbabilityVector beta = params.rho2 > 0.0 ? start_point.beta : nu;
    double objective = rgw_objective(D, Dbar, pi, alpha, beta, params.tau1, params.tau2);
    report.objective_trace.push_back(objective);
    report.max_pi_entry = pi.entries().maxCoeff();

    for (int k = 0; k < params.max_outer_iterations; ++k) {
        const Matrix cost = apply_tensor(D, Dbar, pi);
        PiSolveResult step = solve_pi_subproblem(cost, pi, alpha, beta, params.tau1, params.tau2, t, params.inner);
        report.inner_iterations += step.iterations;
        if (!step.converged) ++report.inner_unconverged;

        ProbabilityVector next_alpha = mu;
        if (params.rho1 > 0.0) {
            next_alpha = solve_marginal_subproblem(PositiveMeasure(step.pi.row_marginal()), alpha, mu, params.c,
                                                   params.rho1)
                             .value;
        }
        ProbabilityVector next_beta = nu;
        if (params.rho2 > 0.0) {
            next_beta = solve_marginal_subproblem(PositiveMeasure(step.pi.col_marginal()), beta, nu, params.r,
                                                  params.rho2)
                            .value;
        }

        IterateDiff diff{(step.pi.entries() - pi.entries()).norm(), (next_alpha.weights() - alpha.weights()).norm(),
                         (next_beta.weights() - beta.weights()).norm()};
        pi = std::move(step.pi);
        alpha = std::move(next_alpha);
        beta = std::move(next_beta);

        const double next_objective = rgw_objective(D, Dbar, pi, alpha, beta, params.tau1, params.tau2);
        const double increase = next_objective - objective;
        if (increase > descent_tolerance) {
            ++report.descent_violations;
            report.max_objective_increase = std::max(report.max_objective_increase, increase);
        }
        objective = next_objective;
        report.objective_trace.push_back(objective);
        report.iterate_diffs.push_back(diff);
        report.iterations = k + 1;

        const double top = pi.entries().maxCoeff();
        report.max_pi_entry = std::max(report.max_pi_entry, top);
        if (top > 1.0 + compactness_tolerance)
            detail::warn(report, "iteration " + std::to_string(k + 1) + ": coupling entry " + std::to_string(top)
                                     + " left [0, 1]");

        if (diff.sum() <= params.outer_tolerance) {
            report.converged = true;
            break;
        }
    }

    report.final_kl_mu_alpha = kl_divergence(mu, alpha);
    report.final_kl_nu_beta = kl_divergence(nu, beta);
    detail::finish_report(report);
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(pi), std::move(alpha), std::move(beta), std::move(report)};
}

/// alpha and beta start at mu and nu.
inline RgwSolution solve_rgw(const CostMatrix& D, const CostMatrix& Dbar, const ProbabilityVector& mu,
                             const ProbabilityVector& nu, const Coupling& init_pi, const RgwParams& params)
{
    return solve_rgw(D, Dbar, mu, nu, WarmStart{init_pi, mu, nu}, params);
}

/// Overload taking a raw initial plan; entries must lie in [0, 1].
inline RgwSolution solve_rgw(const CostMatrix& D, const CostMatrix& Dbar, const ProbabilityVector& mu,
                             const ProbabilityVector& nu, const Matrix& init_pi, const RgwParams& params)
{
    detail::require(init_pi.allFinite() && (init_pi.array() >= 0.0).all() && (init_pi.array() <= 1.0).all(),
                    ErrorCode::infeasible_init, "initial coupling entries must lie in [0, 1]");
    return solve_rgw(D, Dbar, mu, nu, Coupling(init_pi), params);
}

struct BalancedParams
{
    double t = 0.01;
    int max_outer_iterations = 2000;
    double outer_tolerance = 1e-6;
    SinkhornSettings inner{};
};

/// Balanced baseline: KL-proximal point steps onto Pi(mu, nu) at cost L (x) pi^k.
inline BalancedSolution solve_balanced_gw(const CostMatrix& D, const CostMatrix& Dbar, const ProbabilityVector& mu,
                                          const ProbabilityVector& nu, const Coupling& init_pi,
                                          const BalancedParams& params)
{
    detail::require(params.t > 0.0 && std::isfinite(params.t), ErrorCode::invalid_params, "step-t must be > 0");
    detail::require(params.max_outer_iterations >= 1, ErrorCode::invalid_params, "max-iters must be >= 1");
    params.inner.validate();
    detail::check_problem(D, Dbar, mu, nu, init_pi);
    const auto start = std::chrono::steady_clock::now();

    SolveReport report;
    report.step_t = params.t;
    Coupling pi = init_pi;
    double objective = gw_quadratic_value(D, Dbar, pi);
    report.objective_trace.push_back(objective);
    report.max_pi_entry = pi.entries().maxCoeff();

    for (int k = 0; k < params.max_outer_iterations; ++k) {
        const Matrix cost = apply_tensor(D, Dbar, pi);
        PiSolveResult step = solve_balanced_projection(cost, pi, mu, nu, params.t, params.inner);
        report.inner_iterations += step.iterations;
        if (!step.converged) ++report.inner_unconverged;
        IterateDiff diff{(step.pi.entries() - pi.entries()).norm(), 0.0, 0.0};
        pi = std::move(step.pi);
        const double next_objective = gw_quadratic_value(D, Dbar, pi);
        // The first step moves an infeasible start onto Pi(mu, nu) and may raise the objective.
        if (k > 0 && next_objective - objective > descent_tolerance) {
            ++report.descent_violations;
            report.max_objective_increase = std::max(report.max_objective_increase, next_objective - objective);
        }
        objective = next_objective;
        report.objective_trace.push_back(objective);
        report.iterate_diffs.push_back(diff);
        report.iterations = k + 1;
        report.max_pi_entry = std::max(report.max_pi_entry, pi.entries().maxCoeff());
        if (diff.sum() <= params.outer_tolerance) {
            report.converged = true;
            break;
        }
    }
    report.final_kl_mu_alpha = detail::kl_raw(mu.weights(), pi.row_marginal());
    report.final_kl_nu_beta = detail::kl_raw(nu.weights(), pi.col_marginal());
    detail::finish_report(report);
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(pi), std::move(report)};
}

} // namespace rgw
