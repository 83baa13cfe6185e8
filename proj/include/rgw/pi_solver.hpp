#pragma once
#include <rgw/error.hpp>
#include <rgw/gw_kernel.hpp>
#include <rgw/measures.hpp>

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

/// Coupling subproblem of BPALM.
///
/// The update
///
///     min_{pi >= 0} <C, pi> + tau1 KL(pi 1, alpha) + tau2 KL(pi^T 1, beta) + (1/t) KL(pi, pi_prev)
///
/// is an entropic unbalanced transport problem. Writing K = pi_prev .* exp(-t C), the first
/// two and the last terms combine into (1/t) KL(pi, K) up to a constant, and the stationarity
/// conditions at pi = diag(u) K diag(v) read
///
///     (1/t) log u_i + tau1 log((pi 1)_i / alpha_i) = 0,
///     (1/t) log v_j + tau2 log((pi^T 1)_j / beta_j) = 0.
///
/// Solving each for its own scaling with the other fixed gives the fixed-point sweeps
///
///     u <- (alpha ./ K v)^{kappa1},   kappa1 = tau1 t / (tau1 t + 1),
///     v <- (beta ./ K^T u)^{kappa2},  kappa2 = tau2 t / (tau2 t + 1).
///
/// Hard marginals (the balanced baseline) are the kappa = 1 limit. Entries with
/// pi_prev = 0 have K = 0 and stay zero, so supports never grow.
namespace rgw {

struct SinkhornSettings
{
    int max_inner_iterations = 2000;
    /// Sup-norm change of log u and log v that ends the sweeps.
    double inner_tolerance = 1e-8;
    /// Force log-domain sweeps. They are also chosen automatically when
    /// t * max|C| > 80 or a multiplicative scaling leaves [e^-300, e^300].
    bool log_domain = false;
    /// Record the subproblem objective after every sweep (diagnostics only).
    bool track_objective = false;

    void validate() const
    {
        detail::require(max_inner_iterations >= 1, ErrorCode::invalid_params,
                        "max_inner_iterations must be >= 1");
        detail::require(inner_tolerance > 0.0, ErrorCode::invalid_params, "inner_tolerance must be > 0");
    }
};

struct PiSolveResult
{
    Coupling pi;
    int iterations = 0;
    /// Last sup-norm change of the log scalings.
    double change = 0.0;
    bool converged = false;
    bool used_log_domain = false;
    std::vector<double> sweep_objectives;
};

inline constexpr double log_domain_trigger = 80.0;
inline constexpr double scaling_overflow_log = 300.0;
inline constexpr double balanced_marginal_tolerance = 1e-10;

namespace detail {

struct ScalingOutcome
{
    Matrix pi;
    int iterations = 0;
    double change = std::numeric_limits<double>::infinity();
    bool converged = false;
};

/// Either the log change of the scalings or, for hard marginals, the row-marginal
/// residual decides convergence.
struct ScalingTargets
{
    const Vector& row;
    const Vector& col;
    double kappa_row;
    double kappa_col;
    bool hard_marginals;
};

inline double max_log_change(const Vector& old_s, const Vector& new_s)
{
    double change = 0.0;
    for (Eigen::Index i = 0; i < new_s.size(); ++i) {
        const bool a = old_s[i] > 0.0;
        const bool b = new_s[i] > 0.0;
        if (a && b) change = std::max(change, std::abs(std::log(new_s[i] / old_s[i])));
        else if (a != b) change = std::numeric_limits<double>::infinity();
    }
    return change;
}

inline double max_change(const Vector& old_s, const Vector& new_s)
{
    double change = 0.0;
    for (Eigen::Index i = 0; i < new_s.size(); ++i) {
        const bool a = std::isfinite(old_s[i]);
        const bool b = std::isfinite(new_s[i]);
        if (a && b) change = std::max(change, std::abs(new_s[i] - old_s[i]));
        else if (a != b) change = std::numeric_limits<double>::infinity();
    }
    return change;
}

inline double scale_entry(double target, double mass, double kappa)
{
    if (!(mass > 0.0) || !(target > 0.0)) return 0.0;
    return kappa == 1.0 ? target / mass : std::pow(target / mass, kappa);
}

template <class Observer>
ScalingOutcome scaling_multiplicative(const Matrix& K, const ScalingTargets& tg, const SinkhornSettings& s,
                                      Observer&& observe)
{
    const auto n = K.rows();
    const auto m = K.cols();
    Vector u = Vector::Ones(n);
    Vector v = Vector::Ones(m);
    Vector u_new(n);
    Vector v_new(m);
    const double hi = std::exp(scaling_overflow_log);
    const double lo = std::exp(-scaling_overflow_log);
    auto check = [&](const Vector& x) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (!std::isfinite(x[i]) || x[i] > hi || (x[i] > 0.0 && x[i] < lo)) {
                throw Error(ErrorCode::inner_diverged, "multiplicative scaling left its safe range");
            }
        }
    };

    ScalingOutcome out;
    for (int it = 1; it <= s.max_inner_iterations; ++it) {
        const Vector Kv = K * v;
        for (Eigen::Index i = 0; i < n; ++i) u_new[i] = scale_entry(tg.row[i], Kv[i], tg.kappa_row);
        check(u_new);
        const Vector Ktu = K.transpose() * u_new;
        for (Eigen::Index j = 0; j < m; ++j) v_new[j] = scale_entry(tg.col[j], Ktu[j], tg.kappa_col);
        check(v_new);

        out.iterations = it;
        if (tg.hard_marginals) {
            const Vector rows = u_new.cwiseProduct(K * v_new);
            out.change = (rows - tg.row).cwiseAbs().maxCoeff();
        } else {
            out.change = std::max(max_log_change(u, u_new), max_log_change(v, v_new));
        }
        u.swap(u_new);
        v.swap(v_new);
        observe([&] { return Matrix(u.asDiagonal() * K * v.asDiagonal()); });
        const double tol = tg.hard_marginals ? balanced_marginal_tolerance : s.inner_tolerance;
        if (out.change <= tol) {
            out.converged = true;
            break;
        }
    }
    out.pi = u.asDiagonal() * K * v.asDiagonal();
    return out;
}

inline double log_sum_exp(const double* values, Eigen::Index count, Eigen::Index stride)
{
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < count; ++k) top = std::max(top, values[k * stride]);
    if (!std::isfinite(top)) return top;
    double acc = 0.0;
    for (Eigen::Index k = 0; k < count; ++k) acc += std::exp(values[k * stride] - top);
    return top + std::log(acc);
}

template <class Observer>
ScalingOutcome scaling_log(const Matrix& logK, const ScalingTargets& tg, const SinkhornSettings& s,
                           Observer&& observe)
{
    const auto n = logK.rows();
    const auto m = logK.cols();
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    Vector f = Vector::Zero(n);
    Vector g = Vector::Zero(m);
    Vector f_new(n);
    Vector g_new(m);
    Matrix work(n, m);
    auto update = [](double target, double lse, double kappa) {
        if (!(target > 0.0)) return neg_inf;
        if (!std::isfinite(lse)) return 0.0;  // empty row or column: pi stays zero there
        return kappa * (std::log(target) - lse);
    };
    auto plan = [&](const Vector& ff, const Vector& gg) {
        Matrix p(n, m);
        for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index i = 0; i < n; ++i) p(i, j) = std::exp(logK(i, j) + ff[i] + gg[j]);
        return p;
    };

    ScalingOutcome out;
    for (int it = 1; it <= s.max_inner_iterations; ++it) {
        // Row reductions run over a transposed copy to keep memory access contiguous.
        work = logK;
        work.rowwise() += g.transpose();
        const Matrix workT = work.transpose();
        for (Eigen::Index i = 0; i < n; ++i)
            f_new[i] = update(tg.row[i], log_sum_exp(workT.col(i).data(), m, 1), tg.kappa_row);
        work = logK;
        work.colwise() += f_new;
        for (Eigen::Index j = 0; j < m; ++j)
            g_new[j] = update(tg.col[j], log_sum_exp(work.col(j).data(), n, 1), tg.kappa_col);

        out.iterations = it;
        if (tg.hard_marginals) {
            const Vector rows = plan(f_new, g_new).rowwise().sum();
            out.change = (rows - tg.row).cwiseAbs().maxCoeff();
        } else {
            out.change = std::max(max_change(f, f_new), max_change(g, g_new));
        }
        f.swap(f_new);
        g.swap(g_new);
        observe([&] { return plan(f, g); });
        const double tol = tg.hard_marginals ? balanced_marginal_tolerance : s.inner_tolerance;
        if (out.change <= tol) {
            out.converged = true;
            break;
        }
    }
    out.pi = plan(f, g);
    return out;
}

inline void check_subproblem_inputs(const Matrix& cost, const Coupling& pi_prev, Eigen::Index nrow,
                                    Eigen::Index ncol, double t)
{
    require(cost.rows() == pi_prev.rows() && cost.cols() == pi_prev.cols(), ErrorCode::dimension_mismatch,
            "cost and previous coupling differ in shape");
    require(nrow == pi_prev.rows() && ncol == pi_prev.cols(), ErrorCode::dimension_mismatch,
            "marginal lengths do not match the coupling");
    require(t > 0.0 && std::isfinite(t), ErrorCode::invalid_argument, "step t must be positive");
    require(cost.allFinite(), ErrorCode::invalid_argument, "cost must be finite");
}

template <class Objective>
PiSolveResult run_scaling(const Matrix& cost, const Coupling& pi_prev, const ScalingTargets& tg, double t,
                          const SinkhornSettings& settings, Objective&& objective)
{
    settings.validate();
    PiSolveResult result;
    auto observe = [&](auto&& make_plan) {
        if (settings.track_objective) result.sweep_objectives.push_back(objective(make_plan()));
    };
    const Matrix& prev = pi_prev.entries();
    const double reach = t * cost.cwiseAbs().maxCoeff();
    bool use_log = settings.log_domain || reach > log_domain_trigger;
    ScalingOutcome outcome;
    if (!use_log) {
        try {
            const Matrix K = prev.array() * (-t * cost.array()).exp();
            outcome = scaling_multiplicative(K, tg, settings, observe);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::inner_diverged) throw;
            use_log = true;
            result.sweep_objectives.clear();
        }
    }
    if (use_log) {
        Matrix logK(prev.rows(), prev.cols());
        for (Eigen::Index j = 0; j < prev.cols(); ++j)
            for (Eigen::Index i = 0; i < prev.rows(); ++i)
                logK(i, j) = prev(i, j) > 0.0 ? std::log(prev(i, j)) - t * cost(i, j)
                                              : -std::numeric_limits<double>::infinity();
        outcome = scaling_log(logK, tg, settings, observe);
    }
    result.pi = Coupling(std::move(outcome.pi));
    result.iterations = outcome.iterations;
    result.change = outcome.change;
    result.converged = outcome.converged;
    result.used_log_domain = use_log;
    return result;
}

} // namespace detail

/// Objective of the coupling subproblem at `pi`.
inline double pi_subproblem_objective(const Matrix& cost, const Coupling& pi_prev, const Coupling& pi,
                                      const ProbabilityVector& alpha, const ProbabilityVector& beta,
                                      double tau1, double tau2, double t)
{
    const Matrix& p = pi.entries();
    return (cost.array() * p.array()).sum() + tau1 * detail::kl_raw(pi.row_marginal(), alpha.weights())
         + tau2 * detail::kl_raw(pi.col_marginal(), beta.weights())
         + detail::kl_raw(p.reshaped(), pi_prev.entries().reshaped()) / t;
}

/// Largest violation, over the support of `pi`, of the stationarity condition
/// C_ij + tau1 log(pi1_i/alpha_i) + tau2 log(pi2_j/beta_j) + (1/t) log(pi_ij/prev_ij) = 0.
inline double pi_stationarity_residual(const Matrix& cost, const Coupling& pi_prev, const Coupling& pi,
                                       const ProbabilityVector& alpha, const ProbabilityVector& beta,
                                       double tau1, double tau2, double t)
{
    const Vector r = pi.row_marginal();
    const Vector c = pi.col_marginal();
    double worst = 0.0;
    for (Eigen::Index j = 0; j < pi.cols(); ++j) {
        for (Eigen::Index i = 0; i < pi.rows(); ++i) {
            const double p = pi(i, j);
            if (!(p > 0.0)) continue;
            const double g = cost(i, j) + tau1 * std::log(r[i] / alpha[i]) + tau2 * std::log(c[j] / beta[j])
                           + std::log(p / pi_prev(i, j)) / t;
            worst = std::max(worst, std::abs(g));
        }
    }
    return worst;
}

/// Unbalanced entropic scaling solve of the coupling subproblem.
inline PiSolveResult solve_pi_subproblem(const Matrix& cost, const Coupling& pi_prev,
                                         const ProbabilityVector& alpha, const ProbabilityVector& beta,
                                         double tau1, double tau2, double t,
                                         const SinkhornSettings& settings = {})
{
    detail::check_subproblem_inputs(cost, pi_prev, alpha.size(), beta.size(), t);
    detail::require(tau1 > 0.0 && tau2 > 0.0, ErrorCode::invalid_argument, "tau1, tau2 must be positive");
    const detail::ScalingTargets tg{alpha.weights(), beta.weights(), tau1 * t / (tau1 * t + 1.0),
                                    tau2 * t / (tau2 * t + 1.0), false};
    return detail::run_scaling(cost, pi_prev, tg, t, settings, [&](const Matrix& p) {
        return pi_subproblem_objective(cost, pi_prev, Coupling(p), alpha, beta, tau1, tau2, t);
    });
}

/// KL-proximal step onto the transport polytope Pi(mu, nu):
/// min <C, pi> + (1/t) KL(pi, pi_prev) subject to pi 1 = mu, pi^T 1 = nu.
inline PiSolveResult solve_balanced_projection(const Matrix& cost, const Coupling& pi_prev,
                                               const ProbabilityVector& mu, const ProbabilityVector& nu,
                                               double t, const SinkhornSettings& settings = {})
{
    detail::check_subproblem_inputs(cost, pi_prev, mu.size(), nu.size(), t);
    detail::require((mu.weights().array() > 0.0).all() && (nu.weights().array() > 0.0).all(),
                    ErrorCode::invalid_argument, "balanced projection needs strictly positive marginals");
    const detail::ScalingTargets tg{mu.weights(), nu.weights(), 1.0, 1.0, true};
    return detail::run_scaling(cost, pi_prev, tg, t, settings, [&](const Matrix& p) {
        return (cost.array() * p.array()).sum() + detail::kl_raw(p.reshaped(), pi_prev.entries().reshaped()) / t;
    });
}

} // namespace rgw
