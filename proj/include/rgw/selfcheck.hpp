#pragma once
#include <rgw/bpalm.hpp>
#include <rgw/gw_kernel.hpp>
#include <rgw/marginal_solver.hpp>
#include <rgw/oracles.hpp>

#include <chrono>
#include <cstdio>
#include <limits>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <string>

namespace rgw {

using TensorFn = std::function<Matrix(const CostMatrix&, const CostMatrix&, const Matrix&)>;

namespace detail {

inline double relative_error(const Matrix& a, const Matrix& b)
{
    return (a - b).norm() / std::max(1e-300, b.norm());
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

struct CheckLog
{
    std::ostream& out;
    bool all_passed = true;

    void line(bool ok, const std::string& name, const std::string& detail)
    {
        all_passed = all_passed && ok;
        out << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
    }
};

inline std::string sci(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

} // namespace detail

/// Runs the oracle suites and prints one line per check. `tensor` defaults to
/// apply_tensor and exists so a harness can inject a faulty implementation.
inline bool run_selfcheck(std::ostream& out, TensorFn tensor = {})
{
    if (!tensor) tensor = [](const CostMatrix& D, const CostMatrix& Db, const Matrix& pi) {
        return apply_tensor(D, Db, Coupling(pi));
    };
    detail::CheckLog log{out};
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20240611);
    std::uniform_int_distribution<int> size(1, 8);

    {
        double worst_tensor = 0.0, worst_value = 0.0;
        for (int trial = 0; trial < 30; ++trial) {
            const auto D = oracle::random_metric(size(rng), rng);
            const auto Db = oracle::random_metric(size(rng), rng);
            const Matrix pi = oracle::random_plan(D.size(), Db.size(), rng);
            const Matrix ref = oracle::tensor_quadruple_loop(D.entries(), Db.entries(), pi);
            const Matrix got = tensor(D, Db, pi);
            worst_tensor = std::max(worst_tensor, detail::relative_error(got, ref));
            const double value = (got.array() * pi.array()).sum();
            worst_value = std::max(worst_value,
                                   detail::relative_error(value, oracle::quadratic_quadruple_loop(D.entries(),
                                                                                                  Db.entries(), pi)));
        }
        log.line(worst_tensor <= 1e-10, "tensor-vs-quadruple-loop", "max rel err " + detail::sci(worst_tensor));
        log.line(worst_value <= 1e-10, "quadratic-vs-quadruple-loop", "max rel err " + detail::sci(worst_value));
    }

    {
        double worst = 0.0;
        const double h = 1e-5;
        for (int trial = 0; trial < 5; ++trial) {
            const auto D = oracle::random_metric(4, rng);
            const auto Db = oracle::random_metric(5, rng);
            const Matrix pi = oracle::random_plan(4, 5, rng, 0.1);
            const Matrix grad = 2.0 * tensor(D, Db, pi);
            Matrix fd(4, 5);
            for (Eigen::Index k = 0; k < pi.size(); ++k) {
                Matrix up = pi, down = pi;
                up.data()[k] += h;
                down.data()[k] -= h;
                fd.data()[k] = (oracle::quadratic_quadruple_loop(D.entries(), Db.entries(), up)
                                - oracle::quadratic_quadruple_loop(D.entries(), Db.entries(), down))
                             / (2.0 * h);
            }
            worst = std::max(worst, detail::relative_error(grad, fd));
        }
        log.line(worst <= 1e-4, "gradient-finite-difference", "max rel err " + detail::sci(worst));
    }

    {
        double worst = 0.0;
        for (int trial = 0; trial < 4; ++trial) {
            const auto D = oracle::random_metric(size(rng), rng);
            const auto Db = oracle::random_metric(size(rng), rng);
            worst = std::max(worst, detail::relative_error(lipschitz_constant(D, Db),
                                                           oracle::lipschitz_quadruple_loop(D.entries(), Db.entries())));
        }
        log.line(worst <= 1e-10, "lipschitz-vs-quadruple-loop", "max rel err " + detail::sci(worst));
    }

    {
        double worst_root = 0.0, worst_kl = 0.0;
        int active = 0;
        for (int trial = 0; trial < 40; ++trial) {
            const Eigen::Index n = size(rng) + 1;
            const ProbabilityVector mu = oracle::random_simplex(n, rng, 0.05, 1.0);
            const ProbabilityVector prev = oracle::random_simplex(n, rng, 0.05, 1.0);
            const PositiveMeasure marginal(oracle::random_simplex(n, rng, 0.0, 1.0).weights() * 0.8);
            const double step = 0.1;
            const double free_kl = kl_divergence(mu, alpha_closed_form(marginal, prev, mu, step, 0.0));
            if (!(free_kl > 1e-6)) continue;
            const double rho = std::uniform_real_distribution<double>(0.05, 0.8)(rng) * free_kl;
            const auto sol = solve_marginal_subproblem(marginal, prev, mu, step, rho);
            const double ref = oracle::dual_root_bisection(marginal, prev, mu, step, rho);
            worst_root = std::max(worst_root, std::abs(sol.root.w_star - ref) / std::max(1.0, ref));
            worst_kl = std::max(worst_kl, std::abs(kl_divergence(mu, sol.value) - rho));
            ++active;
        }
        log.line(active > 0 && worst_root <= 1e-8, "newton-vs-bisection",
                 std::to_string(active) + " active instances, max root gap " + detail::sci(worst_root));
        log.line(active > 0 && worst_kl <= 1e-8, "marginal-constraint-tight", "max |KL - rho| " + detail::sci(worst_kl));
    }

    {
        double worst_increase = -std::numeric_limits<double>::infinity();
        double top = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            const auto D = oracle::random_metric(6, rng);
            const auto Db = oracle::random_metric(7, rng);
            const auto mu = oracle::random_simplex(6, rng);
            const auto nu = oracle::random_simplex(7, rng);
            RgwParams params;
            params.step_mode = StepMode::theoretical;
            params.max_outer_iterations = 200;
            const auto sol = solve_rgw(D, Db, mu, nu, Coupling::product(mu, nu), params);
            const auto& trace = sol.report.objective_trace;
            for (std::size_t k = 1; k < trace.size(); ++k) worst_increase = std::max(worst_increase, trace[k] - trace[k - 1]);
            top = std::max(top, sol.report.max_pi_entry);
        }
        log.line(worst_increase <= 1e-9, "descent-monitor", "max per-step change " + detail::sci(worst_increase));
        log.line(top <= 1.0 + 1e-9, "compactness-monitor", "max coupling entry " + detail::sci(top));
    }

    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.line(elapsed < 30.0, "runtime", detail::sci(elapsed) + " s");
    return log.all_passed;
}

} // namespace rgw
