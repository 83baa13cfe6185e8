#pragma once
// Direct, slow reference computations used by tests and the self-check.
#include <rgw/gw_kernel.hpp>
#include <rgw/marginal_solver.hpp>
#include <rgw/measures.hpp>

#include <cmath>
#include <functional>
#include <random>

namespace rgw::oracle {

/// sum_{k,l} (D_ik - Dbar_jl)^2 pi_kl by four nested loops.
inline Matrix tensor_quadruple_loop(const Matrix& D, const Matrix& Dbar, const Matrix& pi)
{
    const Eigen::Index n = D.rows(), m = Dbar.rows();
    Matrix out = Matrix::Zero(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            double acc = 0.0;
            for (Eigen::Index k = 0; k < n; ++k)
                for (Eigen::Index l = 0; l < m; ++l) {
                    const double d = D(i, k) - Dbar(j, l);
                    acc += d * d * pi(k, l);
                }
            out(i, j) = acc;
        }
    return out;
}

inline double quadratic_quadruple_loop(const Matrix& D, const Matrix& Dbar, const Matrix& pi)
{
    return (tensor_quadruple_loop(D, Dbar, pi).array() * pi.array()).sum();
}

inline double lipschitz_quadruple_loop(const Matrix& D, const Matrix& Dbar)
{
    double best = 0.0;
    for (Eigen::Index i = 0; i < D.rows(); ++i)
        for (Eigen::Index j = 0; j < Dbar.rows(); ++j) {
            double acc = 0.0;
            for (Eigen::Index k = 0; k < D.rows(); ++k)
                for (Eigen::Index l = 0; l < Dbar.rows(); ++l) acc += std::pow(D(i, k) - Dbar(j, l), 4);
            best = std::max(best, std::sqrt(acc));
        }
    return best;
}

/// Plain bisection on a non-increasing function with f(lo) >= 0 >= f(hi).
inline double bisect_decreasing(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-13,
                                int max_iterations = 500)
{
    for (int it = 0; it < max_iterations && hi - lo > tol * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) >= 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Root of the dual function p by bisection, bracketing outward from [0, 1].
inline double dual_root_bisection(const PositiveMeasure& pi_marginal, const ProbabilityVector& prev,
                                  const ProbabilityVector& reference, double step, double rho)
{
    auto p = [&](double w) { return dual_function_p(w, pi_marginal, prev, reference, step, rho).value; };
    if (p(0.0) <= 0.0) return 0.0;
    double hi = 1.0;
    while (p(hi) > 0.0) hi *= 2.0;
    return bisect_decreasing(p, 0.0, hi);
}

// Random instance helpers -----------------------------------------------------------

/// Euclidean distances of `n` uniform points in the unit square.
inline CostMatrix random_metric(Eigen::Index n, std::mt19937_64& rng, int dim = 2)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix pts(n, dim);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int d = 0; d < dim; ++d) pts(i, d) = unit(rng);
    return pairwise_distances(pts);
}

inline ProbabilityVector random_simplex(Eigen::Index n, std::mt19937_64& rng, double lo = 0.2, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Vector w(n);
    for (auto& x : w) x = u(rng);
    return ProbabilityVector::normalized(std::move(w));
}

inline Matrix random_plan(Eigen::Index n, Eigen::Index m, std::mt19937_64& rng, double scale = 1.0)
{
    std::uniform_real_distribution<double> u(0.0, scale);
    Matrix p(n, m);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    return p;
}

} // namespace rgw::oracle
