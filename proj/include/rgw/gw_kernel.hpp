#pragma once
#include <rgw/error.hpp>
#include <rgw/measures.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace rgw {

inline constexpr double symmetry_tolerance = 1e-10;
inline constexpr double compactness_tolerance = 1e-9;

/// Symmetric, nonnegative intra-space distance matrix with zero diagonal.
/// Keeps the entrywise square, which every tensor application needs.
class CostMatrix
{
public:
    CostMatrix() = default;

    explicit CostMatrix(Matrix entries)
        : entries_(std::move(entries))
    {
        const auto n = entries_.rows();
        detail::require(n >= 1 && entries_.cols() == n, ErrorCode::dimension_mismatch,
                        "cost matrix must be square and non-empty");
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const double v = entries_(i, j);
                detail::require(std::isfinite(v) && v >= 0.0, ErrorCode::invalid_argument,
                                "cost entry (" + std::to_string(i) + "," + std::to_string(j)
                                    + ") is negative or not finite");
                detail::require(std::abs(v - entries_(j, i)) <= symmetry_tolerance,
                                ErrorCode::invalid_argument, "cost matrix is not symmetric");
            }
            detail::require(entries_(j, j) == 0.0, ErrorCode::invalid_argument,
                            "cost matrix diagonal entry " + std::to_string(j) + " is not zero");
        }
        squared_ = entries_.array().square().matrix();
    }

    const Matrix& entries() const noexcept { return entries_; }
    const Matrix& squared() const noexcept { return squared_; }
    Eigen::Index size() const noexcept { return entries_.rows(); }
    double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

private:
    Matrix entries_;
    Matrix squared_;
};

/// Nonnegative n x m transport plan.
class Coupling
{
public:
    Coupling() = default;

    explicit Coupling(Matrix entries)
        : entries_(std::move(entries))
    {
        detail::require(entries_.size() > 0, ErrorCode::dimension_mismatch, "coupling must be non-empty");
        detail::require(entries_.allFinite() && (entries_.array() >= 0.0).all(),
                        ErrorCode::invalid_argument, "coupling entries must be finite and nonnegative");
    }

    static Coupling uniform(Eigen::Index n, Eigen::Index m)
    {
        return Coupling(Matrix::Constant(n, m, 1.0 / static_cast<double>(n * m)));
    }

    /// mu nu^T
    static Coupling product(const ProbabilityVector& mu, const ProbabilityVector& nu)
    {
        return Coupling(mu.weights() * nu.weights().transpose());
    }

    const Matrix& entries() const noexcept { return entries_; }
    Eigen::Index rows() const noexcept { return entries_.rows(); }
    Eigen::Index cols() const noexcept { return entries_.cols(); }
    double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

    Vector row_marginal() const { return entries_.rowwise().sum(); }
    Vector col_marginal() const { return entries_.colwise().sum().transpose(); }
    double total_mass() const { return entries_.sum(); }

    /// Membership in [0, 1]^{n x m}, the compact set BPALM iterates stay in.
    bool within_unit_box(double tolerance = compactness_tolerance) const
    {
        return entries_.maxCoeff() <= 1.0 + tolerance;
    }

private:
    Matrix entries_;
};

namespace detail {

inline void check_dims(const CostMatrix& D, const CostMatrix& Dbar, Eigen::Index rows, Eigen::Index cols)
{
    require(D.size() == rows && Dbar.size() == cols, ErrorCode::dimension_mismatch,
            "coupling is " + std::to_string(rows) + "x" + std::to_string(cols) + " but spaces have "
                + std::to_string(D.size()) + " and " + std::to_string(Dbar.size()) + " points");
}

/// Tensor application on a raw matrix (no validation).
inline Matrix apply_tensor_raw(const CostMatrix& D, const CostMatrix& Dbar, const Matrix& pi)
{
    const Vector row = pi.rowwise().sum();
    const Vector col = pi.colwise().sum().transpose();
    const Vector left = D.squared() * row;
    const Vector right = Dbar.squared() * col;
    Matrix cross = D.entries() * pi;
    Matrix out = cross * Dbar.entries();
    out *= -2.0;
    out.colwise() += left;
    out.rowwise() += right.transpose();
    return out;
}

} // namespace detail

/// (L(D, Dbar) (x) pi)_{ij} = sum_{k,l} (D_ik - Dbar_jl)^2 pi_kl via the squared-loss
/// split (D.^2) pi 1 1^T + 1 (pi^T 1)^T (Dbar.^2) - 2 D pi Dbar. O(n^2 m + n m^2); the
/// 4-way tensor is never formed.
inline Matrix apply_tensor(const CostMatrix& D, const CostMatrix& Dbar, const Coupling& pi)
{
    detail::check_dims(D, Dbar, pi.rows(), pi.cols());
    return detail::apply_tensor_raw(D, Dbar, pi.entries());
}

/// <L (x) pi, pi>, the Gromov-Wasserstein distortion of pi.
inline double gw_quadratic_value(const CostMatrix& D, const CostMatrix& Dbar, const Coupling& pi)
{
    const Matrix tensor = apply_tensor(D, Dbar, pi);
    // Mathematically a sum of squares; clamp the rounding residue.
    return std::max(0.0, (tensor.array() * pi.entries().array()).sum());
}

/// F(pi, alpha, beta) = <L (x) pi, pi> + tau1 KL(pi 1, alpha) + tau2 KL(pi^T 1, beta).
inline double rgw_objective(const CostMatrix& D, const CostMatrix& Dbar, const Coupling& pi,
                            const ProbabilityVector& alpha, const ProbabilityVector& beta,
                            double tau1, double tau2)
{
    detail::require(tau1 > 0.0 && tau2 > 0.0, ErrorCode::invalid_argument, "tau1, tau2 must be positive");
    detail::require(alpha.size() == pi.rows() && beta.size() == pi.cols(), ErrorCode::dimension_mismatch,
                    "marginal sizes do not match the coupling");
    const double quad = gw_quadratic_value(D, Dbar, pi);
    return quad + tau1 * detail::kl_raw(pi.row_marginal(), alpha.weights())
         + tau2 * detail::kl_raw(pi.col_marginal(), beta.weights());
}

/// Gradient Lipschitz constant max_{i,j} (sum_{k,l} L_{ijkl}^2)^{1/2} of the quadratic term.
///
/// The inner sum sum_{k,l} (a_k - b_l)^4 with a = D_i., b = Dbar_j. expands into power
/// sums of the rows, so every (i, j) costs O(1) once the row moments are known. The
/// winning pair is then re-summed directly, which removes the cancellation error of the
/// expansion from the returned value.
inline double lipschitz_constant(const CostMatrix& D, const CostMatrix& Dbar)
{
    const auto n = D.size();
    const auto m = Dbar.size();
    auto moments = [](const Matrix& M) {
        Matrix out(M.rows(), 5);
        out.col(0).setConstant(static_cast<double>(M.cols()));
        const Matrix sq = M.array().square().matrix();
        out.col(1) = M.rowwise().sum();
        out.col(2) = sq.rowwise().sum();
        out.col(3) = (sq.array() * M.array()).matrix().rowwise().sum();
        out.col(4) = sq.array().square().matrix().rowwise().sum();
        return out;
    };
    const Matrix a = moments(D.entries());
    const Matrix b = moments(Dbar.entries());

    double best = -1.0;
    Eigen::Index best_i = 0;
    Eigen::Index best_j = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double s = a(i, 4) * b(j, 0) - 4.0 * a(i, 3) * b(j, 1) + 6.0 * a(i, 2) * b(j, 2)
                           - 4.0 * a(i, 1) * b(j, 3) + a(i, 0) * b(j, 4);
            if (s > best) {
                best = s;
                best_i = i;
                best_j = j;
            }
        }
    }
    double exact = 0.0;
    for (Eigen::Index l = 0; l < m; ++l) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const double diff = D(best_i, k) - Dbar(best_j, l);
            exact += diff * diff * diff * diff;
        }
    }
    return std::sqrt(exact);
}

/// Cheap upper bound on lipschitz_constant: every tensor entry is at most
/// max(max D, max Dbar)^2, and each (i, j) sums n m of them.
inline double lipschitz_upper_bound(const CostMatrix& D, const CostMatrix& Dbar)
{
    const double big = std::max(D.entries().maxCoeff(), Dbar.entries().maxCoeff());
    return big * big * std::sqrt(static_cast<double>(D.size() * Dbar.size()));
}

/// Euclidean distance matrix of the rows of `points` (n x d).
inline CostMatrix pairwise_distances(const Matrix& points)
{
    const auto n = points.rows();
    detail::require(n >= 1 && points.cols() >= 1, ErrorCode::invalid_argument,
                    "point cloud must have at least one point and one coordinate");
    Matrix out = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double d = (points.row(i) - points.row(j)).norm();
            out(i, j) = d;
            out(j, i) = d;
        }
    }
    return CostMatrix(std::move(out));
}

} // namespace rgw
