#pragma once
#include <rgw/error.hpp>

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <string>

namespace rgw {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double simplex_tolerance = 1e-12;
inline constexpr double feasibility_tolerance = 1e-9;

/// Nonnegative weights of arbitrary total mass (e.g. the marginals of a coupling).
class PositiveMeasure
{
public:
    PositiveMeasure() = default;

    explicit PositiveMeasure(Vector weights)
        : weights_(std::move(weights))
    {
        for (Eigen::Index i = 0; i < weights_.size(); ++i) {
            detail::require(std::isfinite(weights_[i]) && weights_[i] >= 0.0,
                            ErrorCode::invalid_argument,
                            "measure entry " + std::to_string(i) + " is negative or not finite");
        }
    }

    const Vector& weights() const noexcept { return weights_; }
    Eigen::Index size() const noexcept { return weights_.size(); }
    double operator[](Eigen::Index i) const { return weights_[i]; }
    double total_mass() const { return weights_.sum(); }

private:
    Vector weights_;
};

/// Point of the probability simplex. Validated on construction; never renormalized
/// unless `normalized` is called explicitly.
class ProbabilityVector
{
public:
    ProbabilityVector() = default;

    explicit ProbabilityVector(Vector weights)
        : weights_(std::move(weights))
    {
        detail::require(weights_.size() >= 1, ErrorCode::invalid_argument,
                        "probability vector must be non-empty");
        for (Eigen::Index i = 0; i < weights_.size(); ++i) {
            detail::require(std::isfinite(weights_[i]) && weights_[i] >= 0.0,
                            ErrorCode::invalid_argument,
                            "probability entry " + std::to_string(i) + " is negative or not finite");
        }
        const double sum = weights_.sum();
        detail::require(std::abs(sum - 1.0) <= simplex_tolerance, ErrorCode::invalid_argument,
                        "probability vector sums to " + std::to_string(sum));
    }

    static ProbabilityVector uniform(Eigen::Index n)
    {
        detail::require(n >= 1, ErrorCode::invalid_argument, "uniform distribution needs n >= 1");
        return ProbabilityVector(Vector::Constant(n, 1.0 / static_cast<double>(n)));
    }

    /// Explicit renormalization, for ingestion of raw weights.
    static ProbabilityVector normalized(Vector raw)
    {
        detail::require(raw.size() >= 1, ErrorCode::invalid_argument,
                        "probability vector must be non-empty");
        detail::require((raw.array() >= 0.0).all() && raw.allFinite(), ErrorCode::invalid_argument,
                        "weights must be nonnegative and finite");
        const double sum = raw.sum();
        detail::require(sum > 0.0, ErrorCode::invalid_argument, "weights sum to zero");
        raw /= sum;
        // One correction pass so the sum lands inside the simplex tolerance.
        raw /= raw.sum();
        return ProbabilityVector(std::move(raw));
    }

    const Vector& weights() const noexcept { return weights_; }
    Eigen::Index size() const noexcept { return weights_.size(); }
    double operator[](Eigen::Index i) const { return weights_[i]; }

    PositiveMeasure as_measure() const { return PositiveMeasure(weights_); }

private:
    Vector weights_;
};

template <class T>
concept WeightedMeasure = requires(const T& m) {
    { m.weights() } -> std::convertible_to<const Vector&>;
};

namespace detail {

/// Generalized KL on raw vectors; no validation of signs.
inline double kl_raw(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b)
{
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double ai = a[i];
        const double bi = b[i];
        if (ai > 0.0) {
            if (!(bi > 0.0)) {
                throw Error(ErrorCode::divergence_infinite,
                            "a[" + std::to_string(i) + "] > 0 while b[" + std::to_string(i) + "] = 0");
            }
            total += ai * std::log(ai / bi) - ai + bi;
        } else {
            total += bi;
        }
    }
    return total;
}

} // namespace detail

/// Generalized Kullback-Leibler divergence sum_i a_i log(a_i/b_i) - a_i + b_i,
/// with 0 log 0 = 0. Reduces to the usual KL when both arguments are probabilities.
template <WeightedMeasure A, WeightedMeasure B>
double kl_divergence(const A& a, const B& b)
{
    detail::require(a.weights().size() == b.weights().size(), ErrorCode::dimension_mismatch,
                    "kl_divergence: sizes " + std::to_string(a.weights().size()) + " and "
                        + std::to_string(b.weights().size()));
    return detail::kl_raw(a.weights(), b.weights());
}

/// True iff KL(reference, candidate) <= radius (+ tolerance).
inline bool is_in_kl_ball(const ProbabilityVector& reference, const ProbabilityVector& candidate,
                          double radius, double tolerance = feasibility_tolerance)
{
    detail::require(radius >= 0.0, ErrorCode::invalid_argument, "radius must be nonnegative");
    return kl_divergence(reference, candidate) <= radius + tolerance;
}

/// Huber contamination (1 - epsilon) * clean + epsilon * outlier.
inline ProbabilityVector huber_mixture(const ProbabilityVector& clean, const ProbabilityVector& outlier,
                                       double epsilon)
{
    detail::require(epsilon >= 0.0 && epsilon <= 1.0, ErrorCode::epsilon_out_of_range,
                    "epsilon = " + std::to_string(epsilon));
    detail::require(clean.size() == outlier.size(), ErrorCode::dimension_mismatch,
                    "clean and outlier supports differ in length");
    if (epsilon == 0.0) return clean;
    if (epsilon == 1.0) return outlier;
    return ProbabilityVector((1.0 - epsilon) * clean.weights() + epsilon * outlier.weights());
}

} // namespace rgw
