#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "hamflow/transport_lp.hpp"

namespace hamflow {

using Index = Eigen::Index;

template <typename Scalar> using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar> using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Thrown when two objects that must live in the same R^D (or over the same support) do not.
class DimensionMismatch : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <typename Scalar> constexpr Scalar mass_tolerance()
{
  return std::max(Scalar(1e-12), Scalar(64) * std::numeric_limits<Scalar>::epsilon());
}

} // namespace detail

/**
 * Finitely supported probability measure on R^D: sum_i w_i delta_{x_i}.
 *
 * Points are stored column-wise (D x n). Weights must be nonnegative and sum to one within 1e-12;
 * bad input is rejected, never renormalized. Coincident points are allowed and kept as separate atoms.
 */
template <typename Scalar = double> class DiscreteMeasure
{
public:
  using Points = Matrix<Scalar>;
  using Weights = Vector<Scalar>;

  DiscreteMeasure(Points points, Weights weights) : points_(std::move(points)), weights_(std::move(weights))
  {
    if (points_.rows() < 1) {
      throw std::invalid_argument("DiscreteMeasure: dimension must be positive");
    }
    if (points_.cols() < 1) {
      throw std::invalid_argument("DiscreteMeasure: at least one support point is required");
    }
    if (weights_.size() != points_.cols()) {
      throw DimensionMismatch("DiscreteMeasure: " + std::to_string(weights_.size()) + " weights for " +
                              std::to_string(points_.cols()) + " points");
    }
    if (!points_.allFinite() || !weights_.allFinite()) {
      throw std::invalid_argument("DiscreteMeasure: non-finite entries");
    }
    if ((weights_.array() < Scalar(0)).any()) {
      throw std::invalid_argument("DiscreteMeasure: negative weight");
    }
    const Scalar total = weights_.sum();
    if (std::abs(total - Scalar(1)) > detail::mass_tolerance<Scalar>()) {
      throw std::invalid_argument("DiscreteMeasure: weights sum to " + std::to_string(double(total)) + ", expected 1");
    }
  }

  static DiscreteMeasure dirac(const Vector<Scalar> &x)
  {
    return DiscreteMeasure(Points(x), Weights::Ones(1));
  }

  static DiscreteMeasure uniform(Points points)
  {
    const Index n = points.cols();
    return DiscreteMeasure(std::move(points), Weights::Constant(n, Scalar(1) / Scalar(n)));
  }

  Index dim() const { return points_.rows(); }
  Index size() const { return points_.cols(); }
  const Points &points() const { return points_; }
  const Weights &weights() const { return weights_; }
  auto point(Index i) const { return points_.col(i); }
  Scalar weight(Index i) const { return weights_(i); }

  Vector<Scalar> mean() const { return points_ * weights_; }

  /// Same atoms in the same order, bit for bit.
  friend bool operator==(const DiscreteMeasure &a, const DiscreteMeasure &b)
  {
    return a.points_.rows() == b.points_.rows() && a.points_.cols() == b.points_.cols() &&
           a.points_ == b.points_ && a.weights_ == b.weights_;
  }

private:
  Points points_;
  Weights weights_;
};

/// One vector per support point of `base`; an element of L^2(base).
template <typename Scalar = double> class VelocityField
{
public:
  VelocityField(DiscreteMeasure<Scalar> base, Matrix<Scalar> vectors)
    : base_(std::move(base)), vectors_(std::move(vectors))
  {
    if (vectors_.rows() != base_.dim() || vectors_.cols() != base_.size()) {
      throw DimensionMismatch("VelocityField: expected " + std::to_string(base_.dim()) + "x" +
                              std::to_string(base_.size()) + " vectors");
    }
  }

  static VelocityField zero(DiscreteMeasure<Scalar> base)
  {
    Matrix<Scalar> v = Matrix<Scalar>::Zero(base.dim(), base.size());
    return VelocityField(std::move(base), std::move(v));
  }

  const DiscreteMeasure<Scalar> &base() const { return base_; }
  const Matrix<Scalar> &vectors() const { return vectors_; }
  auto vector(Index i) const { return vectors_.col(i); }
  Index dim() const { return base_.dim(); }
  Index size() const { return base_.size(); }

private:
  DiscreteMeasure<Scalar> base_;
  Matrix<Scalar> vectors_;
};

template <typename Scalar> Scalar second_moment(const DiscreteMeasure<Scalar> &mu)
{
  return mu.points().colwise().squaredNorm().dot(mu.weights().transpose());
}

/// Image measure f_# mu given the values f(x_i) column-wise; weights carried over, images never merged.
template <typename Scalar, typename Derived>
DiscreteMeasure<Scalar> push_forward(const DiscreteMeasure<Scalar> &mu, const Eigen::MatrixBase<Derived> &map_values)
{
  if (map_values.cols() != mu.size()) {
    throw DimensionMismatch("push_forward: " + std::to_string(map_values.cols()) + " image points for " +
                            std::to_string(mu.size()) + " atoms");
  }
  return DiscreteMeasure<Scalar>(Matrix<Scalar>(map_values), mu.weights());
}

/// Radius of the smallest origin-centred ball containing the support.
template <typename Scalar> Scalar support_radius(const DiscreteMeasure<Scalar> &mu)
{
  return mu.points().colwise().norm().maxCoeff();
}

template <typename Scalar> Scalar l2_norm(const VelocityField<Scalar> &field)
{
  const Scalar sq = field.vectors().colwise().squaredNorm().dot(field.base().weights().transpose());
  return std::sqrt(std::max(sq, Scalar(0)));
}

/// <u, v>_{L^2(mu)} for two fields over the same support.
template <typename Scalar> Scalar l2_inner(const VelocityField<Scalar> &u, const VelocityField<Scalar> &v)
{
  if (u.size() != v.size() || u.dim() != v.dim()) {
    throw DimensionMismatch("l2_inner: fields over different supports");
  }
  return (u.vectors().cwiseProduct(v.vectors())).colwise().sum().dot(u.base().weights().transpose());
}

/**
 * Bounded-Lipschitz surrogate for narrow convergence: the optimal transport cost between mu and nu
 * for the truncated ground metric min(|x - y|, 1). Truncation keeps it a metric and bounds it by 1.
 */
template <typename Scalar>
Scalar bounded_lipschitz_distance(const DiscreteMeasure<Scalar> &mu, const DiscreteMeasure<Scalar> &nu)
{
  if (mu.dim() != nu.dim()) {
    throw DimensionMismatch("bounded_lipschitz_distance: dimensions " + std::to_string(mu.dim()) + " and " +
                            std::to_string(nu.dim()));
  }
  Matrix<Scalar> cost(mu.size(), nu.size());
  for (Index j = 0; j < nu.size(); ++j) {
    cost.col(j) = (mu.points().colwise() - nu.point(j)).colwise().norm().transpose().cwiseMin(Scalar(1));
  }
  return std::max(Scalar(0), solve_transportation(cost, mu.weights(), nu.weights()).cost);
}

} // namespace hamflow
