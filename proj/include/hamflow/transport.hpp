#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "hamflow/measure.hpp"
#include "hamflow/transport_lp.hpp"

namespace hamflow {

/// Squared Euclidean distances |x_i - y_j|^2, computed from differences so coincident points give exact zeros.
template <typename Scalar>
Matrix<Scalar> squared_distance_matrix(const Matrix<Scalar> &x, const Matrix<Scalar> &y)
{
  Matrix<Scalar> c(x.cols(), y.cols());
  for (Index j = 0; j < y.cols(); ++j) {
    c.col(j) = (x.colwise() - y.col(j)).colwise().squaredNorm().transpose();
  }
  return c;
}

/**
 * Coupling gamma between `source` (n atoms) and `target` (m atoms) with the quadratic cost
 * sum_ij gamma_ij |x_i - y_j|^2. Marginals are checked to 1e-9; entries down to -1e-15 are clamped to 0.
 */
template <typename Scalar = double> class TransportPlan
{
public:
  TransportPlan(DiscreteMeasure<Scalar> source, DiscreteMeasure<Scalar> target, Matrix<Scalar> coupling)
    : source_(std::move(source)), target_(std::move(target)), coupling_(std::move(coupling))
  {
    if (source_.dim() != target_.dim()) {
      throw DimensionMismatch("TransportPlan: source and target dimensions differ");
    }
    if (coupling_.rows() != source_.size() || coupling_.cols() != target_.size()) {
      throw DimensionMismatch("TransportPlan: coupling is " + std::to_string(coupling_.rows()) + "x" +
                              std::to_string(coupling_.cols()) + ", expected " + std::to_string(source_.size()) +
                              "x" + std::to_string(target_.size()));
    }
    if ((coupling_.array() < Scalar(-1e-15)).any() || !coupling_.allFinite()) {
      throw std::invalid_argument("TransportPlan: negative or non-finite coupling entry");
    }
    coupling_ = coupling_.cwiseMax(Scalar(0));
    const Scalar row_err = (coupling_.rowwise().sum() - source_.weights()).cwiseAbs().maxCoeff();
    const Scalar col_err = (coupling_.colwise().sum().transpose() - target_.weights()).cwiseAbs().maxCoeff();
    if (row_err > marginal_tolerance || col_err > marginal_tolerance) {
      throw std::invalid_argument("TransportPlan: marginal mismatch (rows " + std::to_string(double(row_err)) +
                                  ", columns " + std::to_string(double(col_err)) + ")");
    }
    cost_ = coupling_.cwiseProduct(squared_distance_matrix(source_.points(), target_.points())).sum();
  }

  static constexpr Scalar marginal_tolerance = Scalar(1e-9);

  /// The independent coupling mu (x) nu.
  static TransportPlan product(DiscreteMeasure<Scalar> source, DiscreteMeasure<Scalar> target)
  {
    Matrix<Scalar> g = source.weights() * target.weights().transpose();
    return TransportPlan(std::move(source), std::move(target), std::move(g));
  }

  const DiscreteMeasure<Scalar> &source() const { return source_; }
  const DiscreteMeasure<Scalar> &target() const { return target_; }
  const Matrix<Scalar> &coupling() const { return coupling_; }
  Scalar operator()(Index i, Index j) const { return coupling_(i, j); }
  Scalar cost() const { return cost_; }
  Index dim() const { return source_.dim(); }

private:
  DiscreteMeasure<Scalar> source_;
  DiscreteMeasure<Scalar> target_;
  Matrix<Scalar> coupling_;
  Scalar cost_ = 0;
};

template <typename Scalar> struct Wasserstein
{
  Scalar distance;
  TransportPlan<Scalar> plan;
};

/// Exact W2 and a canonical optimal plan (Bland-rule transportation simplex; deterministic on ties).
template <typename Scalar>
Wasserstein<Scalar> solve_w2(const DiscreteMeasure<Scalar> &mu, const DiscreteMeasure<Scalar> &nu)
{
  if (mu.dim() != nu.dim()) {
    throw DimensionMismatch("solve_w2: dimensions " + std::to_string(mu.dim()) + " and " + std::to_string(nu.dim()));
  }
  auto lp = solve_transportation(squared_distance_matrix(mu.points(), nu.points()), mu.weights(), nu.weights());
  TransportPlan<Scalar> plan(mu, nu, std::move(lp.flow));
  const Scalar d = std::sqrt(std::max(plan.cost(), Scalar(0)));
  return {d, std::move(plan)};
}

template <typename Scalar> Scalar w2_distance(const DiscreteMeasure<Scalar> &mu, const DiscreteMeasure<Scalar> &nu)
{
  return solve_w2(mu, nu).distance;
}

/// gamma-bar_mu^nu(x_i) = sum_j gamma_ij y_j / w_i, as a field over the source support.
template <typename Scalar> VelocityField<Scalar> barycentric_first(const TransportPlan<Scalar> &plan)
{
  const auto &w = plan.source().weights();
  if ((w.array() <= Scalar(0)).any()) {
    throw std::invalid_argument("barycentric_first: source has an atom of zero weight");
  }
  Matrix<Scalar> bary = plan.target().points() * plan.coupling().transpose();
  bary.array().rowwise() /= w.transpose().array();
  return VelocityField<Scalar>(plan.source(), std::move(bary));
}

/// gamma-bar_nu^mu(y_j) = sum_i gamma_ij x_i / w'_j, as a field over the target support.
template <typename Scalar> VelocityField<Scalar> barycentric_second(const TransportPlan<Scalar> &plan)
{
  const auto &w = plan.target().weights();
  if ((w.array() <= Scalar(0)).any()) {
    throw std::invalid_argument("barycentric_second: target has an atom of zero weight");
  }
  Matrix<Scalar> bary = plan.source().points() * plan.coupling();
  bary.array().rowwise() /= w.transpose().array();
  return VelocityField<Scalar>(plan.target(), std::move(bary));
}

/// Displacement interpolation ((1-t) pi^1 + t pi^2)_# gamma: one atom per positive coupling entry, row-major.
template <typename Scalar> DiscreteMeasure<Scalar> interpolate(const TransportPlan<Scalar> &plan, Scalar t)
{
  if (!(t >= Scalar(0) && t <= Scalar(1))) {
    throw std::invalid_argument("interpolate: t must lie in [0, 1]");
  }
  const auto &g = plan.coupling();
  const Index count = (g.array() > Scalar(0)).count();
  Matrix<Scalar> pts(plan.dim(), count);
  Vector<Scalar> wts(count);
  Index k = 0;
  for (Index i = 0; i < g.rows(); ++i) {
    for (Index j = 0; j < g.cols(); ++j) {
      if (g(i, j) > Scalar(0)) {
        pts.col(k) = (Scalar(1) - t) * plan.source().point(i) + t * plan.target().point(j);
        wts(k) = g(i, j);
        ++k;
      }
    }
  }
  wts /= wts.sum();
  return DiscreteMeasure<Scalar>(std::move(pts), std::move(wts));
}

/// The plan as a measure on R^{2D} with atoms (x_i, y_j) of mass gamma_ij > 0.
template <typename Scalar> DiscreteMeasure<Scalar> plan_as_measure(const TransportPlan<Scalar> &plan)
{
  const auto &g = plan.coupling();
  const Index d = plan.dim();
  const Index count = (g.array() > Scalar(0)).count();
  Matrix<Scalar> pts(2 * d, count);
  Vector<Scalar> wts(count);
  Index k = 0;
  for (Index i = 0; i < g.rows(); ++i) {
    for (Index j = 0; j < g.cols(); ++j) {
      if (g(i, j) > Scalar(0)) {
        pts.col(k).head(d) = plan.source().point(i);
        pts.col(k).tail(d) = plan.target().point(j);
        wts(k) = g(i, j);
        ++k;
      }
    }
  }
  wts /= wts.sum();
  return DiscreteMeasure<Scalar>(std::move(pts), std::move(wts));
}

/// W2 between two plans viewed as measures on R^{2D}.
template <typename Scalar> Scalar plan_distance(const TransportPlan<Scalar> &a, const TransportPlan<Scalar> &b)
{
  if (a.dim() != b.dim()) {
    throw DimensionMismatch("plan_distance: plans live in different dimensions");
  }
  return w2_distance(plan_as_measure(a), plan_as_measure(b));
}

} // namespace hamflow
