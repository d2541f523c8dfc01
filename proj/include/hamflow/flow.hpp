#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "hamflow/hamiltonian.hpp"
#include "hamflow/measure.hpp"
#include "hamflow/moreau_yosida.hpp"
#include "hamflow/test_functions.hpp"
#include "hamflow/transport.hpp"

namespace hamflow {

template <typename Scalar = double> struct FlowConfig
{
  Scalar tau = Scalar(0.1);
  Scalar T = Scalar(1);
  Index N = 100;
  std::vector<Scalar> snapshots;
  SymplecticStructure<Scalar> structure = SymplecticStructure<Scalar>::canonical(2);
  std::optional<Scalar> C_o;
  std::optional<Scalar> k_hat;
  ProxOptions<Scalar> prox;

  Scalar h() const { return T / Scalar(N); }
  Scalar grid_time(Index k) const { return T * Scalar(k) / Scalar(N); }

  void validate(const HamiltonianOracle<Scalar> &ham, Index dim) const
  {
    if (N < 1) {
      throw std::invalid_argument("flow: N must be at least 1");
    }
    if (!(T > Scalar(0)) || !std::isfinite(T)) {
      throw std::invalid_argument("flow: T must be positive and finite");
    }
    for (Scalar t : snapshots) {
      if (!(t >= Scalar(0) && t <= T)) {
        throw std::invalid_argument("flow: snapshot time " + std::to_string(double(t)) + " outside [0, T]");
      }
    }
    if (structure.dim() != dim) {
      throw DimensionMismatch("flow: structure dimension " + std::to_string(structure.dim()) +
                              " does not match measure dimension " + std::to_string(dim));
    }
    check_tau_guard(ham, tau);
  }
};

/// Diagnostics at grid time t_k = k h.
template <typename Scalar = double> struct StepRecord
{
  Scalar time = 0;
  Scalar step_w2 = 0;        // W2(mu_{k-1}, mu_k); 0 at k = 0
  Scalar velocity_norm = 0;  // ||w_k||_{mu_k}
  Scalar super_norm = 0;     // ||(Id - gamma-bar)/tau||_{mu_k}
  Scalar prox_speed = 0;     // W2(mu_k, nu_k) / tau
  Scalar support_radius = 0; // of mu_k
  Scalar prox_radius = 0;    // of nu_k
  Scalar envelope = 0;       // H_tau(mu_k)
  Scalar orthogonality = 0;  // max_i |<w_k(x_i), super_field(x_i)>|
  Index prox_iterations = 0;
};

/**
 * Grid samples of the piecewise-frozen construction: measures[k] = mu_{kh}, velocities[k] = w on [kh, (k+1)h),
 * proxes[k] = the prox at mu_{kh}. All lists have equal length; a truncated run stops at the last good step.
 */
template <typename Scalar = double> struct Trajectory
{
  Scalar tau = 0;
  Scalar h = 0;
  std::vector<Scalar> times;
  std::vector<DiscreteMeasure<Scalar>> measures;
  std::vector<VelocityField<Scalar>> velocities;
  std::vector<ProxResult<Scalar>> proxes;
  std::vector<StepRecord<Scalar>> diagnostics;
  std::vector<Scalar> snapshot_times;
  std::vector<DiscreteMeasure<Scalar>> snapshots;
  bool truncated = false;
  std::string error;

  Index size() const { return Index(times.size()); }
  bool empty() const { return times.empty(); }
  const DiscreteMeasure<Scalar> &final_measure() const { return measures.back(); }
};

template <typename Scalar> struct StepVelocity
{
  VelocityField<Scalar> w;
  ProxResult<Scalar> prox;
};

/// w(x_i) = J super_field(x_i), with the prox at mu attached.
template <typename Scalar>
StepVelocity<Scalar> step_velocity(const HamiltonianOracle<Scalar> &h, const DiscreteMeasure<Scalar> &mu, Scalar tau,
                                   const SymplecticStructure<Scalar> &j, const ProxOptions<Scalar> &opts = {})
{
  auto p = prox(h, mu, tau, opts);
  auto w = j.apply(p.super_field);
  return {std::move(w), std::move(p)};
}

/// (Id + dt w)_# mu.
template <typename Scalar>
DiscreteMeasure<Scalar> advance(const DiscreteMeasure<Scalar> &mu, const VelocityField<Scalar> &w, Scalar dt)
{
  if (!(dt >= Scalar(0))) {
    throw std::invalid_argument("advance: dt must be nonnegative");
  }
  if (!(w.base() == mu)) {
    throw DimensionMismatch("advance: velocity field is based on a different measure");
  }
  return push_forward(mu, mu.points() + dt * w.vectors());
}

namespace detail {

template <typename Scalar> Scalar max_orthogonality(const VelocityField<Scalar> &w, const VelocityField<Scalar> &v)
{
  return (w.vectors().cwiseProduct(v.vectors())).colwise().sum().cwiseAbs().maxCoeff();
}

// Grid index k with t within 1e-12 T of k h, else -1.
template <typename Scalar> Index grid_index(Scalar t, Scalar T, Index n)
{
  const Scalar k = std::round(t / T * Scalar(n));
  return std::abs(t - T * k / Scalar(n)) <= Scalar(1e-12) * T ? Index(k) : Index(-1);
}

} // namespace detail

/**
 * Piecewise-frozen construction: for k = 0..N-1 compute w_k = J (Id - gamma-bar)/tau at mu_{kh}, freeze it on
 * [kh, (k+1)h] and push forward. A prox is also taken at t = T so every grid point carries a velocity.
 * A failing or non-converged prox truncates the run; the error text is kept in the trajectory.
 */
template <typename Scalar>
Trajectory<Scalar> run_flow(const HamiltonianOracle<Scalar> &h, const DiscreteMeasure<Scalar> &mu_bar,
                            const FlowConfig<Scalar> &cfg)
{
  cfg.validate(h, mu_bar.dim());
  Trajectory<Scalar> traj;
  traj.tau = cfg.tau;
  traj.h = cfg.h();
  const Scalar dt = cfg.h();

  DiscreteMeasure<Scalar> mu = mu_bar;
  for (Index k = 0; k <= cfg.N; ++k) {
    std::optional<StepVelocity<Scalar>> sv;
    try {
      sv = step_velocity(h, mu, cfg.tau, cfg.structure, cfg.prox);
      if (!sv->prox.converged) {
        traj.truncated = true;
        traj.error = "prox did not converge at t = " + std::to_string(double(cfg.grid_time(k))) + " after " +
                     std::to_string(sv->prox.iterations) + " iterations";
      }
    } catch (const std::exception &e) {
      traj.truncated = true;
      traj.error = std::string("prox failed at t = ") + std::to_string(double(cfg.grid_time(k))) + ": " + e.what();
    }
    if (traj.truncated) {
      break;
    }

    StepRecord<Scalar> rec;
    rec.time = cfg.grid_time(k);
    rec.step_w2 = traj.measures.empty() ? Scalar(0) : w2_distance(traj.measures.back(), mu);
    rec.velocity_norm = l2_norm(sv->w);
    rec.super_norm = l2_norm(sv->prox.super_field);
    rec.prox_speed = sv->prox.speed();
    rec.support_radius = support_radius(mu);
    rec.prox_radius = support_radius(sv->prox.nu);
    rec.envelope = sv->prox.envelope;
    rec.orthogonality = detail::max_orthogonality(sv->w, sv->prox.super_field);
    rec.prox_iterations = sv->prox.iterations;

    DiscreteMeasure<Scalar> next = k < cfg.N ? advance(mu, sv->w, dt) : mu;
    traj.times.push_back(rec.time);
    traj.measures.push_back(mu);
    traj.velocities.push_back(std::move(sv->w));
    traj.proxes.push_back(std::move(sv->prox));
    traj.diagnostics.push_back(rec);
    mu = std::move(next);
  }

  for (Scalar t : cfg.snapshots) {
    const Index on_grid = detail::grid_index(t, cfg.T, cfg.N);
    if (on_grid >= 0) {
      if (on_grid >= traj.size()) {
        continue;
      }
      traj.snapshot_times.push_back(t);
      traj.snapshots.push_back(traj.measures[on_grid]);
      continue;
    }
    const Index k = std::min(Index(std::floor(t / dt)), cfg.N - 1);
    if (k >= traj.size()) {
      continue;
    }
    traj.snapshot_times.push_back(t);
    traj.snapshots.push_back(advance(traj.measures[k], traj.velocities[k], t - cfg.grid_time(k)));
  }
  return traj;
}

template <typename Scalar> struct LipschitzReport
{
  Scalar lipschitz = 0;         // max_k W2(mu_k, mu_{k+1}) / h
  Scalar max_velocity_norm = 0; // max_k ||w_k||
  Scalar max_prox_speed = 0;    // max_k W2(mu_k, nu_k) / tau
};

template <typename Scalar> LipschitzReport<Scalar> lipschitz_report(const Trajectory<Scalar> &traj)
{
  if (traj.size() < 2) {
    throw std::invalid_argument("lipschitz_report: need at least two grid points");
  }
  LipschitzReport<Scalar> rep;
  for (Index k = 0; k < traj.size(); ++k) {
    const auto &d = traj.diagnostics[k];
    if (k > 0) {
      rep.lipschitz = std::max(rep.lipschitz, d.step_w2 / (traj.times[k] - traj.times[k - 1]));
    }
    if (k + 1 < traj.size()) {
      rep.max_velocity_norm = std::max(rep.max_velocity_norm, d.velocity_norm);
      rep.max_prox_speed = std::max(rep.max_prox_speed, d.prox_speed);
    }
  }
  return rep;
}

/// Largest radius(nu_k) / radius(mu_k) over the run: the smallest k for which supp nu_k lies in B_0(k r_k).
template <typename Scalar> Scalar empirical_support_growth(const Trajectory<Scalar> &traj)
{
  Scalar k_hat = 0;
  for (const auto &d : traj.diagnostics) {
    if (d.support_radius > Scalar(0)) {
      k_hat = std::max(k_hat, d.prox_radius / d.support_radius);
    } else if (d.prox_radius > Scalar(0)) {
      return std::numeric_limits<Scalar>::infinity();
    }
  }
  return k_hat;
}

template <typename Scalar> struct SupportRow
{
  Scalar time;
  Scalar radius;
  Scalar bound;
};

template <typename Scalar> struct SupportReport
{
  std::vector<SupportRow<Scalar>> rows;
  Index breaches = 0;        // per-interval bound
  Index global_breaches = 0; // e^{(1+k)T/tau} r
  Scalar global_bound = 0;
  Scalar max_ratio = 0;      // max radius / bound
};

/**
 * Checks radius(mu_t) <= (1 + (1+k_hat) h/tau)^{ceil(t/h)} r + tol at grid points and snapshots, and against
 * e^{(1+k_hat) t_end/tau} r with t_end the horizon.
 */
template <typename Scalar>
SupportReport<Scalar> support_report(const Trajectory<Scalar> &traj, Scalar r, Scalar k_hat, Scalar tau, Scalar h,
                                     Scalar tol = Scalar(1e-9))
{
  SupportReport<Scalar> rep;
  const Scalar growth = Scalar(1) + (Scalar(1) + k_hat) * h / tau;
  const Scalar horizon = traj.empty() ? Scalar(0) : std::max(traj.times.back(), Scalar(0));
  Scalar t_end = horizon;
  for (Scalar t : traj.snapshot_times) {
    t_end = std::max(t_end, t);
  }
  rep.global_bound = std::exp((Scalar(1) + k_hat) * t_end / tau) * r;
  auto check = [&](Scalar t, const DiscreteMeasure<Scalar> &mu) {
    const Scalar steps = std::ceil(t / h - Scalar(1e-9));
    const Scalar bound = std::pow(growth, std::max(steps, Scalar(0))) * r;
    const Scalar radius = support_radius(mu);
    rep.rows.push_back({t, radius, bound});
    if (radius > bound + tol) {
      ++rep.breaches;
    }
    if (radius > rep.global_bound + tol) {
      ++rep.global_breaches;
    }
    if (bound > Scalar(0)) {
      rep.max_ratio = std::max(rep.max_ratio, radius / bound);
    }
  };
  for (Index k = 0; k < traj.size(); ++k) {
    check(traj.times[k], traj.measures[k]);
  }
  for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
    check(traj.snapshot_times[s], traj.snapshots[s]);
  }
  return rep;
}

enum class TimeQuadrature { trapezoid, gauss_legendre };

namespace detail {

// Gauss-Legendre nodes and weights on [0, 1] (Golub-Welsch).
template <typename Scalar> std::pair<Vector<Scalar>, Vector<Scalar>> gauss_legendre(Index n)
{
  Matrix<Scalar> jac = Matrix<Scalar>::Zero(n, n);
  for (Index i = 1; i < n; ++i) {
    const Scalar b = Scalar(i) / std::sqrt(Scalar(4 * i * i - 1));
    jac(i, i - 1) = b;
    jac(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(jac);
  Vector<Scalar> nodes = (es.eigenvalues().array() + Scalar(1)) / Scalar(2);
  Vector<Scalar> weights = es.eigenvectors().row(0).transpose().array().square();
  return {nodes, weights};
}

} // namespace detail

/**
 * |int_0^T int eta'(t) zeta + eta(t) <grad zeta, J v_t> dmu_t dt| over the stored construction, v_t the frozen
 * super field on each grid interval and mu_t = advance(mu_kh, J v_kh, t - kh). Spatial integrals are exact sums;
 * time integrals use the trapezoid rule (or 8-point Gauss-Legendre) on every grid interval.
 */
template <typename Scalar>
Scalar continuity_residual(const Trajectory<Scalar> &traj, const SymplecticStructure<Scalar> &j, const TimeBump<Scalar> &eta,
                           const ScalarTestFunction<Scalar> &zeta, TimeQuadrature rule = TimeQuadrature::trapezoid)
{
  if (traj.size() < 2) {
    throw std::invalid_argument("continuity_residual: need at least two grid points");
  }
  if (!(eta.lo > traj.times.front() && eta.hi < traj.times.back())) {
    throw std::invalid_argument("continuity_residual: time bump support must lie inside (0, T)");
  }
  auto integrand = [&](Scalar t, const DiscreteMeasure<Scalar> &mu, const Matrix<Scalar> &vel) {
    Scalar s = 0;
    const Scalar e = eta.value(t);
    const Scalar de = eta.derivative(t);
    for (Index i = 0; i < mu.size(); ++i) {
      const Vector<Scalar> x = mu.point(i);
      s += mu.weight(i) * (de * zeta.value(x) + e * zeta.gradient(x).dot(vel.col(i)));
    }
    return s;
  };
  Vector<Scalar> nodes;
  Vector<Scalar> weights;
  if (rule == TimeQuadrature::trapezoid) {
    nodes = Vector<Scalar>::LinSpaced(2, Scalar(0), Scalar(1));
    weights = Vector<Scalar>::Constant(2, Scalar(0.5));
  } else {
    std::tie(nodes, weights) = detail::gauss_legendre<Scalar>(8);
  }
  Scalar total = 0;
  for (Index k = 0; k + 1 < traj.size(); ++k) {
    const Scalar t0 = traj.times[k];
    const Scalar len = traj.times[k + 1] - t0;
    const Matrix<Scalar> vel = j.matrix() * traj.proxes[k].super_field.vectors();
    const VelocityField<Scalar> w(traj.measures[k], vel);
    Scalar part = 0;
    for (Index q = 0; q < nodes.size(); ++q) {
      const Scalar s = nodes(q) * len;
      const auto mu = s == Scalar(0) ? traj.measures[k] : advance(traj.measures[k], w, s);
      part += weights(q) * integrand(t0 + s, mu, vel);
    }
    total += part * len;
  }
  return std::abs(total);
}

} // namespace hamflow
