#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hamflow/hamiltonian.hpp"
#include "hamflow/measure.hpp"
#include "hamflow/random.hpp"
#include "hamflow/test_functions.hpp"
#include "hamflow/transport.hpp"

namespace hamflow {

/// tau violates lambda * tau > -1 for an oracle of declared negative convexity modulus lambda.
class ProxGuardError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar = double> struct ProxOptions
{
  Scalar tol = Scalar(1e-10);      // objective decrease
  Scalar grad_tol = Scalar(1e-8);  // L^2(nu) norm of the position gradient
  Index max_iter = 500;
  Scalar armijo = Scalar(1e-4);
  Index max_backtracks = 60;
  /// Starting positions for nu (D x n); defaults to the atoms of mu.
  std::optional<Matrix<Scalar>> initial_positions;
  /// Extra descents from mu plus Gaussian noise at the scale of its spread; the lowest envelope is kept.
  Index restarts = 0;
  std::uint64_t restart_seed = 0;
};

/**
 * Outcome of the proximal step nu in J_tau[mu] (positions-only selection: nu has the weights of mu).
 *
 * super_field = (Id - gamma-bar_mu^nu) / tau lives on mu, sub_field = (gamma-bar_nu^mu - Id) / tau on nu,
 * both computed from the stored plan.
 */
template <typename Scalar = double> struct ProxResult
{
  Scalar tau;
  DiscreteMeasure<Scalar> input_mu;
  DiscreteMeasure<Scalar> nu;
  TransportPlan<Scalar> plan;
  Scalar w2;
  Scalar h_value;
  Scalar envelope;
  VelocityField<Scalar> super_field;
  VelocityField<Scalar> sub_field;
  Index iterations;
  bool converged;
  bool stalled;          // stopped because no Armijo step could be found
  Scalar gradient_norm;  // at the returned nu
  std::vector<Scalar> objective_history;

  /// W2(mu, nu) / tau, the speed controlled by (H1).
  Scalar speed() const { return w2 / tau; }
};

template <typename Scalar>
void check_tau_guard(const HamiltonianOracle<Scalar> &h, Scalar tau)
{
  if (!(tau > Scalar(0)) || !std::isfinite(tau)) {
    throw std::invalid_argument("prox: tau must be positive and finite");
  }
  if (h.convexity_modulus && *h.convexity_modulus < Scalar(0) && *h.convexity_modulus * tau <= Scalar(-1)) {
    throw ProxGuardError("prox: tau = " + std::to_string(double(tau)) + " violates lambda*tau > -1 for lambda = " +
                         std::to_string(double(*h.convexity_modulus)));
  }
}

namespace detail {

// Column k: sum_l coupling(k, l) (to_l - from_k) / w_k, zero for zero-weight atoms.
template <typename Scalar>
Matrix<Scalar> mean_displacement(const Matrix<Scalar> &coupling, const Matrix<Scalar> &from, const Matrix<Scalar> &to,
                                 const Vector<Scalar> &w)
{
  Matrix<Scalar> out = Matrix<Scalar>::Zero(from.rows(), from.cols());
  for (Index k = 0; k < w.size(); ++k) {
    if (w(k) <= Scalar(0)) {
      continue;
    }
    for (Index l = 0; l < to.cols(); ++l) {
      if (coupling(k, l) != Scalar(0)) {
        out.col(k) += coupling(k, l) * (to.col(l) - from.col(k));
      }
    }
    out.col(k) /= w(k);
  }
  return out;
}

template <typename Scalar>
Scalar coupling_cost(const Matrix<Scalar> &coupling, const Matrix<Scalar> &x, const Matrix<Scalar> &y)
{
  return coupling.cwiseProduct(squared_distance_matrix(x, y)).sum();
}

} // namespace detail

/**
 * Local minimizer of nu -> W2^2(mu, nu) / (2 tau) + H(nu) over measures with the atoms' weights of mu, by
 * alternating minimization started at nu = mu:
 *   1. exact optimal plan gamma for the current positions;
 *   2. one descent step on G(y) = sum_ij gamma_ij |x_i - y_j|^2 / (2 tau) + H(nu_y) along its L^2(nu) gradient
 *      (y_j - gamma-bar(y_j)) / tau + xi_H(y_j), Barzilai-Borwein trial step, Armijo backtracking on G.
 * Since W2^2 <= the plan cost, the true objective never increases (checked every iteration). Stops when the
 * gradient norm falls below grad_tol or two consecutive decreases fall below tol.
 */
template <typename Scalar>
ProxResult<Scalar> prox_local(const HamiltonianOracle<Scalar> &h, const DiscreteMeasure<Scalar> &mu, Scalar tau,
                              const ProxOptions<Scalar> &opts = {})
{
  check_tau_guard(h, tau);
  const auto &w = mu.weights();
  const Matrix<Scalar> &x = mu.points();
  Matrix<Scalar> y = opts.initial_positions ? *opts.initial_positions : x;
  if (y.rows() != mu.dim() || y.cols() != mu.size()) {
    throw DimensionMismatch("prox: initial positions do not match the measure");
  }

  DiscreteMeasure<Scalar> nu(y, w);
  auto ot = solve_w2(mu, nu);
  Scalar h_nu = h(nu);
  Scalar objective = ot.plan.cost() / (Scalar(2) * tau) + h_nu;
  std::vector<Scalar> history{objective};

  auto gradient = [&](const DiscreteMeasure<Scalar> &at, const TransportPlan<Scalar> &plan) {
    const Matrix<Scalar> pull = detail::mean_displacement<Scalar>(plan.coupling().transpose(), at.points(), x, w);
    Matrix<Scalar> g = wasserstein_gradient(h, at).vectors() - pull / tau;
    for (Index k = 0; k < w.size(); ++k) {
      if (w(k) <= Scalar(0)) {
        g.col(k).setZero();
      }
    }
    return g;
  };
  auto l2sq = [&w](const Matrix<Scalar> &m) { return m.colwise().squaredNorm().dot(w.transpose()); };

  Matrix<Scalar> g = gradient(nu, ot.plan);
  Scalar gnorm = std::sqrt(l2sq(g));
  Scalar step = tau;
  Index iterations = 0;
  Index small_decreases = 0;
  bool converged = false;
  bool stalled = false;

  while (iterations < opts.max_iter) {
    if (gnorm <= opts.grad_tol) {
      converged = true;
      break;
    }
    const Scalar gsq = gnorm * gnorm;
    Scalar s = step;
    bool accepted = false;
    Matrix<Scalar> y_trial;
    Scalar h_trial = 0;
    for (Index bt = 0; bt <= opts.max_backtracks; ++bt, s *= Scalar(0.5)) {
      y_trial = y - s * g;
      const DiscreteMeasure<Scalar> trial(y_trial, w);
      const Scalar hv = h.value(trial);
      if (!std::isfinite(hv)) {
        continue;
      }
      const Scalar surrogate = detail::coupling_cost(ot.plan.coupling(), x, y_trial) / (Scalar(2) * tau) + hv;
      if (surrogate <= objective - opts.armijo * s * gsq) {
        h_trial = hv;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      stalled = true;
      converged = true;
      break;
    }

    DiscreteMeasure<Scalar> nu_next(y_trial, w);
    auto ot_next = solve_w2(mu, nu_next);
    const Scalar next = ot_next.plan.cost() / (Scalar(2) * tau) + h_trial;
    if (next > objective + Scalar(1e-12) * (Scalar(1) + std::abs(objective))) {
      throw SolverError("prox: objective increased from " + std::to_string(double(objective)) + " to " +
                        std::to_string(double(next)));
    }
    const Scalar decrease = objective - next;
    const Matrix<Scalar> g_next = gradient(nu_next, ot_next.plan);

    // Barzilai-Borwein step <dy, dy> / <dy, dg> in the L^2(nu) metric, kept within [tau/1e3, 1e3 tau].
    const Matrix<Scalar> dy = y_trial - y;
    const Scalar curvature = (dy.cwiseProduct(g_next - g)).colwise().sum().dot(w.transpose());
    const Scalar dyy = l2sq(dy);
    step = curvature > Scalar(0) ? std::clamp(dyy / curvature, tau * Scalar(1e-3), tau * Scalar(1e3)) : Scalar(2) * s;

    y = y_trial;
    nu = std::move(nu_next);
    ot = std::move(ot_next);
    h_nu = h_trial;
    objective = next;
    g = g_next;
    gnorm = std::sqrt(l2sq(g));
    history.push_back(objective);
    ++iterations;

    small_decreases = decrease < opts.tol ? small_decreases + 1 : 0;
    if (small_decreases >= 2) {
      converged = true;
      break;
    }
  }
  if (!converged && gnorm <= opts.grad_tol) {
    converged = true;
  }

  // Fields from the stored plan.
  const Matrix<Scalar> forward = detail::mean_displacement<Scalar>(ot.plan.coupling(), x, y, mu.weights());
  const Matrix<Scalar> backward = detail::mean_displacement<Scalar>(ot.plan.coupling().transpose(), y, x, w);
  VelocityField<Scalar> super_field(mu, -forward / tau);
  VelocityField<Scalar> sub_field(nu, backward / tau);
  const Scalar w2 = ot.distance;
  const Scalar env = w2 * w2 / (Scalar(2) * tau) + h_nu;

  return ProxResult<Scalar>{tau,      mu,        nu,       std::move(ot.plan), w2,      h_nu,
                            env,      std::move(super_field), std::move(sub_field), iterations, converged,
                            stalled,  gnorm,     std::move(history)};
}

/**
 * prox_local from the configured start, followed by opts.restarts descents from perturbed copies of mu
 * (deterministic given restart_seed). Returns the run with the lowest envelope; ties keep the earlier run.
 */
template <typename Scalar>
ProxResult<Scalar> prox(const HamiltonianOracle<Scalar> &h, const DiscreteMeasure<Scalar> &mu, Scalar tau,
                        const ProxOptions<Scalar> &opts = {})
{
  auto best = prox_local(h, mu, tau, opts);
  if (opts.restarts <= 0) {
    return best;
  }
  const Vector<Scalar> c = mu.mean();
  const Scalar spread = std::sqrt((mu.points().colwise() - c).colwise().squaredNorm().dot(mu.weights().transpose()));
  const Scalar scale = spread > Scalar(0) ? spread : Scalar(1);
  ProxOptions<Scalar> local = opts;
  for (Index r = 0; r < opts.restarts; ++r) {
    CounterRng rng(opts.restart_seed, 0x7e57 + std::uint64_t(r));
    local.initial_positions = Matrix<Scalar>(mu.points() + random_points<Scalar>(rng, mu.dim(), mu.size(), double(scale)));
    auto candidate = prox_local(h, mu, tau, local);
    if (candidate.envelope < best.envelope) {
      best = std::move(candidate);
    }
  }
  return best;
}

/// H_tau(mu).
template <typename Scalar>
Scalar envelope(const HamiltonianOracle<Scalar> &h, const DiscreteMeasure<Scalar> &mu, Scalar tau,
                const ProxOptions<Scalar> &opts = {})
{
  return prox(h, mu, tau, opts).envelope;
}

template <typename Scalar> struct InequalityReport
{
  Scalar max_violation = -std::numeric_limits<Scalar>::infinity();
  std::vector<Scalar> violations;
};

/**
 * 1/tau-concavity of H_tau along the canonical plan mu0 -> mu1:
 *   violation(t) = (1-t) H_tau(mu0) + t H_tau(mu1) - t(1-t) W2^2(mu0, mu1) / (2 tau) - H_tau(mu_t).
 */
template <typename Scalar>
InequalityReport<Scalar> verify_envelope_concavity(const HamiltonianOracle<Scalar> &h, const DiscreteMeasure<Scalar> &mu0,
                                                   const DiscreteMeasure<Scalar> &mu1, Scalar tau,
                                                   const std::vector<Scalar> &t_grid, const ProxOptions<Scalar> &opts = {})
{
  const auto ot = solve_w2(mu0, mu1);
  const Scalar e0 = envelope(h, mu0, tau, opts);
  const Scalar e1 = envelope(h, mu1, tau, opts);
  InequalityReport<Scalar> rep;
  for (Scalar t : t_grid) {
    const Scalar et = envelope(h, interpolate(ot.plan, t), tau, opts);
    const Scalar v = (Scalar(1) - t) * e0 + t * e1 - t * (Scalar(1) - t) * ot.plan.cost() / (Scalar(2) * tau) - et;
    rep.violations.push_back(v);
    rep.max_violation = std::max(rep.max_violation, v);
  }
  return rep;
}

/**
 * Superdifferential inequality of H_tau at mu0 = result.input_mu, for each probe mu:
 *   H_tau(mu) - H_tau(mu0) <= int <super_field(x), y - x> d eta + W2^2(mu0, mu) / (2 tau),
 * eta the canonical optimal plan mu0 -> mu. Reports LHS - RHS.
 */
template <typename Scalar>
InequalityReport<Scalar> verify_superdiff_inequality(const ProxResult<Scalar> &result, const HamiltonianOracle<Scalar> &h,
                                                     const std::vector<DiscreteMeasure<Scalar>> &probes,
                                                     const ProxOptions<Scalar> &opts = {})
{
  InequalityReport<Scalar> rep;
  for (const auto &mu : probes) {
    if (mu.dim() != result.input_mu.dim()) {
      throw DimensionMismatch("verify_superdiff_inequality: probe dimension differs");
    }
    const auto eta = solve_w2(result.input_mu, mu);
    const Scalar lhs = envelope(h, mu, result.tau, opts) - result.envelope;
    const Scalar rhs = first_order_pairing(result.super_field, eta.plan) + eta.plan.cost() / (Scalar(2) * result.tau);
    rep.violations.push_back(lhs - rhs);
    rep.max_violation = std::max(rep.max_violation, lhs - rhs);
  }
  return rep;
}

/// Subdifferential test of H at nu = result.nu with xi = sub_field (see check_subdifferential).
template <typename Scalar>
SubdifferentialReport<Scalar> verify_subdiff_at_prox(const ProxResult<Scalar> &result, const HamiltonianOracle<Scalar> &h,
                                                     const std::vector<DiscreteMeasure<Scalar>> &probes)
{
  return check_subdifferential(h, result.nu, result.sub_field, probes);
}

template <typename Scalar> struct StabilityGap
{
  Scalar gap;
  Scalar bound;
  Scalar speed; // C = W2(mu_n, nu_n) / tau_n
};

/**
 * gap = | int <psi, sub_field> dnu_n - int <psi, super_field> dmu_n |, bound = ||grad psi||_inf C^2 tau_n with
 * C = W2(mu_n, nu_n) / tau_n. Both pairings are exact finite sums.
 */
template <typename Scalar>
StabilityGap<Scalar> stability_gap(const DiscreteMeasure<Scalar> &mu_n, const ProxResult<Scalar> &result_n,
                                   const VectorTestField<Scalar> &psi)
{
  if (!(psi.gradient_bound >= Scalar(0)) || !std::isfinite(psi.gradient_bound)) {
    throw std::invalid_argument("stability_gap: test field needs a finite gradient bound");
  }
  if (!(mu_n == result_n.input_mu)) {
    throw DimensionMismatch("stability_gap: prox result was computed at a different measure");
  }
  Scalar on_nu = 0;
  for (Index j = 0; j < result_n.nu.size(); ++j) {
    on_nu += result_n.nu.weight(j) * psi.value(result_n.nu.point(j)).dot(result_n.sub_field.vector(j));
  }
  Scalar on_mu = 0;
  for (Index i = 0; i < mu_n.size(); ++i) {
    on_mu += mu_n.weight(i) * psi.value(mu_n.point(i)).dot(result_n.super_field.vector(i));
  }
  const Scalar c = result_n.speed();
  return {std::abs(on_nu - on_mu), psi.gradient_bound * c * c * result_n.tau, c};
}

} // namespace hamflow
