#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "hamflow/flow.hpp"
#include "hamflow/random.hpp"

namespace hamflow {

template <typename Scalar = double> struct StudyOptions
{
  std::vector<Scalar> taus;       // strictly decreasing
  FlowConfig<Scalar> flow;        // tau is overwritten per member run
  Index threads = 1;
  Scalar probe_radius = Scalar(1e-3);
  Index probe_count = 8;
  std::uint64_t seed = 0;
  std::optional<VectorTestField<Scalar>> psi; // default: radial bump covering the initial support
  Scalar gap_tol = Scalar(1e-8);
  Scalar hs1_tol = Scalar(1e-9);
  Scalar ode_tol = Scalar(1e-12);
};

template <typename Scalar> struct CauchyRow
{
  Scalar time, tau_coarse, tau_fine, w2;
};

template <typename Scalar> struct SubdiffRow
{
  Scalar time, tau, min_ratio, min_residual, max_distance;
};

template <typename Scalar> struct GapRow
{
  Scalar time, tau, gap, bound, speed;
  bool holds;
};

template <typename Scalar> struct OdeRow
{
  Scalar tau, time, error;
};

template <typename Scalar = double> struct StudyReport
{
  std::vector<Scalar> taus;
  std::vector<Trajectory<Scalar>> runs;
  std::vector<CauchyRow<Scalar>> cauchy;
  std::vector<SubdiffRow<Scalar>> subdiff;
  std::vector<GapRow<Scalar>> gaps;
  std::vector<OdeRow<Scalar>> ode;
  std::vector<std::string> violations;
  bool all_completed = true;

  bool bounds_held() const { return violations.empty(); }
  bool ok() const { return all_completed && bounds_held(); }
};

/**
 * High-accuracy solution of x' = J xi(delta_x) (xi the Wasserstein gradient of h at a Dirac, i.e. grad V for a
 * potential Hamiltonian) at each of the increasing `times`, by adaptive Dormand-Prince.
 */
template <typename Scalar>
std::vector<Vector<Scalar>> reference_dirac_path(const HamiltonianOracle<Scalar> &h, const SymplecticStructure<Scalar> &j,
                                                 const Vector<Scalar> &x0, const std::vector<Scalar> &times,
                                                 Scalar tol = Scalar(1e-12))
{
  namespace odeint = boost::numeric::odeint;
  using State = std::vector<Scalar>;
  const Index d = x0.size();
  auto rhs = [&](const State &s, State &ds, Scalar) {
    const Vector<Scalar> x = Eigen::Map<const Vector<Scalar>>(s.data(), d);
    const Vector<Scalar> v = j.matrix() * wasserstein_gradient(h, DiscreteMeasure<Scalar>::dirac(x)).vector(0);
    ds.assign(v.data(), v.data() + d);
  };
  State state(x0.data(), x0.data() + d);
  std::vector<Vector<Scalar>> out;
  Scalar t = 0;
  for (Scalar target : times) {
    if (target < t) {
      throw std::invalid_argument("reference_dirac_path: times must be increasing");
    }
    if (target > t) {
      odeint::integrate_adaptive(odeint::make_controlled<odeint::runge_kutta_dopri5<State, Scalar>>(tol, tol), rhs,
                                 state, t, target, (target - t) / Scalar(1000));
      t = target;
    }
    out.push_back(Eigen::Map<const Vector<Scalar>>(state.data(), d));
  }
  return out;
}

namespace detail {

template <typename Scalar, typename Fn> void parallel_for(Index count, Index threads, Fn fn)
{
  const Index workers = std::clamp<Index>(threads, 1, std::max<Index>(count, 1));
  if (workers == 1) {
    for (Index i = 0; i < count; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) {
        fn(i);
      }
    });
  }
  for (auto &th : pool) {
    th.join();
  }
}

// Prox at snapshot s of a run: reused from the grid when the snapshot is a grid time.
template <typename Scalar>
ProxResult<Scalar> snapshot_prox(const HamiltonianOracle<Scalar> &h, const Trajectory<Scalar> &run, std::size_t s,
                                 const FlowConfig<Scalar> &cfg)
{
  const Index k = grid_index(run.snapshot_times[s], cfg.T, cfg.N);
  if (k >= 0 && k < run.size()) {
    return run.proxes[k];
  }
  return prox(h, run.snapshots[s], run.tau, cfg.prox);
}

} // namespace detail

/**
 * One flow per tau (identical N, T), run concurrently; then: Cauchy table W2(mu_t^{tau_i}, mu_t^{tau_{i+1}}) at each
 * snapshot, subdifferential residuals of the prox companions for the smallest tau, stability gaps for every run and
 * snapshot, HS1 and support checks, and for Dirac inputs the error against the reference ODE.
 * Member runs that truncate mark the study incomplete; the rest of the report is still filled.
 */
template <typename Scalar>
StudyReport<Scalar> tau_study(const HamiltonianOracle<Scalar> &h, const DiscreteMeasure<Scalar> &mu_bar,
                              const StudyOptions<Scalar> &opts)
{
  if (opts.taus.empty()) {
    throw std::invalid_argument("tau_study: no step sizes given");
  }
  for (std::size_t i = 1; i < opts.taus.size(); ++i) {
    if (!(opts.taus[i] < opts.taus[i - 1])) {
      throw std::invalid_argument("tau_study: taus must be strictly decreasing");
    }
  }
  std::vector<FlowConfig<Scalar>> configs;
  for (Scalar tau : opts.taus) {
    FlowConfig<Scalar> cfg = opts.flow;
    cfg.tau = tau;
    if (cfg.snapshots.empty()) {
      cfg.snapshots = {cfg.T};
    }
    cfg.validate(h, mu_bar.dim());
    configs.push_back(std::move(cfg));
  }

  StudyReport<Scalar> rep;
  rep.taus = opts.taus;
  rep.runs.resize(configs.size());
  detail::parallel_for<Scalar>(Index(configs.size()), opts.threads,
                               [&](Index i) { rep.runs[i] = run_flow(h, mu_bar, configs[i]); });

  for (std::size_t i = 0; i < rep.runs.size(); ++i) {
    if (rep.runs[i].truncated) {
      rep.all_completed = false;
      rep.violations.push_back("run tau=" + std::to_string(double(opts.taus[i])) + " truncated: " + rep.runs[i].error);
    }
  }

  // Cauchy table over snapshots present in both runs (snapshot lists share their order).
  for (std::size_t i = 0; i + 1 < rep.runs.size(); ++i) {
    const auto &a = rep.runs[i];
    const auto &b = rep.runs[i + 1];
    const std::size_t common = std::min(a.snapshots.size(), b.snapshots.size());
    for (std::size_t s = 0; s < common; ++s) {
      rep.cauchy.push_back({a.snapshot_times[s], opts.taus[i], opts.taus[i + 1], w2_distance(a.snapshots[s], b.snapshots[s])});
    }
  }

  const VectorTestField<Scalar> psi = opts.psi ? *opts.psi
                                               : radial_bump_field<Scalar>(mu_bar.mean(),
                                                                           Scalar(2) * support_radius(push_forward(
                                                                                         mu_bar, mu_bar.points().colwise() - mu_bar.mean())) +
                                                                             Scalar(1));

  for (std::size_t i = 0; i < rep.runs.size(); ++i) {
    const auto &run = rep.runs[i];
    const auto &cfg = configs[i];
    const bool finest = i + 1 == rep.runs.size();

    for (const auto &d : run.diagnostics) {
      const Scalar slack = d.prox_speed * d.prox_speed - d.super_norm * d.super_norm;
      if (slack < -opts.hs1_tol) {
        rep.violations.push_back("HS1 tau=" + std::to_string(double(run.tau)) + " t=" + std::to_string(double(d.time)) +
                                 " slack=" + std::to_string(double(slack)));
      }
    }
    const Scalar k_hat = cfg.k_hat ? *cfg.k_hat : empirical_support_growth(run);
    const auto sup = support_report(run, support_radius(mu_bar), k_hat, run.tau, run.h);
    if (sup.breaches > 0) {
      rep.violations.push_back("support tau=" + std::to_string(double(run.tau)) + " breaches=" + std::to_string(sup.breaches));
    }

    for (std::size_t s = 0; s < run.snapshots.size(); ++s) {
      std::optional<ProxResult<Scalar>> maybe;
      try {
        maybe = detail::snapshot_prox(h, run, s, cfg);
      } catch (const std::exception &e) {
        rep.all_completed = false;
        rep.violations.push_back("prox at snapshot t=" + std::to_string(double(run.snapshot_times[s])) + ": " + e.what());
        continue;
      }
      const auto &p = *maybe;
      const auto g = stability_gap(run.snapshots[s], p, psi);
      const bool holds = g.gap <= g.bound + opts.gap_tol;
      rep.gaps.push_back({run.snapshot_times[s], run.tau, g.gap, g.bound, g.speed, holds});
      if (!holds) {
        rep.violations.push_back("gap tau=" + std::to_string(double(run.tau)) + " t=" +
                                 std::to_string(double(run.snapshot_times[s])) + " gap=" + std::to_string(double(g.gap)) +
                                 " bound=" + std::to_string(double(g.bound)));
      }
      if (finest) {
        CounterRng rng(opts.seed, 0x5d1f + s);
        std::vector<DiscreteMeasure<Scalar>> probes;
        for (Index q = 0; q < opts.probe_count; ++q) {
          probes.push_back(perturb_positions(p.nu, rng, double(opts.probe_radius)));
        }
        const auto sd = verify_subdiff_at_prox(p, h, probes);
        rep.subdiff.push_back({run.snapshot_times[s], run.tau, sd.min_ratio, sd.min_residual, sd.max_distance});
      }
    }
  }

  if (mu_bar.size() == 1) {
    std::vector<Scalar> times = configs.front().snapshots;
    std::sort(times.begin(), times.end());
    const auto ref = reference_dirac_path(h, configs.front().structure, Vector<Scalar>(mu_bar.point(0)), times, opts.ode_tol);
    for (std::size_t i = 0; i < rep.runs.size(); ++i) {
      const auto &run = rep.runs[i];
      for (std::size_t s = 0; s < run.snapshots.size(); ++s) {
        const auto pos = std::lower_bound(times.begin(), times.end(), run.snapshot_times[s]) - times.begin();
        rep.ode.push_back({run.tau, run.snapshot_times[s], (run.snapshots[s].point(0) - ref[pos]).norm()});
      }
    }
  }
  return rep;
}

} // namespace hamflow
