#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "hamflow/cli.hpp"
#include "hamflow/config.hpp"
#include "hamflow/hamflow.hpp"

namespace hamflow {

namespace {

using Checks = std::vector<VerifyCheck>;

VerifyCheck at_most(std::string name, double value, double limit) { return {std::move(name), value <= limit, value, limit}; }
VerifyCheck at_least(std::string name, double value, double limit) { return {std::move(name), value >= limit, value, limit}; }

// Minimum over permutations of the equal-weight matching cost.
double matching_w2(const DiscreteMeasure<double> &mu, const DiscreteMeasure<double> &nu)
{
  const auto c = squared_distance_matrix(mu.points(), nu.points());
  std::vector<Index> p(std::size_t(mu.size()));
  std::iota(p.begin(), p.end(), Index(0));
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (Index i = 0; i < mu.size(); ++i) {
      s += c(i, p[std::size_t(i)]);
    }
    best = std::min(best, s / double(mu.size()));
  } while (std::next_permutation(p.begin(), p.end()));
  return std::sqrt(best);
}

ExampleHamiltonian<double> example(CounterRng &rng, Index dim)
{
  return {0.5, random_measure<double>(rng, dim, 3, 0.5), quadratic_potential<double>(Vector<double>::Zero(dim)),
          quadratic_interaction<double>(), 1.0};
}

Checks metric(std::uint64_t seed)
{
  CounterRng rng(seed, 101);
  double brute = 0, symmetry = 0, identity = 0, triangle = -1;
  for (int k = 0; k < 40; ++k) {
    const Index dim = 1 + rng.below(3);
    const Index n = 1 + rng.below(5);
    const auto a = random_measure<double>(rng, dim, n, 1.0, true);
    const auto b = random_measure<double>(rng, dim, n, 1.0, true);
    const auto c = random_measure<double>(rng, dim, 1 + rng.below(5));
    const double ab = w2_distance(a, b);
    brute = std::max(brute, std::abs(ab - matching_w2(a, b)));
    symmetry = std::max(symmetry, std::abs(ab - w2_distance(b, a)));
    identity = std::max(identity, w2_distance(c, c));
    triangle = std::max(triangle, ab - w2_distance(a, c) - w2_distance(c, b));
  }
  return {at_most("metric.brute_force", brute, 1e-9), at_most("metric.symmetry", symmetry, 1e-9),
          at_most("metric.identity", identity, 1e-12), at_most("metric.triangle", triangle, 1e-9)};
}

Checks barycentric(std::uint64_t seed)
{
  CounterRng rng(seed, 102);
  double first = 0, second = 0, marginals = 0;
  for (int k = 0; k < 40; ++k) {
    const Index dim = 1 + rng.below(3);
    const auto mu = random_measure<double>(rng, dim, 1 + rng.below(6));
    const auto nu = random_measure<double>(rng, dim, 1 + rng.below(6));
    const auto plan = solve_w2(mu, nu).plan;
    const auto b1 = barycentric_first(plan);
    const auto b2 = barycentric_second(plan);
    for (Index i = 0; i < mu.size(); ++i) {
      Vector<double> s = Vector<double>::Zero(dim);
      for (Index j = 0; j < nu.size(); ++j) {
        s += plan(i, j) * nu.point(j);
      }
      first = std::max(first, (mu.weight(i) * b1.vector(i) - s).norm());
    }
    for (Index j = 0; j < nu.size(); ++j) {
      Vector<double> s = Vector<double>::Zero(dim);
      for (Index i = 0; i < mu.size(); ++i) {
        s += plan(i, j) * mu.point(i);
      }
      second = std::max(second, (nu.weight(j) * b2.vector(j) - s).norm());
    }
    marginals = std::max({marginals, (plan.coupling().rowwise().sum() - mu.weights()).cwiseAbs().maxCoeff(),
                          (plan.coupling().colwise().sum().transpose() - nu.weights()).cwiseAbs().maxCoeff()});
  }
  return {at_most("barycentric.first_marginal", first, 1e-9), at_most("barycentric.second_marginal", second, 1e-9),
          at_most("barycentric.plan_marginals", marginals, 1e-9)};
}

Checks envelope_suite(std::uint64_t seed)
{
  CounterRng rng(seed, 103);
  double domination = -1, monotone = -1, identity = 0;
  for (int k = 0; k < 12; ++k) {
    const auto h = example_oracle(example(rng, 2));
    const auto mu = random_measure<double>(rng, 2, 3);
    const auto p1 = prox(h, mu, 0.1);
    const auto p2 = prox(h, mu, 0.2);
    domination = std::max(domination, p1.envelope - h(mu));
    monotone = std::max(monotone, p2.envelope - p1.envelope);
    identity = std::max(identity, std::abs(p1.envelope - p1.w2 * p1.w2 / 0.2 - p1.h_value));
  }
  return {at_most("envelope.dominated_by_H", domination, 1e-9), at_most("envelope.monotone_in_tau", monotone, 1e-9),
          at_most("envelope.identity", identity, 1e-9)};
}

Checks concavity(std::uint64_t seed)
{
  CounterRng rng(seed, 104);
  const std::vector<double> grid{0.25, 0.5, 0.75};
  double envelope_violation = -1;
  for (int k = 0; k < 6; ++k) {
    const auto h = example_oracle(example(rng, 2));
    const auto mu0 = random_measure<double>(rng, 2, 3);
    const auto mu1 = random_measure<double>(rng, 2, 3);
    for (double tau : {0.5, 0.1}) {
      envelope_violation = std::max(envelope_violation, verify_envelope_concavity(h, mu0, mu1, tau, grid).max_violation);
    }
  }
  double lambda_violation = -1;
  for (int k = 0; k < 10; ++k) {
    const auto h = potential_hamiltonian(quadratic_potential<double>(Vector<double>::Zero(2)));
    const auto mu0 = random_measure<double>(rng, 2, 4);
    const auto mu1 = random_measure<double>(rng, 2, 4);
    lambda_violation = std::max(lambda_violation, check_lambda_convexity(h, 1.0, mu0, mu1, grid).max_violation);
  }
  return {at_most("concavity.envelope_1_over_tau", envelope_violation, 1e-6),
          at_most("concavity.potential_lambda", lambda_violation, 1e-9)};
}

Checks subdifferential(std::uint64_t seed)
{
  CounterRng rng(seed, 105);
  const double radius = 1e-3;
  double super = -1, ratio = std::numeric_limits<double>::infinity(), convex = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 8; ++k) {
    const auto h = example_oracle(example(rng, 2));
    const auto mu = random_measure<double>(rng, 2, 3);
    const auto p = prox(h, mu, 0.1);
    std::vector<DiscreteMeasure<double>> at_mu, at_nu;
    for (int q = 0; q < 4; ++q) {
      at_mu.push_back(perturb_positions(mu, rng, radius));
      at_nu.push_back(perturb_positions(p.nu, rng, radius));
    }
    super = std::max(super, verify_superdiff_inequality(p, h, at_mu).max_violation);
    ratio = std::min(ratio, verify_subdiff_at_prox(p, h, at_nu).min_ratio);

    const auto v = potential_hamiltonian(quadratic_potential<double>(Vector<double>::Zero(2)));
    convex = std::min(convex, check_subdifferential(v, mu, wasserstein_gradient(v, mu), at_mu).min_residual);
  }
  return {at_most("subdifferential.superdiff_envelope", super, 1e-6),
          at_least("subdifferential.subdiff_at_prox_ratio", ratio, -10 * radius),
          at_least("subdifferential.convex_potential", convex, -1e-9)};
}

Checks flow_suite(std::uint64_t seed)
{
  CounterRng rng(seed, 106);
  const auto h = example_oracle(example(rng, 2));
  const auto mu = random_measure<double>(rng, 2, 4, 0.5);
  FlowConfig<double> cfg;
  cfg.tau = 0.2;
  cfg.T = 0.5;
  cfg.N = 20;
  const auto traj = run_flow(h, mu, cfg);
  double orth = 0, hs1 = -1, speed = -1;
  for (Index k = 0; k < traj.size(); ++k) {
    const auto &d = traj.diagnostics[k];
    orth = std::max(orth, d.orthogonality);
    hs1 = std::max(hs1, d.super_norm * d.super_norm - d.prox_speed * d.prox_speed);
    if (k > 0) {
      speed = std::max(speed, d.step_w2 - traj.h * traj.diagnostics[k - 1].velocity_norm);
    }
  }
  const auto sup = support_report(traj, support_radius(mu), empirical_support_growth(traj), cfg.tau, traj.h);
  return {at_most("flow.completed", traj.truncated ? 1.0 : 0.0, 0.0), at_most("flow.orthogonality", orth, 1e-12),
          at_most("flow.hs1_chain", hs1, 1e-9), at_most("flow.speed_bound", speed, 1e-9),
          at_most("flow.support_breaches", double(sup.breaches), 0.0)};
}

Checks experiment_suite(const ExperimentConfig &cfg)
{
  const auto ex = build_experiment(cfg);
  const auto &h = ex.hamiltonian;
  const auto p = prox(h, ex.mu_bar, ex.flow.tau, ex.flow.prox);
  CounterRng rng(cfg.seed, 107);
  std::vector<DiscreteMeasure<double>> probes;
  for (int q = 0; q < 6; ++q) {
    probes.push_back(perturb_positions(ex.mu_bar, rng, 1e-2));
  }
  Checks c{at_most("experiment.prox_converged", p.converged ? 0.0 : 1.0, 0.0),
           at_most("experiment.envelope_dominated", p.envelope - h(ex.mu_bar), 1e-9),
           at_most("experiment.superdiff_envelope", verify_superdiff_inequality(p, h, probes, ex.flow.prox).max_violation,
                   1e-6)};
  if (p.converged) {
    FlowConfig<double> short_run = ex.flow;
    short_run.N = std::min<Index>(ex.flow.N, 20);
    short_run.T = ex.flow.T * double(short_run.N) / double(ex.flow.N);
    short_run.snapshots.clear();
    const auto traj = run_flow(h, ex.mu_bar, short_run);
    double hs1 = -1;
    for (const auto &d : traj.diagnostics) {
      hs1 = std::max(hs1, d.super_norm * d.super_norm - d.prox_speed * d.prox_speed);
    }
    c.push_back(at_most("experiment.flow_completed", traj.truncated ? 1.0 : 0.0, 0.0));
    c.push_back(at_most("experiment.hs1_chain", hs1, 1e-9));
  }
  return c;
}

const std::map<std::string, std::function<Checks(std::uint64_t)>> &registry()
{
  static const std::map<std::string, std::function<Checks(std::uint64_t)>> suites{
    {"metric", metric},         {"barycentric", barycentric},         {"envelope", envelope_suite},
    {"concavity", concavity},   {"subdifferential", subdifferential}, {"flow", flow_suite},
  };
  return suites;
}

} // namespace

std::vector<std::string> verify_suites()
{
  std::vector<std::string> names;
  for (const auto &[k, v] : registry()) {
    names.push_back(k);
  }
  names.emplace_back("experiment");
  names.emplace_back("all");
  return names;
}

std::optional<std::vector<VerifyCheck>> run_verify_suite(const std::string &suite, std::uint64_t seed,
                                                         const ExperimentConfig *cfg)
{
  if (suite == "experiment") {
    if (!cfg) {
      throw ParseError("the experiment suite needs --config");
    }
    return experiment_suite(*cfg);
  }
  if (suite == "all") {
    Checks all;
    for (const auto &[name, fn] : registry()) {
      auto c = fn(seed);
      all.insert(all.end(), c.begin(), c.end());
    }
    return all;
  }
  const auto it = registry().find(suite);
  if (it == registry().end()) {
    return std::nullopt;
  }
  return it->second(seed);
}

} // namespace hamflow
