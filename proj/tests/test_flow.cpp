#include <doctest.h>

#include <numbers>

#include "hamflow/flow.hpp"
#include "hamflow/random.hpp"
#include "hamflow/study.hpp"
#include "oracles.hpp"

using namespace hamflow;
using Mat = Matrix<double>;
using Vec = Vector<double>;

namespace {

HamiltonianOracle<double> quadratic(Index dim) { return potential_hamiltonian(quadratic_potential<double>(Vec::Zero(dim))); }

ExampleHamiltonian<double> make_example(CounterRng &rng)
{
  return {0.5, random_measure<double>(rng, 2, 3, 0.5), quadratic_potential<double>(Vec::Zero(2)),
          quadratic_interaction<double>(), 1.0};
}

FlowConfig<double> config(double tau, double t_end, Index n)
{
  FlowConfig<double> cfg;
  cfg.tau = tau;
  cfg.T = t_end;
  cfg.N = n;
  return cfg;
}

Vec unit_x()
{
  Vec x(2);
  x << 1, 0;
  return x;
}

} // namespace

TEST_CASE("step velocity")
{
  const auto j = SymplecticStructure<double>::canonical(2);
  SUBCASE("zero Hamiltonian gives zero velocity")
  {
    CounterRng rng(1);
    const auto sv = step_velocity(zero_hamiltonian<double>(), random_measure<double>(rng, 2, 3), 0.1, j);
    CHECK(sv.w.vectors().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("Dirac quadratic closed form")
  {
    Vec x(2);
    x << 0.6, -1.3;
    const double tau = 0.2;
    const auto sv = step_velocity(quadratic(2), DiscreteMeasure<double>::dirac(x), tau, j);
    const Vec expect = j.matrix() * x / (1 + tau);
    CHECK((sv.w.vector(0) - expect).norm() < 1e-9);
  }
  SUBCASE("velocity is orthogonal to the super field")
  {
    CounterRng rng(2);
    for (int k = 0; k < 5; ++k) {
      const auto sv = step_velocity(example_oracle(make_example(rng)), random_measure<double>(rng, 2, 4), 0.2, j);
      for (Index i = 0; i < 4; ++i) {
        CHECK(std::abs(sv.w.vector(i).dot(sv.prox.super_field.vector(i))) < 1e-12);
      }
    }
  }
}

TEST_CASE("advance is a frozen-field push forward")
{
  CounterRng rng(3);
  const auto mu = random_measure<double>(rng, 2, 3);
  Vec c(2);
  c << 0.5, -1.0;
  const VelocityField<double> w(mu, c.replicate(1, 3));
  CHECK(advance(mu, w, 0.0) == mu);
  const auto moved = advance(mu, w, 1.0);
  CHECK((moved.points() - (mu.points().colwise() + c)).cwiseAbs().maxCoeff() < 1e-15);
  const auto half = advance(mu, w, 0.5);
  const auto twice = advance(half, VelocityField<double>(half, w.vectors()), 0.5);
  CHECK((twice.points() - moved.points()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS(advance(mu, w, -0.1));
  CHECK_THROWS_AS(advance(moved, w, 0.1), DimensionMismatch);
}

TEST_CASE("zero Hamiltonian flow stays put")
{
  CounterRng rng(4);
  const auto mu = random_measure<double>(rng, 2, 3);
  auto cfg = config(0.1, 1.0, 10);
  cfg.snapshots = {0.0, 0.35, 1.0};
  const auto traj = run_flow(zero_hamiltonian<double>(), mu, cfg);
  CHECK(traj.size() == 11);
  for (const auto &m : traj.measures) {
    CHECK(m == mu);
  }
  for (const auto &s : traj.snapshots) {
    CHECK(s == mu);
  }
  CHECK(lipschitz_report(traj).lipschitz == 0.0);
}

TEST_CASE("Dirac quadratic flow follows the rotation recurrence")
{
  const double tau = 0.1, t_end = 1.0;
  const Index n = 50;
  const double h = t_end / double(n);
  const auto traj = run_flow(quadratic(2), DiscreteMeasure<double>::dirac(unit_x()), config(tau, t_end, n));
  REQUIRE(traj.size() == n + 1);
  for (Index k = 0; k <= n; ++k) {
    const Vec expect = oracle::rotation_recurrence(unit_x(), tau, h, int(k));
    CHECK((traj.measures[k].point(0) - expect).norm() < 1e-8);
  }
  for (Index k = 1; k <= n; ++k) {
    const double r0 = traj.diagnostics[k - 1].support_radius;
    const double r1 = traj.diagnostics[k].support_radius;
    CHECK(r1 * r1 == doctest::Approx(r0 * r0 * (1 + h * h / ((1 + tau) * (1 + tau)))).epsilon(1e-8));
  }
  const auto lip = lipschitz_report(traj);
  CHECK(lip.lipschitz == doctest::Approx(traj.diagnostics[n - 1].support_radius / (1 + tau)).epsilon(1e-6));
}

TEST_CASE("translation flow has Lipschitz constant |c|")
{
  Vec c(2);
  c << 3, 4;
  CounterRng rng(5);
  const auto traj = run_flow(potential_hamiltonian(linear_potential<double>(c)), random_measure<double>(rng, 2, 3),
                             config(0.2, 1.0, 20));
  CHECK(lipschitz_report(traj).lipschitz == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(lipschitz_report(traj).max_velocity_norm == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("flow invariants on the example")
{
  CounterRng rng(6);
  const auto h = example_oracle(make_example(rng));
  const auto mu = random_measure<double>(rng, 2, 4, 0.5);
  auto cfg = config(0.2, 1.0, 40);
  cfg.snapshots = {0.0, 0.3, 0.55, 1.0};
  const auto traj = run_flow(h, mu, cfg);
  REQUIRE_FALSE(traj.truncated);
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.measures.size() == traj.times.size());
  CHECK(traj.velocities.size() == traj.times.size());
  CHECK(traj.diagnostics.size() == traj.times.size());
  for (Index k = 0; k < traj.size(); ++k) {
    const auto &d = traj.diagnostics[k];
    CHECK(d.orthogonality <= 1e-12);
    CHECK(d.super_norm * d.super_norm <= d.prox_speed * d.prox_speed + 1e-9);
    if (k > 0) {
      CHECK(d.step_w2 <= traj.h * traj.diagnostics[k - 1].velocity_norm + 1e-9);
      CHECK(advance(traj.measures[k - 1], traj.velocities[k - 1], traj.h) == traj.measures[k]);
    }
  }
  // off-grid snapshots are advanced from the previous grid point
  const Index k = Index(std::floor(0.3 / traj.h));
  CHECK(w2_distance(traj.snapshots[1], advance(traj.measures[k], traj.velocities[k], 0.3 - traj.times[k])) < 1e-12);
  CHECK(traj.snapshots[3] == traj.measures.back());

  const double k_hat = empirical_support_growth(traj);
  const auto sup = support_report(traj, support_radius(mu), k_hat, cfg.tau, traj.h);
  CHECK(sup.breaches == 0);
  CHECK(sup.global_breaches == 0);
}

TEST_CASE("flow configuration validation")
{
  CounterRng rng(7);
  const auto mu = random_measure<double>(rng, 2, 2);
  auto cfg = config(0.1, 1.0, 10);
  cfg.snapshots = {1.5};
  CHECK_THROWS(run_flow(quadratic(2), mu, cfg));
  cfg = config(0.1, 1.0, 0);
  CHECK_THROWS(run_flow(quadratic(2), mu, cfg));
  cfg = config(0.1, 1.0, 10);
  cfg.structure = SymplecticStructure<double>::canonical(4);
  CHECK_THROWS_AS(run_flow(quadratic(2), mu, cfg), DimensionMismatch);
}

TEST_CASE("failing prox truncates the trajectory")
{
  int calls = 0;
  HamiltonianOracle<double> h{[&calls](const DiscreteMeasure<double> &m) {
                                ++calls;
                                return m.point(0).norm() > 1.05 ? std::nan("") : 0.5 * m.point(0).squaredNorm();
                              },
                              [](const DiscreteMeasure<double> &m) { return VelocityField<double>(m, m.points()); },
                              std::nullopt, "fragile"};
  const auto traj = run_flow(h, DiscreteMeasure<double>::dirac(unit_x()), config(0.1, 20.0, 40));
  CHECK(traj.truncated);
  CHECK_FALSE(traj.error.empty());
  CHECK(traj.size() < 41);
  CHECK(traj.size() > 0);
}

TEST_CASE("support report with the Dirac quadratic run")
{
  const double tau = 0.1;
  const auto traj = run_flow(quadratic(2), DiscreteMeasure<double>::dirac(unit_x()), config(tau, 2.0, 40));
  const auto rep = support_report(traj, 1.0, 0.0, tau, traj.h);
  CHECK(rep.breaches == 0);
  CHECK(rep.max_ratio == doctest::Approx(1.0)); // attained at t = 0
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    CHECK(rep.rows[k].radius < rep.rows[k].bound);
  }
  CHECK(std::sqrt(1 + traj.h * traj.h / ((1 + tau) * (1 + tau))) <= 1 + traj.h / tau);
}

TEST_CASE("continuity residual")
{
  const TimeBump<double> eta(0.2, 0.8);
  SUBCASE("zero flow")
  {
    CounterRng rng(8);
    const auto traj = run_flow(zero_hamiltonian<double>(), random_measure<double>(rng, 2, 3), config(0.1, 1.0, 10));
    CHECK(continuity_residual(traj, SymplecticStructure<double>::canonical(2), eta, space_bump<double>(Vec::Zero(2), 2.0)) <
          1e-12);
  }
  SUBCASE("translation with a linear test function is exact")
  {
    Vec c(2);
    c << 1, -2;
    CounterRng rng(9);
    // fine enough grid that 8-point quadrature of the bump is below the threshold
    const auto traj = run_flow(potential_hamiltonian(linear_potential<double>(c)), random_measure<double>(rng, 2, 3),
                               config(0.1, 1.0, 128));
    Vec k(2);
    k << 0.3, 0.7;
    CHECK(continuity_residual(traj, SymplecticStructure<double>::canonical(2), eta, linear_function<double>(k, 0.5),
                              TimeQuadrature::gauss_legendre) <= 1e-10);
  }
  SUBCASE("Dirac quadratic residual is second order in h")
  {
    std::vector<double> res;
    for (Index n : {50, 100, 200, 400}) {
      const auto traj = run_flow(quadratic(2), DiscreteMeasure<double>::dirac(unit_x()), config(0.1, 1.0, n));
      res.push_back(continuity_residual(traj, SymplecticStructure<double>::canonical(2), eta,
                                        space_bump<double>(unit_x(), 1.0)));
    }
    CHECK(oracle::min_halving_order(res) >= 1.8);
  }
  SUBCASE("time bump must sit inside the horizon")
  {
    const auto traj = run_flow(quadratic(2), DiscreteMeasure<double>::dirac(unit_x()), config(0.1, 1.0, 10));
    CHECK_THROWS(continuity_residual(traj, SymplecticStructure<double>::canonical(2), TimeBump<double>(0.0, 0.5),
                                     space_bump<double>(unit_x(), 1.0)));
  }
}

TEST_CASE("tau study")
{
  SUBCASE("zero Hamiltonian has a vanishing Cauchy table")
  {
    CounterRng rng(10);
    StudyOptions<double> opts;
    opts.taus = {0.2, 0.1, 0.05};
    opts.flow = config(0.2, 1.0, 10);
    opts.flow.snapshots = {0.5, 1.0};
    const auto rep = tau_study(zero_hamiltonian<double>(), random_measure<double>(rng, 2, 3), opts);
    CHECK(rep.ok());
    CHECK(rep.cauchy.size() == 4);
    for (const auto &row : rep.cauchy) {
      CHECK(row.w2 == 0.0);
    }
  }
  SUBCASE("Dirac quadratic terminal error against the reference ODE")
  {
    StudyOptions<double> opts;
    opts.taus = {0.2, 0.1, 0.05};
    opts.flow = config(0.2, 1.0, 200);
    const auto rep = tau_study(quadratic(2), DiscreteMeasure<double>::dirac(unit_x()), opts);
    REQUIRE(rep.ode.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      const Vec exact = oracle::rotate_clockwise(unit_x(), 1.0);
      const Vec flow = rep.runs[i].final_measure().point(0);
      CHECK(rep.ode[i].error == doctest::Approx((flow - exact).norm()).epsilon(1e-6));
    }
    CHECK(rep.ode[0].error > rep.ode[1].error);
    CHECK(rep.ode[1].error > rep.ode[2].error);
    CHECK(rep.ok());
  }
  SUBCASE("threads do not change the results")
  {
    CounterRng rng(11);
    const auto h = example_oracle(make_example(rng));
    const auto mu = random_measure<double>(rng, 2, 3, 0.5);
    StudyOptions<double> opts;
    opts.taus = {0.2, 0.1};
    opts.flow = config(0.2, 0.5, 10);
    opts.threads = 1;
    const auto a = tau_study(h, mu, opts);
    opts.threads = 2;
    const auto b = tau_study(h, mu, opts);
    REQUIRE(a.cauchy.size() == b.cauchy.size());
    for (std::size_t i = 0; i < a.cauchy.size(); ++i) {
      CHECK(a.cauchy[i].w2 == b.cauchy[i].w2);
    }
  }
  SUBCASE("taus must decrease")
  {
    StudyOptions<double> opts;
    opts.taus = {0.1, 0.2};
    CHECK_THROWS(tau_study(quadratic(2), DiscreteMeasure<double>::dirac(unit_x()), opts));
  }
}

TEST_CASE("reference ODE reproduces the exact rotation")
{
  const auto j = SymplecticStructure<double>::canonical(2);
  const auto path = reference_dirac_path(quadratic(2), j, unit_x(), {0.5, std::numbers::pi});
  CHECK((path[0] - oracle::rotate_clockwise(unit_x(), 0.5)).norm() < 1e-9);
  CHECK((path[1] - oracle::rotate_clockwise(unit_x(), std::numbers::pi)).norm() < 1e-9);
}
