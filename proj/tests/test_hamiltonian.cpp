#include <doctest.h>

#include "hamflow/hamiltonian.hpp"
#include "hamflow/random.hpp"
#include "hamflow/test_functions.hpp"
#include "oracles.hpp"

using namespace hamflow;
using Mat = Matrix<double>;
using Vec = Vector<double>;

namespace {

ExampleHamiltonian<double> make_example(CounterRng &rng, Index dim, double a = 0.5)
{
  return {a, random_measure<double>(rng, dim, 3, 0.5), quadratic_potential<double>(Vec::Zero(dim)),
          quadratic_interaction<double>(), 1.0};
}

} // namespace

TEST_CASE("canonical symplectic structure")
{
  const auto j = SymplecticStructure<double>::canonical(2);
  Mat expected(2, 2);
  expected << 0, 1, -1, 0;
  CHECK(j.matrix() == expected);
  CHECK_THROWS(SymplecticStructure<double>::canonical(3));
  Mat sym = Mat::Identity(2, 2);
  CHECK_THROWS(SymplecticStructure<double>(sym));

  const auto j4 = SymplecticStructure<double>::canonical(4);
  CounterRng rng(1);
  const auto mu = random_measure<double>(rng, 4, 3);
  const VelocityField<double> v(mu, random_points<double>(rng, 4, 3));
  const auto jv = j4.apply(v);
  for (Index i = 0; i < 3; ++i) {
    CHECK(std::abs(jv.vector(i).dot(v.vector(i))) < 1e-14);
  }
  CHECK_THROWS_AS(j.apply(v), DimensionMismatch);
}

TEST_CASE("potential energy is the weighted sum")
{
  Mat pts(1, 2);
  pts << 1, 3;
  Vec w(2);
  w << 0.25, 0.75;
  const DiscreteMeasure<double> mu(pts, w);
  const auto h = potential_hamiltonian(quadratic_potential<double>(Vec::Zero(1)));
  CHECK(h(mu) == doctest::Approx(0.25 * 0.5 + 0.75 * 4.5));
  const auto g = wasserstein_gradient(h, mu);
  CHECK(g.vector(0)(0) == doctest::Approx(1.0));
  CHECK(g.vector(1)(0) == doctest::Approx(3.0));
}

TEST_CASE("interaction energy is the direct double sum")
{
  CounterRng rng(2);
  const auto mu = random_measure<double>(rng, 2, 4);
  const auto w = quadratic_interaction<double>();
  double direct = 0;
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 4; ++j) {
      direct += mu.weight(i) * mu.weight(j) * 0.5 * (mu.point(i) - mu.point(j)).squaredNorm();
    }
  }
  CHECK(interaction_energy(w, mu) == doctest::Approx(direct));
  CHECK(interaction_asymmetry(w, 2, 3) < 1e-12);
}

TEST_CASE("analytic gradients agree with finite differences")
{
  CounterRng rng(3);
  auto ex = make_example(rng, 2);
  const auto analytic = example_oracle(ex);
  auto numeric = analytic;
  numeric.subgradient = nullptr;
  const auto mu = random_measure<double>(rng, 2, 3);
  const auto ga = wasserstein_gradient(analytic, mu);
  const auto gn = wasserstein_gradient(numeric, mu);
  CHECK((ga.vectors() - gn.vectors()).cwiseAbs().maxCoeff() < 1e-6);

  const auto dw = potential_hamiltonian(double_well_potential<double>());
  auto dw_fd = dw;
  dw_fd.subgradient = nullptr;
  CHECK((wasserstein_gradient(dw, mu).vectors() - wasserstein_gradient(dw_fd, mu).vectors()).cwiseAbs().maxCoeff() <
        1e-6);
}

TEST_CASE("example Hamiltonian terms and convexity modulus")
{
  CounterRng rng(4);
  auto ex = make_example(rng, 2, 0.7);
  CHECK(ex.convexity_modulus() == doctest::Approx(0.3));
  const auto mu = random_measure<double>(rng, 2, 3);
  const auto t = example_terms(ex, mu);
  const double d = w2_distance(mu, ex.mu_o);
  CHECK(t.transport == doctest::Approx(-0.35 * d * d));
  CHECK(t.total() == doctest::Approx(evaluate_example(ex, mu)));
  CHECK(example_oracle(ex)(mu) == doctest::Approx(t.total()));
  CHECK_THROWS_AS(evaluate_example(ex, random_measure<double>(rng, 3, 2)), DimensionMismatch);
}

TEST_CASE("non-finite Hamiltonian values raise an evaluation error")
{
  HamiltonianOracle<double> h{[](const DiscreteMeasure<double> &) { return std::numeric_limits<double>::infinity(); }, {},
                              std::nullopt, "inf"};
  CHECK_THROWS_AS(h(DiscreteMeasure<double>::dirac(Vec::Zero(1))), EvaluationError);
}

TEST_CASE("lambda-convexity holds for the built-in Hamiltonians")
{
  CounterRng rng(5);
  const std::vector<double> grid{0.1, 0.3, 0.5, 0.7, 0.9};
  for (int k = 0; k < 10; ++k) {
    const auto mu0 = random_measure<double>(rng, 2, 3);
    const auto mu1 = random_measure<double>(rng, 2, 3);
    const auto v = potential_hamiltonian(quadratic_potential<double>(Vec::Zero(2)));
    CHECK(check_lambda_convexity(v, 1.0, mu0, mu1, grid).max_violation <= 1e-9);
    const auto w = interaction_hamiltonian(quadratic_interaction<double>());
    CHECK(check_lambda_convexity(w, 0.0, mu0, mu1, grid).max_violation <= 1e-9);
    auto ex = make_example(rng, 2, 0.5);
    CHECK(check_lambda_convexity(example_oracle(ex), ex.convexity_modulus(), mu0, mu1, grid).max_violation <= 1e-9);
  }
}

TEST_CASE("quadratic potential is not more than 1-convex")
{
  Vec a(1), b(1);
  a << -1;
  b << 2;
  const auto v = potential_hamiltonian(quadratic_potential<double>(Vec::Zero(1)));
  const auto rep = check_lambda_convexity(v, 1.5, DiscreteMeasure<double>::dirac(a), DiscreteMeasure<double>::dirac(b),
                                          std::vector<double>{0.5});
  CHECK(rep.max_violation > 0.0);
}

TEST_CASE("double well convexity modulus on balls")
{
  Vec c(2);
  c << 3, 0;
  CHECK(double_well_convexity_modulus(2, c, 1.0) == doctest::Approx(3.0));
  CHECK(double_well_convexity_modulus(1, Vec(Vec::Constant(1, 3.0)), 1.0) == doctest::Approx(11.0));
  CHECK(double_well_convexity_modulus(2, c, 5.0) == doctest::Approx(-1.0));
  // second difference of V along a segment inside the ball respects the modulus
  CounterRng rng(6);
  const auto v = double_well_potential<double>();
  for (int k = 0; k < 100; ++k) {
    Vec x = c + 0.5 * random_points<double>(rng, 2, 1).col(0);
    Vec d = random_points<double>(rng, 2, 1).col(0).normalized();
    const double s = 1e-3;
    const double second = (v.value(x + s * d) - 2 * v.value(x) + v.value(x - s * d)) / (s * s);
    CHECK(second >= double_well_convexity_modulus(2, c, 0.5 * 4.0) - 1e-5);
  }
}

TEST_CASE("subdifferential check accepts true gradients of convex functionals")
{
  CounterRng rng(7);
  const auto v = potential_hamiltonian(quadratic_potential<double>(Vec::Zero(2)));
  const auto mu = random_measure<double>(rng, 2, 3);
  std::vector<DiscreteMeasure<double>> probes;
  for (int q = 0; q < 10; ++q) {
    probes.push_back(perturb_positions(mu, rng, 0.1));
  }
  const auto rep = check_subdifferential(v, mu, wasserstein_gradient(v, mu), probes);
  CHECK(rep.min_residual >= -1e-12);
  CHECK(rep.residuals.size() == 10);
  const auto wrong = VelocityField<double>(mu, -5.0 * mu.points());
  CHECK(check_subdifferential(v, mu, wrong, probes).min_ratio < 0.0);
  CHECK_THROWS(check_subdifferential(v, mu, wasserstein_gradient(v, mu), {}));
}

TEST_CASE("local Lipschitz estimate of a linear potential is |c|")
{
  Vec c(2);
  c << 3, 4;
  const auto v = potential_hamiltonian(linear_potential<double>(c));
  CounterRng rng(8);
  const auto mu = random_measure<double>(rng, 2, 4);
  const auto est = estimate_local_lipschitz(v, mu, 0.5, 200, 9);
  CHECK(est.c_hat <= 5.0 + 1e-9);
  CHECK(est.c_hat > 3.0);
  CHECK(est.pairs > 0);
  CHECK(estimate_local_lipschitz(zero_hamiltonian<double>(), mu, 0.5, 20, 1).c_hat == 0.0);
  CHECK_THROWS(estimate_local_lipschitz(v, mu, -1.0, 10, 1));
}

TEST_CASE("vector test field gradient bound dominates finite differences")
{
  Vec c(2);
  c << 0.5, -0.5;
  const auto psi = radial_bump_field<double>(c, 1.5, 2.0);
  CHECK(psi.gradient_bound > 0.0);
  CounterRng rng(10);
  double worst = 0;
  for (int k = 0; k < 500; ++k) {
    Vec x = c + random_points<double>(rng, 2, 1).col(0);
    Mat jac(2, 2);
    for (int d = 0; d < 2; ++d) {
      Vec e = Vec::Zero(2);
      e(d) = 1e-6;
      jac.col(d) = (psi.value(x + e) - psi.value(x - e)) / 2e-6;
    }
    worst = std::max(worst, jac.jacobiSvd().singularValues()(0));
  }
  CHECK(worst <= psi.gradient_bound * (1 + 1e-6));
  CHECK(worst >= 0.5 * psi.gradient_bound);
  CHECK(psi.value(c + Vec::Constant(2, 2.0)).norm() == 0.0);
}

TEST_CASE("time bump derivative matches finite differences")
{
  const TimeBump<double> eta(0.2, 1.4);
  CHECK(eta.value(0.1) == 0.0);
  CHECK(eta.value(1.5) == 0.0);
  for (double t = 0.25; t < 1.4; t += 0.1) {
    const double fd = (eta.value(t + 1e-6) - eta.value(t - 1e-6)) / 2e-6;
    CHECK(eta.derivative(t) == doctest::Approx(fd).epsilon(1e-5));
  }
  Vec c(2);
  c << 0, 0;
  const auto zeta = space_bump<double>(c, 1.0);
  Vec x(2);
  x << 0.3, 0.2;
  for (int d = 0; d < 2; ++d) {
    Vec e = Vec::Zero(2);
    e(d) = 1e-6;
    CHECK(zeta.gradient(x)(d) == doctest::Approx((zeta.value(x + e) - zeta.value(x - e)) / 2e-6).epsilon(1e-5));
  }
}
