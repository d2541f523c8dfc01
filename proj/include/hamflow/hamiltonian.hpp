#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hamflow/measure.hpp"
#include "hamflow/random.hpp"
#include "hamflow/transport.hpp"

namespace hamflow {

/// H returned a non-finite value: the measure lies outside the effective domain D(H).
class EvaluationError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/**
 * Matrix J with <Jv, v> = 0 for every v, i.e. J + J^T = 0.
 *
 * The canonical structure on R^{2d} is [[0, I], [-I, 0]]; for D = 2 it maps (1,0) to (0,-1)
 * and (0,1) to (1,0), so J grad(|x|^2/2) rotates clockwise.
 */
template <typename Scalar = double> class SymplecticStructure
{
public:
  explicit SymplecticStructure(Matrix<Scalar> matrix) : matrix_(std::move(matrix))
  {
    if (matrix_.rows() < 1 || matrix_.rows() != matrix_.cols()) {
      throw std::invalid_argument("SymplecticStructure: matrix must be square and non-empty");
    }
    if ((matrix_ + matrix_.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12)) {
      throw std::invalid_argument("SymplecticStructure: J + J^T must vanish");
    }
  }

  static SymplecticStructure canonical(Index dim)
  {
    if (dim < 2 || dim % 2 != 0) {
      throw std::invalid_argument("SymplecticStructure::canonical: dimension must be even, got " +
                                  std::to_string(dim));
    }
    const Index d = dim / 2;
    Matrix<Scalar> j = Matrix<Scalar>::Zero(dim, dim);
    j.topRightCorner(d, d).setIdentity();
    j.bottomLeftCorner(d, d) = -Matrix<Scalar>::Identity(d, d);
    return SymplecticStructure(std::move(j));
  }

  Index dim() const { return matrix_.rows(); }
  const Matrix<Scalar> &matrix() const { return matrix_; }

  VelocityField<Scalar> apply(const VelocityField<Scalar> &v) const
  {
    if (v.dim() != dim()) {
      throw DimensionMismatch("SymplecticStructure::apply: field dimension " + std::to_string(v.dim()) +
                              ", structure dimension " + std::to_string(dim()));
    }
    return VelocityField<Scalar>(v.base(), matrix_ * v.vectors());
  }

private:
  Matrix<Scalar> matrix_;
};

/**
 * H on discrete measures. `subgradient` (optional) returns an element of the subdifferential as a field over
 * the argument; when absent, callers fall back to finite differences of H in the atom positions.
 * `convexity_modulus` is a declared lambda for which H is lambda-convex, when known.
 */
template <typename Scalar = double> struct HamiltonianOracle
{
  std::function<Scalar(const DiscreteMeasure<Scalar> &)> value;
  std::function<VelocityField<Scalar>(const DiscreteMeasure<Scalar> &)> subgradient;
  std::optional<Scalar> convexity_modulus;
  std::string name = "custom";

  Scalar operator()(const DiscreteMeasure<Scalar> &mu) const
  {
    const Scalar h = value(mu);
    if (!std::isfinite(h)) {
      throw EvaluationError("Hamiltonian '" + name + "' is not finite at the given measure");
    }
    return h;
  }

  bool has_subgradient() const { return static_cast<bool>(subgradient); }
};

/// Wasserstein gradient of H at mu: analytic when the oracle has one, else central differences in positions.
template <typename Scalar>
VelocityField<Scalar> wasserstein_gradient(const HamiltonianOracle<Scalar> &h, const DiscreteMeasure<Scalar> &mu)
{
  if (h.has_subgradient()) {
    return h.subgradient(mu);
  }
  Matrix<Scalar> g = Matrix<Scalar>::Zero(mu.dim(), mu.size());
  Matrix<Scalar> pts = mu.points();
  for (Index k = 0; k < mu.size(); ++k) {
    if (mu.weight(k) <= Scalar(0)) {
      continue;
    }
    for (Index d = 0; d < mu.dim(); ++d) {
      const Scalar x = pts(d, k);
      const Scalar step = std::cbrt(std::numeric_limits<Scalar>::epsilon()) * std::max(Scalar(1), std::abs(x));
      pts(d, k) = x + step;
      const Scalar up = h(DiscreteMeasure<Scalar>(pts, mu.weights()));
      pts(d, k) = x - step;
      const Scalar down = h(DiscreteMeasure<Scalar>(pts, mu.weights()));
      pts(d, k) = x;
      g(d, k) = (up - down) / (Scalar(2) * step) / mu.weight(k);
    }
  }
  return VelocityField<Scalar>(mu, std::move(g));
}

/// Confining potential V: R^D -> R with analytic gradient. `lambda` is a convexity modulus when known.
template <typename Scalar = double> struct Potential
{
  std::function<Scalar(const Vector<Scalar> &)> value;
  std::function<Vector<Scalar>(const Vector<Scalar> &)> gradient;
  std::optional<Scalar> lambda;
  std::string name;
};

/// V(x) = |x - b|^2 / 2.
template <typename Scalar = double> Potential<Scalar> quadratic_potential(Vector<Scalar> center)
{
  return {[center](const Vector<Scalar> &x) { return Scalar(0.5) * (x - center).squaredNorm(); },
          [center](const Vector<Scalar> &x) -> Vector<Scalar> { return x - center; }, Scalar(1), "quadratic"};
}

/// V(x) = |x|^4 / 4 - |x|^2 / 2. Not convex; lambda-convex on bounded balls only.
template <typename Scalar = double> Potential<Scalar> double_well_potential()
{
  return {[](const Vector<Scalar> &x) {
            const Scalar r2 = x.squaredNorm();
            return Scalar(0.25) * r2 * r2 - Scalar(0.5) * r2;
          },
          [](const Vector<Scalar> &x) -> Vector<Scalar> { return (x.squaredNorm() - Scalar(1)) * x; }, std::nullopt,
          "double_well"};
}

/// V(x) = <c, x>.
template <typename Scalar = double> Potential<Scalar> linear_potential(Vector<Scalar> c)
{
  return {[c](const Vector<Scalar> &x) { return c.dot(x); }, [c](const Vector<Scalar> &) -> Vector<Scalar> { return c; },
          Scalar(0), "linear"};
}

template <typename Scalar = double> Potential<Scalar> zero_potential()
{
  return {[](const Vector<Scalar> &) { return Scalar(0); },
          [](const Vector<Scalar> &x) -> Vector<Scalar> { return Vector<Scalar>::Zero(x.size()); }, Scalar(0), "none"};
}

/**
 * Lower bound of the Hessian spectrum of the double well over the closed ball B_center(radius):
 * the Hessian is |x|^2 I + 2 x x^T - I, whose smallest eigenvalue is |x|^2 - 1 for D >= 2 and 3x^2 - 1 for D = 1.
 */
template <typename Scalar>
Scalar double_well_convexity_modulus(Index dim, const Vector<Scalar> &center, Scalar radius)
{
  const Scalar r = std::max(Scalar(0), center.norm() - radius);
  return (dim == 1 ? Scalar(3) : Scalar(1)) * r * r - Scalar(1);
}

/// Even interaction kernel W(x, y) = W(y, x) with the gradient in its first argument.
template <typename Scalar = double> struct Interaction
{
  std::function<Scalar(const Vector<Scalar> &, const Vector<Scalar> &)> value;
  std::function<Vector<Scalar>(const Vector<Scalar> &, const Vector<Scalar> &)> gradient_first;
  std::string name;
};

/// W(x, y) = |x - y|^2 / 2.
template <typename Scalar = double> Interaction<Scalar> quadratic_interaction()
{
  return {[](const Vector<Scalar> &x, const Vector<Scalar> &y) { return Scalar(0.5) * (x - y).squaredNorm(); },
          [](const Vector<Scalar> &x, const Vector<Scalar> &y) -> Vector<Scalar> { return x - y; }, "quadratic"};
}

template <typename Scalar = double> Interaction<Scalar> zero_interaction()
{
  return {[](const Vector<Scalar> &, const Vector<Scalar> &) { return Scalar(0); },
          [](const Vector<Scalar> &x, const Vector<Scalar> &) -> Vector<Scalar> { return Vector<Scalar>::Zero(x.size()); },
          "none"};
}

template <typename Scalar> Scalar potential_energy(const Potential<Scalar> &v, const DiscreteMeasure<Scalar> &mu)
{
  Scalar s = 0;
  for (Index i = 0; i < mu.size(); ++i) {
    s += mu.weight(i) * v.value(mu.point(i));
  }
  return s;
}

template <typename Scalar> Scalar interaction_energy(const Interaction<Scalar> &w, const DiscreteMeasure<Scalar> &mu)
{
  Scalar s = 0;
  for (Index i = 0; i < mu.size(); ++i) {
    for (Index j = 0; j < mu.size(); ++j) {
      s += mu.weight(i) * mu.weight(j) * w.value(mu.point(i), mu.point(j));
    }
  }
  return s;
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> potential_gradient(const Potential<Scalar> &v, const DiscreteMeasure<Scalar> &mu)
{
  Matrix<Scalar> g(mu.dim(), mu.size());
  for (Index i = 0; i < mu.size(); ++i) {
    g.col(i) = v.gradient(mu.point(i));
  }
  return g;
}

// Symmetry of W turns d/dx_i of the double sum into 2 sum_j w_j grad_1 W(x_i, x_j).
template <typename Scalar>
Matrix<Scalar> interaction_gradient(const Interaction<Scalar> &w, const DiscreteMeasure<Scalar> &mu)
{
  Matrix<Scalar> g = Matrix<Scalar>::Zero(mu.dim(), mu.size());
  for (Index i = 0; i < mu.size(); ++i) {
    for (Index j = 0; j < mu.size(); ++j) {
      g.col(i) += Scalar(2) * mu.weight(j) * w.gradient_first(mu.point(i), mu.point(j));
    }
  }
  return g;
}

} // namespace detail

template <typename Scalar = double> HamiltonianOracle<Scalar> zero_hamiltonian()
{
  return {[](const DiscreteMeasure<Scalar> &) { return Scalar(0); },
          [](const DiscreteMeasure<Scalar> &mu) { return VelocityField<Scalar>::zero(mu); }, Scalar(0), "zero"};
}

/// H(mu) = int V dmu.
template <typename Scalar> HamiltonianOracle<Scalar> potential_hamiltonian(Potential<Scalar> v)
{
  auto lambda = v.lambda;
  return {[v](const DiscreteMeasure<Scalar> &mu) { return potential_energy(v, mu); },
          [v](const DiscreteMeasure<Scalar> &mu) {
            return VelocityField<Scalar>(mu, detail::potential_gradient(v, mu));
          },
          lambda, "potential:" + v.name};
}

/// H(mu) = int int W dmu dmu for a convex even W (0-convex).
template <typename Scalar> HamiltonianOracle<Scalar> interaction_hamiltonian(Interaction<Scalar> w)
{
  const std::string name = "interaction:" + w.name;
  return {[w](const DiscreteMeasure<Scalar> &mu) { return interaction_energy(w, mu); },
          [w](const DiscreteMeasure<Scalar> &mu) {
            return VelocityField<Scalar>(mu, detail::interaction_gradient(w, mu));
          },
          Scalar(0), name};
}

/**
 * H(mu) = -(a/2) W2^2(mu, mu_o) + int V dmu + int int W dmu dmu
 *
 * with a > 0, mu_o of bounded support, V lambda_V-convex and W convex and even, both of at most quadratic
 * growth. Such H is (lambda_V - a)-convex and locally Lipschitz.
 */
template <typename Scalar = double> struct ExampleHamiltonian
{
  Scalar a;
  DiscreteMeasure<Scalar> mu_o;
  Potential<Scalar> V;
  Interaction<Scalar> W_int;
  Scalar lambda_V;

  Scalar convexity_modulus() const { return lambda_V - a; }
};

template <typename Scalar> struct ExampleTerms
{
  Scalar transport;   // -(a/2) W2^2(mu, mu_o)
  Scalar potential;   // int V dmu
  Scalar interaction; // int int W dmu dmu

  Scalar total() const { return transport + potential + interaction; }
};

template <typename Scalar>
ExampleTerms<Scalar> example_terms(const ExampleHamiltonian<Scalar> &h, const DiscreteMeasure<Scalar> &mu)
{
  if (mu.dim() != h.mu_o.dim()) {
    throw DimensionMismatch("evaluate_example: measure dimension " + std::to_string(mu.dim()) +
                            ", reference dimension " + std::to_string(h.mu_o.dim()));
  }
  const Scalar d = w2_distance(mu, h.mu_o);
  return {-h.a / Scalar(2) * d * d, potential_energy(h.V, mu), interaction_energy(h.W_int, mu)};
}

template <typename Scalar>
Scalar evaluate_example(const ExampleHamiltonian<Scalar> &h, const DiscreteMeasure<Scalar> &mu)
{
  return example_terms(h, mu).total();
}

/// Subgradient -a (Id - gamma-bar_mu^{mu_o}) + grad V + 2 sum_j w_j grad_1 W(., x_j), with the canonical plan.
template <typename Scalar>
VelocityField<Scalar> example_subgradient(const ExampleHamiltonian<Scalar> &h, const DiscreteMeasure<Scalar> &mu)
{
  Matrix<Scalar> g = detail::potential_gradient(h.V, mu) + detail::interaction_gradient(h.W_int, mu);
  if (h.a != Scalar(0)) {
    auto ot = solve_w2(mu, h.mu_o);
    Matrix<Scalar> bary = h.mu_o.points() * ot.plan.coupling().transpose();
    for (Index i = 0; i < mu.size(); ++i) {
      if (mu.weight(i) > Scalar(0)) {
        g.col(i) -= h.a * (mu.point(i) - bary.col(i) / mu.weight(i));
      }
    }
  }
  return VelocityField<Scalar>(mu, std::move(g));
}

template <typename Scalar> HamiltonianOracle<Scalar> example_oracle(ExampleHamiltonian<Scalar> h)
{
  const Scalar lambda = h.convexity_modulus();
  return {[h](const DiscreteMeasure<Scalar> &mu) { return evaluate_example(h, mu); },
          [h](const DiscreteMeasure<Scalar> &mu) { return example_subgradient(h, mu); }, lambda, "example"};
}

/// Largest |W(x,y) - W(y,x)| over random pairs; the kernel is accepted when this stays below 1e-10.
template <typename Scalar>
Scalar interaction_asymmetry(const Interaction<Scalar> &w, Index dim, std::uint64_t seed, Index pairs = 64)
{
  CounterRng rng(seed, 0x5157);
  Scalar worst = 0;
  for (Index k = 0; k < pairs; ++k) {
    Vector<Scalar> x = random_points<Scalar>(rng, dim, 1, 2.0).col(0);
    Vector<Scalar> y = random_points<Scalar>(rng, dim, 1, 2.0).col(0);
    worst = std::max(worst, std::abs(w.value(x, y) - w.value(y, x)));
  }
  return worst;
}

template <typename Scalar> struct ConvexityReport
{
  Scalar max_violation = -std::numeric_limits<Scalar>::infinity();
  std::vector<Scalar> violations; // one per t
  Scalar w2 = 0;
};

/**
 * Along the canonical optimal plan mu0 -> mu1, evaluates
 *   H(mu_t) - [(1-t) H(mu0) + t H(mu1) - (lambda/2) t(1-t) W2^2(mu0, mu1)]
 * on t_grid. A max violation <= tolerance is consistent with lambda-convexity.
 */
template <typename Scalar>
ConvexityReport<Scalar> check_lambda_convexity(const HamiltonianOracle<Scalar> &h, Scalar lambda,
                                               const DiscreteMeasure<Scalar> &mu0, const DiscreteMeasure<Scalar> &mu1,
                                               const std::vector<Scalar> &t_grid)
{
  const auto ot = solve_w2(mu0, mu1);
  const Scalar h0 = h(mu0);
  const Scalar h1 = h(mu1);
  const Scalar w2sq = ot.plan.cost();
  ConvexityReport<Scalar> rep;
  rep.w2 = ot.distance;
  for (Scalar t : t_grid) {
    const Scalar ht = h(interpolate(ot.plan, t));
    const Scalar v = ht - ((Scalar(1) - t) * h0 + t * h1 - lambda / Scalar(2) * t * (Scalar(1) - t) * w2sq);
    rep.violations.push_back(v);
    rep.max_violation = std::max(rep.max_violation, v);
  }
  return rep;
}

template <typename Scalar> struct SubdifferentialReport
{
  /// min over probes with W2 > 0 of r(nu) / W2(mu, nu); +inf when no such probe.
  Scalar min_ratio = std::numeric_limits<Scalar>::infinity();
  Scalar min_residual = std::numeric_limits<Scalar>::infinity();
  Scalar max_distance = 0;
  std::vector<Scalar> residuals;
  std::vector<Scalar> distances;
};

/// First-order pairing int <xi(x), y - x> dgamma for a plan whose source carries the field xi.
template <typename Scalar>
Scalar first_order_pairing(const VelocityField<Scalar> &xi, const TransportPlan<Scalar> &plan)
{
  Scalar s = 0;
  const auto &g = plan.coupling();
  for (Index i = 0; i < g.rows(); ++i) {
    for (Index j = 0; j < g.cols(); ++j) {
      if (g(i, j) > Scalar(0)) {
        s += g(i, j) * xi.vector(i).dot(plan.target().point(j) - plan.source().point(i));
      }
    }
  }
  return s;
}

/**
 * Residuals r(nu) = H(nu) - H(mu) - int <xi(x), y - x> dgamma over the canonical optimal plan mu -> nu.
 * xi is a first-order subgradient when min r/W2 is bounded below by a quantity that vanishes as probes shrink.
 */
template <typename Scalar>
SubdifferentialReport<Scalar> check_subdifferential(const HamiltonianOracle<Scalar> &h, const DiscreteMeasure<Scalar> &mu,
                                                    const VelocityField<Scalar> &xi,
                                                    const std::vector<DiscreteMeasure<Scalar>> &probes)
{
  if (probes.empty()) {
    throw std::invalid_argument("check_subdifferential: empty probe set");
  }
  if (xi.size() != mu.size() || xi.dim() != mu.dim()) {
    throw DimensionMismatch("check_subdifferential: field is not based on mu");
  }
  const Scalar h0 = h(mu);
  SubdifferentialReport<Scalar> rep;
  for (const auto &nu : probes) {
    const auto ot = solve_w2(mu, nu);
    const Scalar r = h(nu) - h0 - first_order_pairing(xi, ot.plan);
    rep.residuals.push_back(r);
    rep.distances.push_back(ot.distance);
    rep.min_residual = std::min(rep.min_residual, r);
    rep.max_distance = std::max(rep.max_distance, ot.distance);
    if (ot.distance > Scalar(0)) {
      rep.min_ratio = std::min(rep.min_ratio, r / ot.distance);
    }
  }
  return rep;
}

template <typename Scalar> struct LipschitzEstimate
{
  Scalar c_hat = 0;
  Index pairs = 0;   // pairs that entered the maximum
  Index skipped = 0; // degenerate pairs (identical measures)
};

/**
 * Sampled local Lipschitz constant of H on the W2-ball of `radius` around mu_bar: the max of
 * |H(mu1) - H(mu2)| / W2(mu1, mu2) over random pairs. Members of the ball are position perturbations of mu_bar
 * whose L^2(mu_bar) displacement is below `radius` (an upper bound for their W2 distance). Half of the pairs are
 * local (second member a short step from the first), half independent. Deterministic given the seed.
 */
template <typename Scalar>
LipschitzEstimate<Scalar> estimate_local_lipschitz(const HamiltonianOracle<Scalar> &h, const DiscreteMeasure<Scalar> &mu_bar,
                                                   Scalar radius, Index samples, std::uint64_t seed)
{
  if (!(radius > Scalar(0))) {
    throw std::invalid_argument("estimate_local_lipschitz: radius must be positive");
  }
  if (samples < 2) {
    throw std::invalid_argument("estimate_local_lipschitz: at least two samples are required");
  }
  CounterRng rng(seed, 0x11b5);
  const auto &w = mu_bar.weights();
  auto l2 = [&w](const Matrix<Scalar> &d) {
    return std::sqrt(std::max(Scalar(0), d.colwise().squaredNorm().dot(w.transpose())));
  };
  auto direction = [&]() {
    Matrix<Scalar> d = random_points<Scalar>(rng, mu_bar.dim(), mu_bar.size());
    const Scalar n = l2(d);
    return Matrix<Scalar>(n > Scalar(0) ? Matrix<Scalar>(d / n) : d);
  };
  auto member = [&](const Matrix<Scalar> &disp) { return push_forward(mu_bar, mu_bar.points() + disp); };

  LipschitzEstimate<Scalar> est;
  for (Index s = 0; s < samples; ++s) {
    const Matrix<Scalar> d1 = direction() * (radius * Scalar(rng.uniform()));
    Matrix<Scalar> d2;
    if (s % 2 == 0) {
      d2 = d1 + direction() * (Scalar(0.02) * radius * Scalar(rng.uniform(0.1, 1.0)));
      const Scalar n2 = l2(d2);
      if (n2 >= radius) {
        d2 *= Scalar(0.999) * radius / n2;
      }
    } else {
      d2 = direction() * (radius * Scalar(rng.uniform()));
    }
    const auto mu1 = member(d1);
    const auto mu2 = member(d2);
    const Scalar dist = w2_distance(mu1, mu2);
    if (!(dist > Scalar(1e-14))) {
      ++est.skipped;
      continue;
    }
    est.c_hat = std::max(est.c_hat, std::abs(h(mu1) - h(mu2)) / dist);
    ++est.pairs;
  }
  return est;
}

} // namespace hamflow
