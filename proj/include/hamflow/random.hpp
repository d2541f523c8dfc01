#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "hamflow/measure.hpp"

namespace hamflow {

/**
 * Counter-based generator: draw k of stream s under seed is a pure function of (seed, s, k),
 * so results never depend on scheduling or on how many draws other streams made.
 * Variates are derived by hand so sequences are identical across standard libraries.
 */
class CounterRng
{
public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL)))
  {}

  static constexpr std::uint64_t mix(std::uint64_t z)
  {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() { return mix(key_ + 0xD1B54A32D192ED03ULL * counter_++); }

  /// Uniform on [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal()
  {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Index below(Index n) { return Index(next_u64() % std::uint64_t(n)); }

  std::uint64_t counter() const { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

template <typename Scalar = double> Matrix<Scalar> random_points(CounterRng &rng, Index dim, Index n, double scale = 1.0)
{
  Matrix<Scalar> p(dim, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < dim; ++i) {
      p(i, j) = Scalar(scale * rng.normal());
    }
  }
  return p;
}

/// Random weights bounded away from zero, normalized to sum to one.
template <typename Scalar = double> Vector<Scalar> random_weights(CounterRng &rng, Index n)
{
  Vector<Scalar> w(n);
  for (Index i = 0; i < n; ++i) {
    w(i) = Scalar(0.2 + rng.uniform());
  }
  w /= w.sum();
  return w;
}

template <typename Scalar = double>
DiscreteMeasure<Scalar> random_measure(CounterRng &rng, Index dim, Index n, double scale = 1.0, bool equal_weights = false)
{
  auto pts = random_points<Scalar>(rng, dim, n, scale);
  if (equal_weights) {
    return DiscreteMeasure<Scalar>::uniform(std::move(pts));
  }
  return DiscreteMeasure<Scalar>(std::move(pts), random_weights<Scalar>(rng, n));
}

/// Same weights as `mu`, every atom displaced by a Gaussian step of size `scale`.
template <typename Scalar>
DiscreteMeasure<Scalar> perturb_positions(const DiscreteMeasure<Scalar> &mu, CounterRng &rng, double scale)
{
  return push_forward(mu, mu.points() + random_points<Scalar>(rng, mu.dim(), mu.size(), scale));
}

} // namespace hamflow
