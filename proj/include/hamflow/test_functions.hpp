#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "hamflow/measure.hpp"

namespace hamflow {

namespace detail {

// phi(s) = exp(-1/(1-s)) on [0,1), 0 beyond: smooth, compactly supported in s.
template <typename Scalar> Scalar bump_profile(Scalar s)
{
  return s < Scalar(1) ? std::exp(-Scalar(1) / (Scalar(1) - s)) : Scalar(0);
}

template <typename Scalar> Scalar bump_profile_derivative(Scalar s)
{
  if (s >= Scalar(1)) {
    return 0;
  }
  const Scalar q = Scalar(1) - s;
  return -bump_profile(s) / (q * q);
}

} // namespace detail

/// Smooth vector field psi: R^D -> R^D with compact support and a known bound on ||grad psi||_inf (operator norm).
template <typename Scalar = double> struct VectorTestField
{
  std::function<Vector<Scalar>(const Vector<Scalar> &)> value;
  Scalar gradient_bound;
};

/**
 * psi(x) = A (x - c) phi(|x - c|^2 / R^2). Its Jacobian A [phi I + (2/R^2) phi'(s) (x-c)(x-c)^T] is symmetric with
 * eigenvalues A phi(s) and A (phi(s) + 2 s phi'(s)); the sup of their moduli over s in [0,1) is found by a dense
 * scan refined with golden-section search.
 */
template <typename Scalar = double>
VectorTestField<Scalar> radial_bump_field(Vector<Scalar> center, Scalar radius, Scalar amplitude = Scalar(1))
{
  if (!(radius > Scalar(0))) {
    throw std::invalid_argument("radial_bump_field: radius must be positive");
  }
  auto spectral = [](Scalar s) {
    const Scalar phi = detail::bump_profile(s);
    return std::max(std::abs(phi), std::abs(phi + Scalar(2) * s * detail::bump_profile_derivative(s)));
  };
  constexpr int samples = 20000;
  Scalar best = spectral(Scalar(0));
  int best_k = 0;
  for (int k = 1; k < samples; ++k) {
    const Scalar v = spectral(Scalar(k) / Scalar(samples));
    if (v > best) {
      best = v;
      best_k = k;
    }
  }
  Scalar lo = std::max(Scalar(0), Scalar(best_k - 1) / Scalar(samples));
  Scalar hi = std::min(Scalar(1), Scalar(best_k + 1) / Scalar(samples));
  const Scalar g = (std::sqrt(Scalar(5)) - Scalar(1)) / Scalar(2);
  for (int it = 0; it < 100; ++it) {
    const Scalar a = hi - g * (hi - lo);
    const Scalar b = lo + g * (hi - lo);
    if (spectral(a) > spectral(b)) {
      hi = b;
    } else {
      lo = a;
    }
  }
  best = std::max(best, spectral((lo + hi) / Scalar(2)));
  const Scalar r2 = radius * radius;
  return {[center, r2, amplitude](const Vector<Scalar> &x) -> Vector<Scalar> {
            const Vector<Scalar> d = x - center;
            return amplitude * detail::bump_profile(d.squaredNorm() / r2) * d;
          },
          std::abs(amplitude) * best};
}

/// Scalar test function on R^D with analytic gradient.
template <typename Scalar = double> struct ScalarTestFunction
{
  std::function<Scalar(const Vector<Scalar> &)> value;
  std::function<Vector<Scalar>(const Vector<Scalar> &)> gradient;
};

/// zeta(x) = phi(|x - c|^2 / R^2), supported in the ball B_c(R).
template <typename Scalar = double> ScalarTestFunction<Scalar> space_bump(Vector<Scalar> center, Scalar radius)
{
  const Scalar r2 = radius * radius;
  return {[center, r2](const Vector<Scalar> &x) { return detail::bump_profile((x - center).squaredNorm() / r2); },
          [center, r2](const Vector<Scalar> &x) -> Vector<Scalar> {
            const Vector<Scalar> d = x - center;
            return (Scalar(2) / r2) * detail::bump_profile_derivative(d.squaredNorm() / r2) * d;
          }};
}

/// zeta(x) = <k, x> + c0 (not compactly supported; exact test case for translations).
template <typename Scalar = double> ScalarTestFunction<Scalar> linear_function(Vector<Scalar> k, Scalar c0 = Scalar(0))
{
  return {[k, c0](const Vector<Scalar> &x) { return k.dot(x) + c0; },
          [k](const Vector<Scalar> &) -> Vector<Scalar> { return k; }};
}

/// Smooth time bump eta supported in [lo, hi], with analytic derivative.
template <typename Scalar = double> struct TimeBump
{
  Scalar lo;
  Scalar hi;

  TimeBump(Scalar lo_, Scalar hi_) : lo(lo_), hi(hi_)
  {
    if (!(hi > lo)) {
      throw std::invalid_argument("TimeBump: empty support");
    }
  }

  Scalar value(Scalar t) const
  {
    const Scalar u = scaled(t);
    return detail::bump_profile(u * u);
  }

  Scalar derivative(Scalar t) const
  {
    const Scalar u = scaled(t);
    return detail::bump_profile_derivative(u * u) * Scalar(2) * u * Scalar(2) / (hi - lo);
  }

private:
  Scalar scaled(Scalar t) const { return (Scalar(2) * t - (lo + hi)) / (hi - lo); }
};

} // namespace hamflow
