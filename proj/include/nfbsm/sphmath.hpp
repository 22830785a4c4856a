#pragma once

// Spherical Bessel/Hankel functions, Legendre polynomials and complex
// orthonormal spherical harmonics.
//
// Conventions: time dependence e^{+i w t}, so outgoing waves are carried by
// h_n^(2) = j_n - i y_n. Spherical harmonics are orthonormal on the unit
// sphere and include the Condon-Shortley phase.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "nfbsm/errors.hpp"

namespace nfbsm {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Direction on the unit sphere. theta is measured from +z (0..pi), phi from
/// +x toward +y and is wrapped into [0, 2pi).
class Direction {
 public:
  Direction() = default;

  Direction(double theta, double phi) : theta_(theta), phi_(wrap(phi)) {
    if (!std::isfinite(theta) || !std::isfinite(phi)) {
      throw ContractError("direction angles must be finite");
    }
    constexpr double slack = 1e-12;
    if (theta < -slack || theta > kPi + slack) {
      throw ContractError("elevation " + std::to_string(theta) + " rad outside [0, pi]");
    }
    theta_ = std::clamp(theta, 0.0, kPi);
  }

  static Direction from_degrees(double theta_deg, double phi_deg) {
    return Direction(deg_to_rad(theta_deg), deg_to_rad(phi_deg));
  }

  double theta() const noexcept { return theta_; }
  double phi() const noexcept { return phi_; }

  std::array<double, 3> unit_vector() const noexcept {
    const double s = std::sin(theta_);
    return {s * std::cos(phi_), s * std::sin(phi_), std::cos(theta_)};
  }

  friend bool operator==(const Direction&, const Direction&) = default;

 private:
  static double wrap(double phi) {
    if (!std::isfinite(phi)) return phi;
    double w = std::fmod(phi, 2.0 * kPi);
    if (w < 0.0) w += 2.0 * kPi;
    if (w >= 2.0 * kPi) w = 0.0;
    return w;
  }

  double theta_ = 0.0;
  double phi_ = 0.0;
};

/// Cosine of the angle between two directions, clamped to [-1, 1].
inline double cos_angle_between(const Direction& a, const Direction& b) noexcept {
  const auto u = a.unit_vector();
  const auto v = b.unit_vector();
  const double c = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  return std::clamp(c, -1.0, 1.0);
}

namespace sphmath {

inline constexpr int kDefaultMaxOrder = 64;

/// Non-negative series/radial order, bounded by a configurable maximum.
class Order {
 public:
  explicit Order(int n, int max_order = kDefaultMaxOrder) : n_(n) {
    if (n < 0) throw ContractError("order must be non-negative, got " + std::to_string(n));
    if (n > max_order) {
      throw UnsupportedOrderError("order " + std::to_string(n) + " exceeds supported maximum " +
                                  std::to_string(max_order));
    }
  }

  int value() const noexcept { return n_; }

  friend bool operator==(const Order&, const Order&) = default;

 private:
  int n_;
};

/// Spherical harmonic index (n, m) with |m| <= n.
class ModeIndex {
 public:
  ModeIndex(int n, int m) : n_(n), m_(m) {
    if (n < 0 || std::abs(m) > n) {
      throw ContractError("invalid mode (n=" + std::to_string(n) + ", m=" + std::to_string(m) + ")");
    }
  }

  int n() const noexcept { return n_; }
  int m() const noexcept { return m_; }

 private:
  int n_;
  int m_;
};

namespace detail {

inline void require_non_negative(double x) {
  if (!(x >= 0.0) || !std::isfinite(x)) {
    throw DomainError("spherical Bessel argument must be finite and >= 0, got " + std::to_string(x));
  }
}

inline void require_positive(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("argument must be finite and > 0 (singular at 0), got " + std::to_string(x));
  }
}

inline double j0_closed(double x) {
  if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

inline double j1_closed(double x) {
  if (std::abs(x) < 0.1) {
    // Series; the closed form cancels badly for small x.
    const double x2 = x * x;
    return x / 3.0 * (1.0 - x2 / 10.0 * (1.0 - x2 / 28.0 * (1.0 - x2 / 54.0 * (1.0 - x2 / 88.0))));
  }
  return (std::sin(x) / x - std::cos(x)) / x;
}

}  // namespace detail

/// j_0(x) .. j_nmax(x) by Miller's downward recurrence, normalized against the
/// closed forms of j_0 or j_1 (whichever has the larger magnitude).
inline std::vector<double> spherical_bessel_j_upto(int nmax, double x) {
  if (nmax < 0) throw ContractError("nmax must be non-negative");
  detail::require_non_negative(x);
  std::vector<double> out(static_cast<std::size_t>(nmax) + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }

  const double span = std::max(static_cast<double>(nmax), x);
  const int start = static_cast<int>(span) + 20 + static_cast<int>(4.0 * std::sqrt(span));

  // f[n] for n = 0..start, seeded with f[start+1] = 0, f[start] = tiny.
  std::vector<double> f(static_cast<std::size_t>(start) + 2, 0.0);
  f[static_cast<std::size_t>(start)] = 1e-30;
  for (int n = start; n > 0; --n) {
    const auto i = static_cast<std::size_t>(n);
    f[i - 1] = (2.0 * n + 1.0) / x * f[i] - f[i + 1];
    if (std::abs(f[i - 1]) > 1e200) {
      for (std::size_t k = i - 1; k < f.size(); ++k) f[k] *= 1e-200;
    }
  }

  const double j0 = detail::j0_closed(x);
  const double j1 = detail::j1_closed(x);
  const double scale = std::abs(j0) >= std::abs(j1) ? j0 / f[0] : j1 / f[1];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f[i] * scale;
  out[0] = j0;
  if (nmax >= 1) out[1] = j1;
  return out;
}

/// y_0(x) .. y_nmax(x) by upward recurrence (stable for the second kind).
inline std::vector<double> spherical_bessel_y_upto(int nmax, double x) {
  if (nmax < 0) throw ContractError("nmax must be non-negative");
  detail::require_positive(x);
  std::vector<double> out(static_cast<std::size_t>(nmax) + 1);
  const double c = std::cos(x);
  const double s = std::sin(x);
  out[0] = -c / x;
  if (nmax >= 1) out[1] = -c / (x * x) - s / x;
  for (int n = 1; n < nmax; ++n) {
    out[static_cast<std::size_t>(n) + 1] =
        (2.0 * n + 1.0) / x * out[static_cast<std::size_t>(n)] - out[static_cast<std::size_t>(n) - 1];
  }
  return out;
}

/// h_n^(2)(x) = j_n(x) - i y_n(x) for n = 0..nmax.
inline std::vector<cplx> spherical_hankel2_upto(int nmax, double x) {
  detail::require_positive(x);
  const auto j = spherical_bessel_j_upto(nmax, x);
  const auto y = spherical_bessel_y_upto(nmax, x);
  std::vector<cplx> out(j.size());
  for (std::size_t n = 0; n < j.size(); ++n) out[n] = {j[n], -y[n]};
  return out;
}

/// Derivatives from a table f_0..f_{nmax} using f_0' = -f_1 and
/// f_n' = f_{n-1} - (n+1)/x f_n. The table must extend to max(nmax, 1).
template <typename T>
std::vector<T> derivative_from_table(const std::vector<T>& f, int nmax, double x) {
  std::vector<T> d(static_cast<std::size_t>(nmax) + 1);
  d[0] = -f[1];
  for (int n = 1; n <= nmax; ++n) {
    const auto i = static_cast<std::size_t>(n);
    d[i] = f[i - 1] - (static_cast<double>(n) + 1.0) / x * f[i];
  }
  return d;
}

inline double spherical_bessel_j(Order n, double x) {
  return spherical_bessel_j_upto(n.value(), x)[static_cast<std::size_t>(n.value())];
}

inline double spherical_bessel_y(Order n, double x) {
  return spherical_bessel_y_upto(n.value(), x)[static_cast<std::size_t>(n.value())];
}

inline cplx spherical_hankel2(Order n, double x) {
  return spherical_hankel2_upto(n.value(), x)[static_cast<std::size_t>(n.value())];
}

inline double spherical_bessel_j_prime(Order n, double x) {
  detail::require_non_negative(x);
  if (x == 0.0) return n.value() == 1 ? 1.0 / 3.0 : 0.0;
  const int top = std::max(n.value(), 1);
  const auto j = spherical_bessel_j_upto(top, x);
  return derivative_from_table(j, n.value(), x)[static_cast<std::size_t>(n.value())];
}

inline double spherical_bessel_y_prime(Order n, double x) {
  const int top = std::max(n.value(), 1);
  const auto y = spherical_bessel_y_upto(top, x);
  return derivative_from_table(y, n.value(), x)[static_cast<std::size_t>(n.value())];
}

inline cplx spherical_hankel2_prime(Order n, double x) {
  const int top = std::max(n.value(), 1);
  const auto h = spherical_hankel2_upto(top, x);
  return derivative_from_table(h, n.value(), x)[static_cast<std::size_t>(n.value())];
}

/// Legendre polynomials P_0(x) .. P_nmax(x).
inline std::vector<double> legendre_upto(int nmax, double x) {
  std::vector<double> p(static_cast<std::size_t>(nmax) + 1);
  p[0] = 1.0;
  if (nmax >= 1) p[1] = x;
  for (int n = 1; n < nmax; ++n) {
    const auto i = static_cast<std::size_t>(n);
    p[i + 1] = ((2.0 * n + 1.0) * x * p[i] - n * p[i - 1]) / (n + 1.0);
  }
  return p;
}

/// Complex orthonormal spherical harmonic Y_n^m(theta, phi) with the
/// Condon-Shortley phase. The associated Legendre part is generated directly
/// in normalized form so nothing overflows at high order.
inline cplx sph_harm(const ModeIndex& mode, const Direction& dir) {
  const int n = mode.n();
  const int m = std::abs(mode.m());
  const double x = std::cos(dir.theta());
  const double s = std::sin(dir.theta());

  double pmm = 1.0 / std::sqrt(4.0 * kPi);
  for (int i = 1; i <= m; ++i) pmm *= -std::sqrt((2.0 * i + 1.0) / (2.0 * i)) * s;

  double value = pmm;
  if (n > m) {
    double prev = pmm;
    double cur = std::sqrt(2.0 * m + 3.0) * x * pmm;
    for (int l = m + 2; l <= n; ++l) {
      const double a_l = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - static_cast<double>(m) * m));
      const double a_lm1 = std::sqrt((4.0 * (l - 1.0) * (l - 1.0) - 1.0) /
                                     ((l - 1.0) * (l - 1.0) - static_cast<double>(m) * m));
      const double next = a_l * (x * cur - prev / a_lm1);
      prev = cur;
      cur = next;
    }
    value = cur;
  }

  const cplx y = value * std::polar(1.0, m * dir.phi());
  if (mode.m() >= 0) return y;
  return (m % 2 == 0 ? 1.0 : -1.0) * std::conj(y);
}

}  // namespace sphmath
}  // namespace nfbsm
