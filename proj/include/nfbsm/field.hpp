#pragma once

// Pressure on and around a rigid sphere excited by a point source or a unit
// plane wave, and the distance variation function (DVF) built from it.
//
// Both fields are expanded as p = sum_n b_n P_n(cos angle), where the angle is
// taken between the source direction and the field-point direction. This is
// the spherical-harmonic double sum with the m-sum collapsed by the addition
// theorem.

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "nfbsm/errors.hpp"
#include "nfbsm/sphmath.hpp"

namespace nfbsm::field {

using sphmath::Order;

struct RigidSphere {
  double radius_m = 0.1;
  double speed_of_sound_mps = 343.0;

  void validate() const {
    if (!(radius_m > 0.0) || !std::isfinite(radius_m)) {
      throw ContractError("sphere radius must be positive, got " + std::to_string(radius_m));
    }
    if (!(speed_of_sound_mps > 0.0) || !std::isfinite(speed_of_sound_mps)) {
      throw ContractError("speed of sound must be positive, got " + std::to_string(speed_of_sound_mps));
    }
  }

  double wavenumber(double frequency_hz) const { return 2.0 * kPi * frequency_hz / speed_of_sound_mps; }

  friend bool operator==(const RigidSphere&, const RigidSphere&) = default;
};

struct SourcePosition {
  double distance_m = 1.0;
  Direction direction;
};

struct FieldPoint {
  double radius_m = 0.1;
  Direction direction;
};

/// Free-field point-source propagation factor e^{-ikr}/r.
inline cplx free_field_factor(double k, double r) { return std::polar(1.0 / r, -k * r); }

namespace detail {

inline void require_wavenumber(double k) {
  if (!(k > 0.0) || !std::isfinite(k)) {
    throw DomainError("wavenumber must be finite and > 0, got " + std::to_string(k));
  }
}

inline void require_on_or_outside(const RigidSphere& sphere, double r) {
  if (!std::isfinite(r) || r < sphere.radius_m * (1.0 - 1e-12)) {
    throw DomainError("field point radius " + std::to_string(r) + " m lies inside the sphere of radius " +
                      std::to_string(sphere.radius_m) + " m");
  }
}

// R_n(kr) = j_n(kr) - j_n'(ka) / h_n'(ka) * h_n(kr), n = 0..N.
inline std::vector<cplx> rigid_radial_terms(const RigidSphere& sphere, double k, double r, int order) {
  const double ka = k * sphere.radius_m;
  const double kr = k * r;
  const int top = std::max(order, 1);
  const auto ja = sphmath::spherical_bessel_j_upto(top, ka);
  const auto ha = sphmath::spherical_hankel2_upto(top, ka);
  const auto jpa = sphmath::derivative_from_table(ja, order, ka);
  const auto hpa = sphmath::derivative_from_table(ha, order, ka);
  const auto jr = sphmath::spherical_bessel_j_upto(order, kr);
  const auto hr = sphmath::spherical_hankel2_upto(order, kr);

  std::vector<cplx> out(static_cast<std::size_t>(order) + 1);
  for (std::size_t n = 0; n < out.size(); ++n) {
    // Once h_n' overflows the scattered part has vanished below double range.
    cplx scattered{0.0, 0.0};
    if (std::isfinite(std::abs(hpa[n]))) scattered = jpa[n] / hpa[n] * hr[n];
    out[n] = jr[n] - scattered;
  }
  return out;
}

}  // namespace detail

/// Coefficients b_n of p(angle) = sum_n b_n P_n(cos angle) for one
/// (wavenumber, source radius, evaluation radius) combination. Reusing one
/// series across directions avoids recomputing the radial functions.
class ModalSeries {
 public:
  /// Point source at distance source_distance_m, observed at radius
  /// eval_radius_m: b_n = -i k h_n(k r_s) (2n+1) R_n(k r).
  static ModalSeries point_source(const RigidSphere& sphere, double source_distance_m, double eval_radius_m,
                                  double k, Order order) {
    sphere.validate();
    detail::require_wavenumber(k);
    if (!(source_distance_m > sphere.radius_m) || !std::isfinite(source_distance_m)) {
      throw DomainError("source distance " + std::to_string(source_distance_m) +
                        " m must exceed the sphere radius " + std::to_string(sphere.radius_m) + " m");
    }
    detail::require_on_or_outside(sphere, eval_radius_m);
    if (eval_radius_m > source_distance_m) {
      throw DomainError("field point radius " + std::to_string(eval_radius_m) +
                        " m lies beyond the source distance " + std::to_string(source_distance_m) + " m");
    }
    const int n_max = order.value();
    const auto radial = detail::rigid_radial_terms(sphere, k, eval_radius_m, n_max);
    const auto hs = sphmath::spherical_hankel2_upto(n_max, k * source_distance_m);
    ModalSeries s;
    s.coeff_.resize(radial.size());
    for (std::size_t n = 0; n < radial.size(); ++n) {
      s.coeff_[n] = cplx{0.0, -1.0} * k * hs[n] * (2.0 * static_cast<double>(n) + 1.0) * radial[n];
    }
    return s;
  }

  /// Unit-amplitude plane wave: b_n = i^n (2n+1) R_n(k r).
  static ModalSeries plane_wave(const RigidSphere& sphere, double eval_radius_m, double k, Order order) {
    sphere.validate();
    detail::require_wavenumber(k);
    detail::require_on_or_outside(sphere, eval_radius_m);
    const auto radial = detail::rigid_radial_terms(sphere, k, eval_radius_m, order.value());
    ModalSeries s;
    s.coeff_.resize(radial.size());
    cplx i_pow{1.0, 0.0};
    for (std::size_t n = 0; n < radial.size(); ++n) {
      s.coeff_[n] = i_pow * (2.0 * static_cast<double>(n) + 1.0) * radial[n];
      i_pow *= cplx{0.0, 1.0};
    }
    return s;
  }

  cplx evaluate(double cos_angle) const {
    // Legendre recurrence fused with the summation.
    cplx sum = coeff_[0];
    if (coeff_.size() == 1) return sum;
    double p_prev = 1.0;
    double p_cur = cos_angle;
    sum += coeff_[1] * p_cur;
    for (std::size_t n = 1; n + 1 < coeff_.size(); ++n) {
      const double nd = static_cast<double>(n);
      const double p_next = ((2.0 * nd + 1.0) * cos_angle * p_cur - nd * p_prev) / (nd + 1.0);
      p_prev = p_cur;
      p_cur = p_next;
      sum += coeff_[n + 1] * p_cur;
    }
    return sum;
  }

  cplx evaluate(const Direction& source, const Direction& point) const {
    return evaluate(cos_angle_between(source, point));
  }

  const std::vector<cplx>& coefficients() const noexcept { return coeff_; }

 private:
  std::vector<cplx> coeff_;
};

/// Pressure at `point` due to a point source at `source` in the presence of
/// the rigid sphere. Requires radius_m <= point radius <= source distance.
inline cplx point_source_pressure(const RigidSphere& sphere, const SourcePosition& source,
                                  const FieldPoint& point, double k, Order order) {
  return ModalSeries::point_source(sphere, source.distance_m, point.radius_m, k, order)
      .evaluate(source.direction, point.direction);
}

/// Total pressure for a unit plane wave arriving from `incidence`.
inline cplx plane_wave_pressure(const RigidSphere& sphere, const Direction& incidence, const FieldPoint& point,
                                double k, Order order) {
  return ModalSeries::plane_wave(sphere, point.radius_m, k, order).evaluate(incidence, point.direction);
}

/// Ratio of sphere-surface pressures for a source at near_distance_m and at
/// far_distance_m, same source direction and observation point.
inline cplx dvf(const RigidSphere& sphere, double near_distance_m, double far_distance_m,
                const Direction& eval_direction, const Direction& source_direction, double k, Order order) {
  const double c = cos_angle_between(source_direction, eval_direction);
  const cplx num = ModalSeries::point_source(sphere, near_distance_m, sphere.radius_m, k, order).evaluate(c);
  const cplx den = ModalSeries::point_source(sphere, far_distance_m, sphere.radius_m, k, order).evaluate(c);
  if (!(std::abs(den) >= 1e-300)) {
    throw DegenerateError("DVF denominator vanishes (|p| < 1e-300) at far distance " +
                          std::to_string(far_distance_m) + " m");
  }
  return num / den;
}

}  // namespace nfbsm::field
