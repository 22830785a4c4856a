#pragma once

// Binaural signal matching: array steering matrices, MSE-optimal filter
// design and the normalized binaural reproduction error.
//
// Signal model per frequency: x = V s + n, target p = h^T s, estimate
// p_hat = c^H x. With white sources (power sigma_s^2) and white noise
// (power sigma_n^2) the optimal weights are
//   c = (V V^H + lambda I)^{-1} V h^*,   lambda = sigma_n^2 / sigma_s^2.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "nfbsm/errors.hpp"
#include "nfbsm/field.hpp"
#include "nfbsm/sphmath.hpp"

namespace nfbsm::bsm {

using field::RigidSphere;
using sphmath::Order;

struct ArrayGeometry {
  RigidSphere sphere;
  std::vector<Direction> mic_directions;

  /// Four microphones on the horizontal great circle of a 0.1 m sphere at
  /// azimuths 30, 80, 280 and 330 degrees.
  static ArrayGeometry semicircular() {
    ArrayGeometry g;
    for (double az : {30.0, 80.0, 280.0, 330.0}) g.mic_directions.push_back(Direction::from_degrees(90.0, az));
    return g;
  }

  Eigen::Index size() const { return static_cast<Eigen::Index>(mic_directions.size()); }

  void validate() const {
    sphere.validate();
    if (mic_directions.empty()) throw ContractError("array needs at least one microphone");
  }
};

enum class SteeringKind { far_field, near_field };

enum class SteeringNormalization {
  normalized,  // near-field columns divided by e^{-ik r_s}/r_s
  raw,
};

struct SteeringMatrix {
  Eigen::MatrixXcd entries;  // M x Q
  double frequency_hz = 0.0;
  SteeringKind kind = SteeringKind::far_field;
  double distance_m = std::numeric_limits<double>::infinity();
};

struct NoiseModel {
  double sigma_s_sq = 1.0;
  double sigma_n_sq = 0.01;

  double lambda() const { return sigma_n_sq / sigma_s_sq; }

  void validate() const {
    if (!(sigma_s_sq > 0.0) || !std::isfinite(sigma_s_sq)) throw ContractError("sigma_s_sq must be positive");
    if (!(sigma_n_sq >= 0.0) || !std::isfinite(sigma_n_sq)) throw ContractError("sigma_n_sq must be >= 0");
    if (!std::isfinite(lambda())) throw ContractError("noise-to-signal ratio must be finite");
  }

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

enum class DesignKind { ff, nf };

struct BsmFilter {
  Eigen::VectorXcd left;
  Eigen::VectorXcd right;
  double frequency_hz = 0.0;
  DesignKind kind = DesignKind::ff;
  double distance_m = std::numeric_limits<double>::infinity();
};

/// Per-ear target row (one HRTF value per steering column).
struct EarTargets {
  Eigen::VectorXcd left;
  Eigen::VectorXcd right;
};

struct EarValues {
  double left = 0.0;
  double right = 0.0;
};

/// Entry (m, q): total pressure at microphone m for a unit plane wave from
/// direction q.
inline SteeringMatrix steering_matrix_farfield(const ArrayGeometry& array, const std::vector<Direction>& directions,
                                               double frequency_hz, Order order) {
  array.validate();
  const double k = array.sphere.wavenumber(frequency_hz);
  const auto series = field::ModalSeries::plane_wave(array.sphere, array.sphere.radius_m, k, order);
  SteeringMatrix v;
  v.frequency_hz = frequency_hz;
  v.kind = SteeringKind::far_field;
  v.entries.resize(array.size(), static_cast<Eigen::Index>(directions.size()));
  for (Eigen::Index q = 0; q < v.entries.cols(); ++q) {
    for (Eigen::Index m = 0; m < v.entries.rows(); ++m) {
      v.entries(m, q) = series.evaluate(directions[static_cast<std::size_t>(q)],
                                        array.mic_directions[static_cast<std::size_t>(m)]);
    }
  }
  return v;
}

/// Entry (m, q): pressure at microphone m from a point source at distance
/// source_distance_m in direction q; divided by e^{-ik r_s}/r_s unless raw.
inline SteeringMatrix steering_matrix_nearfield(const ArrayGeometry& array, const std::vector<Direction>& directions,
                                                double source_distance_m, double frequency_hz, Order order,
                                                SteeringNormalization normalization = SteeringNormalization::normalized) {
  array.validate();
  const double k = array.sphere.wavenumber(frequency_hz);
  const auto series =
      field::ModalSeries::point_source(array.sphere, source_distance_m, array.sphere.radius_m, k, order);
  const cplx scale = normalization == SteeringNormalization::normalized
                         ? 1.0 / field::free_field_factor(k, source_distance_m)
                         : cplx{1.0, 0.0};
  SteeringMatrix v;
  v.frequency_hz = frequency_hz;
  v.kind = SteeringKind::near_field;
  v.distance_m = source_distance_m;
  v.entries.resize(array.size(), static_cast<Eigen::Index>(directions.size()));
  for (Eigen::Index q = 0; q < v.entries.cols(); ++q) {
    for (Eigen::Index m = 0; m < v.entries.rows(); ++m) {
      v.entries(m, q) = scale * series.evaluate(directions[static_cast<std::size_t>(q)],
                                                array.mic_directions[static_cast<std::size_t>(m)]);
    }
  }
  return v;
}

/// Solves (V V^H + lambda I) c = V h^* for one ear. Hermitian Cholesky first;
/// a full-pivot LU takes over if that fails. With lambda = 0 a rank-deficient
/// V V^H is an error.
inline Eigen::VectorXcd solve_weights(const Eigen::MatrixXcd& v, const Eigen::VectorXcd& h, double lambda) {
  if (h.size() != v.cols()) {
    throw ContractError("target length " + std::to_string(h.size()) + " does not match " +
                        std::to_string(v.cols()) + " steering columns");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ContractError("lambda must be finite and >= 0");
  const Eigen::Index m = v.rows();
  Eigen::MatrixXcd a = v * v.adjoint();
  a.diagonal().array() += lambda;
  const Eigen::VectorXcd rhs = v * h.conjugate();

  if (lambda == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(a);
    if (lu.rank() < m) {
      throw RankError("V V^H has rank " + std::to_string(lu.rank()) + " < " + std::to_string(m) +
                      " and lambda = 0");
    }
    return lu.solve(rhs);
  }
  Eigen::LLT<Eigen::MatrixXcd> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(a);
  if (!lu.isInvertible()) throw NumericalError("regularized normal matrix is singular");
  return lu.solve(rhs);
}

inline BsmFilter design_filter(const SteeringMatrix& v, const EarTargets& h, const NoiseModel& noise) {
  noise.validate();
  BsmFilter c;
  c.left = solve_weights(v.entries, h.left, noise.lambda());
  c.right = solve_weights(v.entries, h.right, noise.lambda());
  c.frequency_hz = v.frequency_hz;
  c.kind = v.kind == SteeringKind::far_field ? DesignKind::ff : DesignKind::nf;
  c.distance_m = v.distance_m;
  return c;
}

/// (sigma_s^2 |V^T c^* - h|^2 + sigma_n^2 |c|^2) / (sigma_s^2 |h|^2).
inline double normalized_error(const Eigen::VectorXcd& c, const Eigen::MatrixXcd& v, const Eigen::VectorXcd& h,
                               const NoiseModel& noise) {
  if (c.size() != v.rows() || h.size() != v.cols()) {
    throw ContractError("filter/steering/target dimensions are inconsistent");
  }
  const double target = h.squaredNorm();
  if (!(target > 0.0)) throw DegenerateError("target HRTF vector has zero norm");
  const double residual = (v.transpose() * c.conjugate() - h).squaredNorm();
  return (noise.sigma_s_sq * residual + noise.sigma_n_sq * c.squaredNorm()) / (noise.sigma_s_sq * target);
}

inline EarValues evaluate_error(const BsmFilter& c, const SteeringMatrix& v_true, const EarTargets& h_true,
                                const NoiseModel& noise) {
  noise.validate();
  return {normalized_error(c.left, v_true.entries, h_true.left, noise),
          normalized_error(c.right, v_true.entries, h_true.right, noise)};
}

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;  // delta-method error of the ratio of means
};

struct MonteCarloResult {
  MonteCarloEstimate left;
  MonteCarloEstimate right;
};

/// Sample estimate of E|p - p_hat|^2 / E|p|^2 from simulated snapshots of the
/// signal model with circular complex Gaussian sources and noise.
inline MonteCarloResult monte_carlo_mse_detailed(const BsmFilter& c, const SteeringMatrix& v_true,
                                                 const EarTargets& h_true, const NoiseModel& noise,
                                                 std::int64_t trials, std::uint64_t seed) {
  noise.validate();
  if (trials < 1) throw ContractError("trials must be >= 1");
  const Eigen::MatrixXcd& v = v_true.entries;
  if (c.left.size() != v.rows() || c.right.size() != v.rows() || h_true.left.size() != v.cols() ||
      h_true.right.size() != v.cols()) {
    throw ContractError("filter/steering/target dimensions are inconsistent");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double s_std = std::sqrt(noise.sigma_s_sq / 2.0);
  const double n_std = std::sqrt(noise.sigma_n_sq / 2.0);

  Eigen::VectorXcd s(v.cols());
  Eigen::VectorXcd n(v.rows());
  Eigen::VectorXcd x(v.rows());

  // Running sums for error power a, target power b, and their moments.
  struct Sums {
    double a = 0, b = 0, aa = 0, bb = 0, ab = 0;
    void add(double ea, double eb) {
      a += ea;
      b += eb;
      aa += ea * ea;
      bb += eb * eb;
      ab += ea * eb;
    }
    MonteCarloEstimate finish(double count) const {
      const double ma = a / count;
      const double mb = b / count;
      const double ratio = ma / mb;
      if (count < 2.0) return {ratio, std::numeric_limits<double>::infinity()};
      const double va = (aa - count * ma * ma) / (count - 1.0);
      const double vb = (bb - count * mb * mb) / (count - 1.0);
      const double cab = (ab - count * ma * mb) / (count - 1.0);
      const double var = (va - 2.0 * ratio * cab + ratio * ratio * vb) / (mb * mb * count);
      return {ratio, std::sqrt(std::max(var, 0.0))};
    }
  } left, right;

  for (std::int64_t t = 0; t < trials; ++t) {
    for (Eigen::Index q = 0; q < s.size(); ++q) s(q) = {s_std * gauss(rng), s_std * gauss(rng)};
    for (Eigen::Index m = 0; m < n.size(); ++m) n(m) = {n_std * gauss(rng), n_std * gauss(rng)};
    x.noalias() = v * s;
    x += n;
    const cplx p_left = h_true.left.cwiseProduct(s).sum();
    const cplx p_right = h_true.right.cwiseProduct(s).sum();
    const cplx est_left = c.left.dot(x);  // c^H x
    const cplx est_right = c.right.dot(x);
    left.add(std::norm(p_left - est_left), std::norm(p_left));
    right.add(std::norm(p_right - est_right), std::norm(p_right));
  }
  const double count = static_cast<double>(trials);
  return {left.finish(count), right.finish(count)};
}

inline EarValues monte_carlo_mse(const BsmFilter& c, const SteeringMatrix& v_true, const EarTargets& h_true,
                                 const NoiseModel& noise, std::int64_t trials, std::uint64_t seed) {
  const auto r = monte_carlo_mse_detailed(c, v_true, h_true, noise, trials, seed);
  return {r.left.value, r.right.value};
}

}  // namespace nfbsm::bsm
