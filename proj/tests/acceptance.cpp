// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any selected criterion fails.
//
//   acceptance                 run every criterion
//   acceptance --criterion 5a  run one

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nfbsm/nfbsm.hpp"
#include "oracles.hpp"

namespace {

using namespace nfbsm;
using sphmath::Order;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Direction random_direction(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Direction(std::acos(1.0 - 2.0 * u(rng)), 2.0 * kPi * u(rng));
}

Eigen::MatrixXcd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = {g(rng), g(rng)};
  return m;
}

Outcome special_functions() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> arg(0.1, 400.0);
  std::uniform_int_distribution<int> ord(0, 30);
  double worst_wronskian = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int n = ord(rng);
    const double x = arg(rng);
    const Order o(n);
    const double w = sphmath::spherical_bessel_j(o, x) * sphmath::spherical_bessel_y_prime(o, x) -
                     sphmath::spherical_bessel_j_prime(o, x) * sphmath::spherical_bessel_y(o, x);
    worst_wronskian = std::max(worst_wronskian, std::abs(w * x * x - 1.0));
  }
  double worst_addition = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Direction d = random_direction(rng);
    for (int n = 0; n <= 30; ++n) {
      double sum = 0.0;
      for (int m = -n; m <= n; ++m) sum += std::norm(sphmath::sph_harm(sphmath::ModeIndex(n, m), d));
      worst_addition = std::max(worst_addition, std::abs(sum * 4.0 * kPi / (2.0 * n + 1.0) - 1.0));
    }
  }
  const double secs = seconds_since(t0);
  return {worst_wronskian < 1e-10 && worst_addition < 1e-10 && secs < 10.0,
          "max Wronskian rel err " + fmt(worst_wronskian) + ", max addition-theorem err " + fmt(worst_addition) +
              ", " + fmt(secs) + " s"};
}

Outcome rigid_boundary() {
  const auto t0 = Clock::now();
  const field::RigidSphere sphere;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const double hz = 75.0 * std::pow(10000.0 / 75.0, u(rng));
    const double rs = 0.15 + (3.2 - 0.15) * u(rng);
    const double k = sphere.wavenumber(hz);
    const field::SourcePosition src{rs, random_direction(rng)};
    const Direction at = random_direction(rng);
    const double step = 1e-5 * sphere.radius_m;
    const cplx p0 = field::point_source_pressure(sphere, src, {sphere.radius_m, at}, k, Order(30));
    const cplx p1 = field::point_source_pressure(sphere, src, {sphere.radius_m + step, at}, k, Order(30));
    worst = std::max(worst, std::abs((p1 - p0) / step) / std::abs(k * p0));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-3 && secs < 30.0, "max |dp/dr| / |k p| = " + fmt(worst) + " over 20 configs, " + fmt(secs) + " s"};
}

Outcome far_field_limit() {
  const auto cfg = experiment::parse_config_text("");
  const auto dirs = cfg.design_directions();
  const auto array = cfg.array();
  double worst = 0.0;
  double worst_hz = 0.0;
  int failing = 0;
  for (double hz : cfg.frequency_grid()) {
    const auto ff = bsm::steering_matrix_farfield(array, dirs, hz, cfg.series_order());
    const auto nf = bsm::steering_matrix_nearfield(array, dirs, 100.0, hz, cfg.series_order());
    const double gap = ((nf.entries - ff.entries).array() / ff.entries.array()).abs().maxCoeff();
    if (gap >= 0.01) ++failing;
    if (gap > worst) {
      worst = gap;
      worst_hz = hz;
    }
  }
  return {worst < 0.01, "max entry-wise rel diff " + fmt(worst) + " at " + fmt(worst_hz) + " Hz; " +
                            std::to_string(failing) + "/128 frequencies at or above 1%"};
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(99);
  double worst_design = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto v = random_matrix(4, 240, rng);
    const Eigen::VectorXcd h = random_matrix(240, 1, rng);
    const auto c = bsm::solve_weights(v, h, 0.01);
    const auto want = oracle::dual_form_weights(v, h, 0.01);
    worst_design = std::max(worst_design, (c - want).norm() / want.norm());
  }
  int mc_inside = 0;
  double worst_z = 0.0;
  for (int t = 0; t < 20; ++t) {
    bsm::SteeringMatrix v;
    v.entries = random_matrix(4, 240, rng);
    const bsm::EarTargets h{random_matrix(240, 1, rng), random_matrix(240, 1, rng)};
    const bsm::NoiseModel noise{1.0, 0.01};
    const auto c = bsm::design_filter(v, h, noise);
    v.entries += 0.2 * random_matrix(4, 240, rng);
    const auto exact = bsm::evaluate_error(c, v, h, noise);
    const auto mc = bsm::monte_carlo_mse_detailed(c, v, h, noise, 100000, 1000 + static_cast<std::uint64_t>(t));
    const double zl = std::abs(mc.left.value - exact.left) / mc.left.standard_error;
    const double zr = std::abs(mc.right.value - exact.right) / mc.right.standard_error;
    worst_z = std::max({worst_z, zl, zr});
    if (zl < 3.0 && zr < 3.0) ++mc_inside;
  }
  const double secs = seconds_since(t0);
  return {worst_design < 1e-8 && mc_inside == 20 && secs < 120.0,
          "max design rel diff " + fmt(worst_design) + " (50 instances); Monte Carlo within 3 SE on " +
              std::to_string(mc_inside) + "/20 (max " + fmt(worst_z) + " SE); " + fmt(secs) + " s"};
}

struct DefaultSweep {
  experiment::ErrorSurface surface;
  double seconds = 0.0;

  // Left-ear mean epsilon for one filter and distance over [lo, hi] Hz.
  double band_mean(bsm::DesignKind filter, double distance, double lo, double hi) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : surface.records) {
      if (r.ear != experiment::Ear::left || r.filter != filter || r.distance_m != distance) continue;
      if (r.frequency_hz < lo || r.frequency_hz > hi) continue;
      sum += r.epsilon;
      ++n;
    }
    return sum / n;
  }
};

const DefaultSweep& default_sweep() {
  static const DefaultSweep sweep = [] {
    const auto t0 = Clock::now();
    DefaultSweep s;
    s.surface = experiment::run_sweep(experiment::parse_config_text(""));
    s.seconds = seconds_since(t0);
    return s;
  }();
  return sweep;
}

using bsm::DesignKind;

Outcome trend_nf_beats_ff() {
  const auto& s = default_sweep();
  bool ok = s.seconds < 300.0;
  std::string detail;
  for (double d : {0.15, 0.2, 0.3, 0.5, 1.0}) {
    const double ff = s.band_mean(DesignKind::ff, d, 75.0, 2000.0);
    const double nf = s.band_mean(DesignKind::nf, d, 75.0, 2000.0);
    ok = ok && nf <= ff;
    detail += fmt(d) + " m: nf " + fmt(nf) + " / ff " + fmt(ff) + "; ";
  }
  return {ok, detail + "sweep " + fmt(s.seconds) + " s"};
}

Outcome trend_ff_grows_when_close() {
  const auto& s = default_sweep();
  bool ok = s.seconds < 300.0;
  double previous = -1.0;
  std::string detail = "ff mean <= 2 kHz:";
  for (double d : {1.0, 0.3, 0.2, 0.15}) {
    const double ff = s.band_mean(DesignKind::ff, d, 75.0, 2000.0);
    ok = ok && ff > previous;
    previous = ff;
    detail += " " + fmt(d) + " m " + fmt(ff);
  }
  return {ok, detail};
}

Outcome trend_high_band_error() {
  const auto& s = default_sweep();
  const double high = s.band_mean(DesignKind::ff, 3.2, 2000.0, 10000.0);
  const double low = s.band_mean(DesignKind::ff, 3.2, 75.0, 1000.0);
  return {high > low && s.seconds < 300.0, "ff at 3.2 m: mean 2-10 kHz " + fmt(high) + " vs 75 Hz-1 kHz " + fmt(low)};
}

Outcome trend_agree_at_reference() {
  const auto& s = default_sweep();
  std::map<double, std::pair<double, double>> bins;
  for (const auto& r : s.surface.records) {
    if (r.ear != experiment::Ear::left || r.distance_m != 3.2) continue;
    (r.filter == DesignKind::ff ? bins[r.frequency_hz].first : bins[r.frequency_hz].second) = r.epsilon;
  }
  double worst = 0.0;
  double worst_hz = 0.0;
  int outside = 0;
  double agree_from = 0.0;
  for (const auto& [hz, e] : bins) {
    const double rel = std::abs(e.first - e.second) / e.second;
    if (rel > 0.05) {
      ++outside;
      agree_from = 0.0;
    } else if (agree_from == 0.0) {
      agree_from = hz;
    }
    if (rel > worst) {
      worst = rel;
      worst_hz = hz;
    }
  }
  return {outside == 0, "max |ff - nf| / nf = " + fmt(worst) + " at " + fmt(worst_hz) + " Hz; " +
                            std::to_string(outside) + "/" + std::to_string(bins.size()) +
                            " frequencies outside 5%; agreement holds from " + fmt(agree_from) + " Hz up"};
}

Outcome determinism() {
  const auto cfg = experiment::parse_config_text("");
  std::ostringstream a;
  std::ostringstream b;
  experiment::write_csv(experiment::run_sweep(cfg), a);
  experiment::write_csv(experiment::run_sweep(cfg, 1), b);
  return {a.str() == b.str() && !a.str().empty(),
          std::to_string(a.str().size()) + " bytes, " + (a.str() == b.str() ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1", special_functions},      {"2", rigid_boundary},         {"3", far_field_limit},
      {"4", oracle_equivalence},     {"5a", trend_nf_beats_ff},     {"5b", trend_ff_grows_when_close},
      {"5c", trend_high_band_error}, {"5d", trend_agree_at_reference}, {"6", determinism},
  };

  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--criterion ID]\n";
      return 2;
    }
  }

  int failures = 0;
  bool matched = false;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && id != only) continue;
    matched = true;
    Outcome out;
    try {
      out = check();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << out.detail << std::endl;
    if (!out.pass) ++failures;
  }
  if (!matched) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
