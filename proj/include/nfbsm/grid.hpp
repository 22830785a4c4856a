#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nfbsm/errors.hpp"
#include "nfbsm/sphmath.hpp"

namespace nfbsm::grid {

/// Nearly uniform full-sphere directions from the spherical Fibonacci
/// lattice: equal-area bands in cos(theta), golden-angle azimuth steps.
inline std::vector<Direction> fibonacci_directions(int count) {
  if (count < 1) throw ContractError("direction grid needs at least one point");
  const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
  std::vector<Direction> dirs;
  dirs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    dirs.emplace_back(std::acos(z), golden_angle * i);
  }
  return dirs;
}

/// Directions drawn uniformly on the sphere, deterministic for a given seed.
inline std::vector<Direction> random_directions(int count, std::uint64_t seed) {
  if (count < 1) throw ContractError("direction grid needs at least one point");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Direction> dirs;
  dirs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * unit(rng);
    const double phi = 2.0 * kPi * unit(rng);
    dirs.emplace_back(std::acos(std::clamp(z, -1.0, 1.0)), phi);
  }
  return dirs;
}

}  // namespace nfbsm::grid
