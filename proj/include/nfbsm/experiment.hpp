#pragma once

// Distance x frequency sweep comparing far-field and near-field BSM filters,
// its configuration file and CSV output.
//
// Config format: one `key = value` per line, '#' comments, lists written as
// `[a, b, c]`, strings optionally double-quoted. Every key is optional; see
// README.md for the full key list and defaults.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "nfbsm/errors.hpp"
#include "nfbsm/field.hpp"
#include "nfbsm/grid.hpp"
#include "nfbsm/hrtf.hpp"
#include "nfbsm/matching.hpp"
#include "nfbsm/sphmath.hpp"
#include "nfbsm/text.hpp"

namespace nfbsm::experiment {

using bsm::NoiseModel;
using bsm::SteeringNormalization;

enum class FrequencySpacing { log, linear };
enum class GridKind { fibonacci, random };
enum class HrtfSourceKind { analytic, file };
enum class HrtfModel { point, plane_wave };
enum class EvaluationMode { grid, single };

struct ExperimentConfig {
  double sphere_radius_m = 0.1;
  double speed_of_sound_mps = 343.0;
  std::vector<double> mic_azimuths_deg{30.0, 80.0, 280.0, 330.0};
  std::vector<double> mic_elevations_deg{90.0, 90.0, 90.0, 90.0};
  std::vector<double> mic_radii_m{0.1, 0.1, 0.1, 0.1};
  double ear_elevation_deg = 90.0;
  double ear_left_azimuth_deg = 100.0;
  double ear_right_azimuth_deg = 260.0;
  int order = 30;
  std::vector<double> distances_m{0.15, 0.2, 0.3, 0.5, 1.0, 3.2};
  std::vector<double> frequencies_hz;  // explicit list; overrides the generated grid when non-empty
  double freq_min_hz = 75.0;
  double freq_max_hz = 10000.0;
  int freq_count = 128;
  FrequencySpacing freq_spacing = FrequencySpacing::log;
  NoiseModel noise;
  GridKind design_grid = GridKind::fibonacci;
  int design_grid_size = 240;
  HrtfSourceKind hrtf_source = HrtfSourceKind::analytic;
  std::string hrtf_file;
  HrtfModel hrtf_model = HrtfModel::point;
  double reference_distance_m = 3.2;
  SteeringNormalization steering_normalization = SteeringNormalization::normalized;
  EvaluationMode evaluation = EvaluationMode::grid;
  double evaluation_theta_deg = 90.0;
  double evaluation_phi_deg = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  field::RigidSphere sphere() const { return {sphere_radius_m, speed_of_sound_mps}; }

  bsm::ArrayGeometry array() const {
    bsm::ArrayGeometry g;
    g.sphere = sphere();
    for (std::size_t i = 0; i < mic_azimuths_deg.size(); ++i) {
      g.mic_directions.push_back(Direction::from_degrees(mic_elevations_deg[i], mic_azimuths_deg[i]));
    }
    return g;
  }

  hrtf::EarGeometry ears() const {
    return {Direction::from_degrees(ear_elevation_deg, ear_left_azimuth_deg),
            Direction::from_degrees(ear_elevation_deg, ear_right_azimuth_deg)};
  }

  sphmath::Order series_order() const { return sphmath::Order(order); }

  std::vector<double> frequency_grid() const {
    if (!frequencies_hz.empty()) return frequencies_hz;
    std::vector<double> f(static_cast<std::size_t>(freq_count));
    for (int i = 0; i < freq_count; ++i) {
      const double t = freq_count == 1 ? 0.0 : static_cast<double>(i) / (freq_count - 1);
      f[static_cast<std::size_t>(i)] =
          freq_spacing == FrequencySpacing::log
              ? std::exp(std::log(freq_min_hz) + t * (std::log(freq_max_hz) - std::log(freq_min_hz)))
              : freq_min_hz + t * (freq_max_hz - freq_min_hz);
    }
    f.front() = freq_min_hz;
    if (freq_count > 1) f.back() = freq_max_hz;
    return f;
  }

  std::vector<Direction> design_directions() const {
    return design_grid == GridKind::fibonacci ? grid::fibonacci_directions(design_grid_size)
                                              : grid::random_directions(design_grid_size, seed);
  }
};

namespace detail {

[[noreturn]] inline void invalid(const std::string& key, const std::string& why) {
  throw ValidationError(key + ": " + why);
}

inline void require_finite_positive(const std::string& key, double v) {
  if (!std::isfinite(v) || !(v > 0.0)) invalid(key, "value " + text::format_double(v) + " must be finite and > 0");
}

}  // namespace detail

/// Checks every field; throws ValidationError naming the offending key.
inline void validate(const ExperimentConfig& c) {
  using detail::invalid;
  using detail::require_finite_positive;
  require_finite_positive("sphere_radius_m", c.sphere_radius_m);
  require_finite_positive("speed_of_sound_mps", c.speed_of_sound_mps);

  const std::size_t m = c.mic_azimuths_deg.size();
  if (m == 0) invalid("mic_azimuths_deg", "at least one microphone is required");
  if (c.mic_elevations_deg.size() != m) {
    invalid("mic_elevations_deg", "expected " + std::to_string(m) + " values to match mic_azimuths_deg");
  }
  if (c.mic_radii_m.size() != m) {
    invalid("mic_radii_m", "expected " + std::to_string(m) + " values to match mic_azimuths_deg");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(c.mic_azimuths_deg[i])) invalid("mic_azimuths_deg", "values must be finite");
    const double el = c.mic_elevations_deg[i];
    if (!(el >= 0.0 && el <= 180.0)) invalid("mic_elevations_deg", "values must lie in [0, 180]");
    if (std::abs(c.mic_radii_m[i] - c.sphere_radius_m) > 1e-9 * c.sphere_radius_m) {
      invalid("mic_radii_m", "microphone " + std::to_string(i) + " at radius " +
                                 text::format_double(c.mic_radii_m[i]) + " m is off the sphere surface (radius " +
                                 text::format_double(c.sphere_radius_m) + " m)");
    }
  }
  if (!(c.ear_elevation_deg >= 0.0 && c.ear_elevation_deg <= 180.0)) {
    invalid("ear_elevation_deg", "must lie in [0, 180]");
  }
  if (!std::isfinite(c.ear_left_azimuth_deg)) invalid("ear_left_azimuth_deg", "must be finite");
  if (!std::isfinite(c.ear_right_azimuth_deg)) invalid("ear_right_azimuth_deg", "must be finite");
  if (c.order < 0 || c.order > sphmath::kDefaultMaxOrder) {
    invalid("order", "must lie in [0, " + std::to_string(sphmath::kDefaultMaxOrder) + "]");
  }

  if (c.distances_m.empty()) invalid("distances_m", "at least one distance is required");
  std::set<double> seen;
  for (double d : c.distances_m) {
    if (!std::isfinite(d) || !(d > c.sphere_radius_m)) {
      invalid("distances_m", "value " + text::format_double(d) + " must be finite and exceed the sphere radius " +
                                 text::format_double(c.sphere_radius_m) + " m");
    }
    if (!seen.insert(d).second) invalid("distances_m", "duplicate distance " + text::format_double(d));
  }
  std::set<double> seen_f;
  for (double f : c.frequencies_hz) {
    require_finite_positive("frequencies_hz", f);
    if (!seen_f.insert(f).second) invalid("frequencies_hz", "duplicate frequency " + text::format_double(f));
  }
  require_finite_positive("freq_min_hz", c.freq_min_hz);
  require_finite_positive("freq_max_hz", c.freq_max_hz);
  if (c.freq_count < 1) invalid("freq_count", "must be >= 1");
  if (c.freq_count > 1 && !(c.freq_max_hz > c.freq_min_hz)) invalid("freq_max_hz", "must exceed freq_min_hz");

  require_finite_positive("sigma_s_sq", c.noise.sigma_s_sq);
  if (!std::isfinite(c.noise.sigma_n_sq) || c.noise.sigma_n_sq < 0.0) invalid("sigma_n_sq", "must be finite and >= 0");
  if (!std::isfinite(c.noise.lambda())) invalid("sigma_n_sq", "noise-to-signal ratio must be finite");
  if (c.design_grid_size < 1) invalid("design_grid_size", "must be >= 1");

  if (!std::isfinite(c.reference_distance_m) || !(c.reference_distance_m > c.sphere_radius_m)) {
    invalid("reference_distance_m", "must exceed the sphere radius");
  }
  if (c.hrtf_source == HrtfSourceKind::file) {
    if (c.hrtf_file.empty()) invalid("hrtf_file", "required when hrtf_source = file");
    if (c.evaluation == EvaluationMode::single) {
      invalid("evaluation", "single-direction evaluation needs hrtf_source = analytic");
    }
  }
  if (!(c.evaluation_theta_deg >= 0.0 && c.evaluation_theta_deg <= 180.0)) {
    invalid("evaluation_direction_deg", "elevation must lie in [0, 180]");
  }
  if (!std::isfinite(c.evaluation_phi_deg)) invalid("evaluation_direction_deg", "azimuth must be finite");
}

namespace detail {

struct RawValue {
  std::string text;  // scalar text, quotes removed
  std::vector<std::string> items;
  bool is_list = false;
  std::size_t line = 0;
};

// Strips a '#' comment that is not inside double quotes.
inline std::string_view strip_config_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

inline std::string where(const std::string& key, std::size_t line) {
  return key + " (line " + std::to_string(line) + ")";
}

inline double as_number(const std::string& key, const RawValue& v) {
  if (v.is_list) invalid(where(key, v.line), "expected a number, found a list");
  const auto d = text::parse_double(v.text);
  if (!d) invalid(where(key, v.line), "expected a number, found '" + v.text + "'");
  return *d;
}

inline std::int64_t as_integer(const std::string& key, const RawValue& v) {
  if (v.is_list) invalid(where(key, v.line), "expected an integer, found a list");
  const auto i = text::parse_int(v.text);
  if (!i) invalid(where(key, v.line), "expected an integer, found '" + v.text + "'");
  return *i;
}

inline std::vector<double> as_list(const std::string& key, const RawValue& v) {
  if (!v.is_list) invalid(where(key, v.line), "expected a list like [a, b]");
  std::vector<double> out;
  for (const auto& item : v.items) {
    const auto d = text::parse_double(item);
    if (!d) invalid(where(key, v.line), "expected a number, found '" + item + "'");
    out.push_back(*d);
  }
  return out;
}

inline std::string as_word(const std::string& key, const RawValue& v) {
  if (v.is_list) invalid(where(key, v.line), "expected a single value, found a list");
  return v.text;
}

template <typename Enum>
Enum as_enum(const std::string& key, const RawValue& v, std::initializer_list<std::pair<const char*, Enum>> options) {
  const std::string word = as_word(key, v);
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (word == name) return value;
    allowed += allowed.empty() ? name : std::string(", ") + name;
  }
  invalid(where(key, v.line), "unknown value '" + word + "' (expected one of: " + allowed + ")");
}

inline std::map<std::string, RawValue> tokenize_config(std::istream& in) {
  std::map<std::string, RawValue> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = text::trim(strip_config_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected 'key = value', found '" +
                            std::string(line) + "'");
    }
    const std::string key(text::trim(line.substr(0, eq)));
    const auto value = text::trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError("line " + std::to_string(line_no) + ": missing key before '='");
    if (value.empty()) invalid(where(key, line_no), "missing value");

    RawValue v;
    v.line = line_no;
    if (value.front() == '[') {
      if (value.back() != ']') invalid(where(key, line_no), "unterminated list");
      v.is_list = true;
      const auto body = text::trim(value.substr(1, value.size() - 2));
      if (!body.empty()) {
        std::size_t start = 0;
        while (true) {
          const auto comma = body.find(',', start);
          const auto item = text::trim(body.substr(start, comma == std::string_view::npos ? body.npos : comma - start));
          if (item.empty()) invalid(where(key, line_no), "empty list element");
          v.items.emplace_back(item);
          if (comma == std::string_view::npos) break;
          start = comma + 1;
        }
      }
    } else if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') invalid(where(key, line_no), "unterminated string");
      v.text = std::string(value.substr(1, value.size() - 2));
    } else {
      v.text = std::string(value);
    }
    if (!out.emplace(key, std::move(v)).second) invalid(where(key, line_no), "duplicate key");
  }
  return out;
}

}  // namespace detail

/// Parses config text. Omitted keys keep their defaults; unknown keys and
/// invalid values throw ValidationError naming the key.
inline ExperimentConfig parse_config_text(const std::string& content) {
  using namespace detail;
  std::istringstream in(content);
  const auto values = tokenize_config(in);

  ExperimentConfig c;
  bool elevations_set = false;
  bool radii_set = false;

  for (const auto& [key, v] : values) {
    if (key == "sphere_radius_m") {
      c.sphere_radius_m = as_number(key, v);
    } else if (key == "speed_of_sound_mps") {
      c.speed_of_sound_mps = as_number(key, v);
    } else if (key == "mic_azimuths_deg") {
      c.mic_azimuths_deg = as_list(key, v);
    } else if (key == "mic_elevations_deg") {
      c.mic_elevations_deg = as_list(key, v);
      elevations_set = true;
    } else if (key == "mic_radii_m") {
      c.mic_radii_m = as_list(key, v);
      radii_set = true;
    } else if (key == "ear_elevation_deg") {
      c.ear_elevation_deg = as_number(key, v);
    } else if (key == "ear_left_azimuth_deg") {
      c.ear_left_azimuth_deg = as_number(key, v);
    } else if (key == "ear_right_azimuth_deg") {
      c.ear_right_azimuth_deg = as_number(key, v);
    } else if (key == "order") {
      const auto n = as_integer(key, v);
      if (n < 0 || n > sphmath::kDefaultMaxOrder) {
        invalid(where(key, v.line), "must lie in [0, " + std::to_string(sphmath::kDefaultMaxOrder) + "]");
      }
      c.order = static_cast<int>(n);
    } else if (key == "distances_m") {
      c.distances_m = as_list(key, v);
    } else if (key == "frequencies_hz") {
      c.frequencies_hz = as_list(key, v);
    } else if (key == "freq_min_hz") {
      c.freq_min_hz = as_number(key, v);
    } else if (key == "freq_max_hz") {
      c.freq_max_hz = as_number(key, v);
    } else if (key == "freq_count") {
      const auto n = as_integer(key, v);
      if (n < 1 || n > 1000000) invalid(where(key, v.line), "must lie in [1, 1000000]");
      c.freq_count = static_cast<int>(n);
    } else if (key == "freq_spacing") {
      c.freq_spacing = as_enum<FrequencySpacing>(key, v, {{"log", FrequencySpacing::log},
                                                          {"linear", FrequencySpacing::linear}});
    } else if (key == "sigma_s_sq") {
      c.noise.sigma_s_sq = as_number(key, v);
    } else if (key == "sigma_n_sq") {
      c.noise.sigma_n_sq = as_number(key, v);
    } else if (key == "design_grid") {
      c.design_grid = as_enum<GridKind>(key, v, {{"fibonacci", GridKind::fibonacci}, {"random", GridKind::random}});
    } else if (key == "design_grid_size") {
      const auto n = as_integer(key, v);
      if (n < 1 || n > 1000000) invalid(where(key, v.line), "must lie in [1, 1000000]");
      c.design_grid_size = static_cast<int>(n);
    } else if (key == "hrtf_source") {
      c.hrtf_source =
          as_enum<HrtfSourceKind>(key, v, {{"analytic", HrtfSourceKind::analytic}, {"file", HrtfSourceKind::file}});
    } else if (key == "hrtf_file") {
      c.hrtf_file = as_word(key, v);
    } else if (key == "hrtf_model") {
      c.hrtf_model = as_enum<HrtfModel>(key, v, {{"point", HrtfModel::point}, {"plane_wave", HrtfModel::plane_wave}});
    } else if (key == "reference_distance_m") {
      c.reference_distance_m = as_number(key, v);
    } else if (key == "steering_normalization") {
      c.steering_normalization = as_enum<SteeringNormalization>(
          key, v, {{"normalized", SteeringNormalization::normalized}, {"raw", SteeringNormalization::raw}});
    } else if (key == "evaluation") {
      c.evaluation = as_enum<EvaluationMode>(key, v, {{"grid", EvaluationMode::grid}, {"single", EvaluationMode::single}});
    } else if (key == "evaluation_direction_deg") {
      const auto dir = as_list(key, v);
      if (dir.size() != 2) invalid(where(key, v.line), "expected [theta_deg, phi_deg]");
      c.evaluation_theta_deg = dir[0];
      c.evaluation_phi_deg = dir[1];
    } else if (key == "seed") {
      const auto s = as_integer(key, v);
      if (s < 0) invalid(where(key, v.line), "must be >= 0");
      c.seed = static_cast<std::uint64_t>(s);
    } else {
      throw ValidationError(where(key, v.line) + ": unknown key");
    }
  }

  // Per-microphone lists follow the azimuth count unless given explicitly.
  if (!elevations_set) c.mic_elevations_deg.assign(c.mic_azimuths_deg.size(), 90.0);
  if (!radii_set) c.mic_radii_m.assign(c.mic_azimuths_deg.size(), c.sphere_radius_m);

  validate(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Full config text with every key written out; parses back to an equal
/// config.
inline std::string serialize_config(const ExperimentConfig& c) {
  using text::format_double;
  const auto list = [](const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
    return s + "]";
  };
  std::ostringstream os;
  os << "sphere_radius_m = " << format_double(c.sphere_radius_m) << "\n"
     << "speed_of_sound_mps = " << format_double(c.speed_of_sound_mps) << "\n"
     << "mic_azimuths_deg = " << list(c.mic_azimuths_deg) << "\n"
     << "mic_elevations_deg = " << list(c.mic_elevations_deg) << "\n"
     << "mic_radii_m = " << list(c.mic_radii_m) << "\n"
     << "ear_elevation_deg = " << format_double(c.ear_elevation_deg) << "\n"
     << "ear_left_azimuth_deg = " << format_double(c.ear_left_azimuth_deg) << "\n"
     << "ear_right_azimuth_deg = " << format_double(c.ear_right_azimuth_deg) << "\n"
     << "order = " << c.order << "\n"
     << "distances_m = " << list(c.distances_m) << "\n";
  if (!c.frequencies_hz.empty()) os << "frequencies_hz = " << list(c.frequencies_hz) << "\n";
  os << "freq_min_hz = " << format_double(c.freq_min_hz) << "\n"
     << "freq_max_hz = " << format_double(c.freq_max_hz) << "\n"
     << "freq_count = " << c.freq_count << "\n"
     << "freq_spacing = " << (c.freq_spacing == FrequencySpacing::log ? "log" : "linear") << "\n"
     << "sigma_s_sq = " << format_double(c.noise.sigma_s_sq) << "\n"
     << "sigma_n_sq = " << format_double(c.noise.sigma_n_sq) << "\n"
     << "design_grid = " << (c.design_grid == GridKind::fibonacci ? "fibonacci" : "random") << "\n"
     << "design_grid_size = " << c.design_grid_size << "\n"
     << "hrtf_source = " << (c.hrtf_source == HrtfSourceKind::analytic ? "analytic" : "file") << "\n";
  if (!c.hrtf_file.empty()) os << "hrtf_file = \"" << c.hrtf_file << "\"\n";
  os << "hrtf_model = " << (c.hrtf_model == HrtfModel::point ? "point" : "plane_wave") << "\n"
     << "reference_distance_m = " << format_double(c.reference_distance_m) << "\n"
     << "steering_normalization = "
     << (c.steering_normalization == SteeringNormalization::normalized ? "normalized" : "raw") << "\n"
     << "evaluation = " << (c.evaluation == EvaluationMode::grid ? "grid" : "single") << "\n"
     << "evaluation_direction_deg = [" << format_double(c.evaluation_theta_deg) << ", "
     << format_double(c.evaluation_phi_deg) << "]\n"
     << "seed = " << c.seed << "\n";
  return os.str();
}

enum class Ear { left, right };

struct ErrorRecord {
  double distance_m = 0.0;
  double frequency_hz = 0.0;
  bsm::DesignKind filter = bsm::DesignKind::ff;
  Ear ear = Ear::left;
  double epsilon = 0.0;
  double epsilon_db = 0.0;

  friend bool operator==(const ErrorRecord&, const ErrorRecord&) = default;
};

struct ErrorSurface {
  std::vector<ErrorRecord> records;
  double lambda = 0.0;  // sigma_n^2 / sigma_s^2 used for design and evaluation
};

inline ErrorRecord make_record(double distance_m, double frequency_hz, bsm::DesignKind filter, Ear ear,
                               double epsilon) {
  return {distance_m, frequency_hz, filter, ear, epsilon, 10.0 * std::log10(epsilon)};
}

namespace detail {

// Re-throws the active library exception with sweep coordinates appended,
// keeping its category.
[[noreturn]] inline void rethrow_with_context(double distance_m, double frequency_hz) {
  const std::string ctx = " [distance " + text::format_double(distance_m) + " m, frequency " +
                          text::format_double(frequency_hz) + " Hz]";
  try {
    throw;
  } catch (const NumericalError& e) {
    throw NumericalError(e.what() + ctx);
  } catch (const ValidationError& e) {
    throw ValidationError(e.what() + ctx);
  } catch (const IoError& e) {
    throw IoError(e.what() + ctx);
  }
}

struct SweepInputs {
  std::vector<Direction> directions;       // design grid
  std::vector<double> frequencies_hz;
  double reference_distance_m = 0.0;
  hrtf::HrtfSet reference;                 // far-field HRTFs on the design grid
  std::vector<Direction> truth_directions; // evaluation grid
  std::vector<hrtf::HrtfSet> truth_hrtfs;  // per distance, DVF-scaled, on the evaluation grid
  std::vector<hrtf::HrtfSet> design_hrtfs; // per distance, DVF-scaled, on the design grid
};

inline bsm::EarTargets column(const hrtf::HrtfSet& set, Eigen::Index f, cplx scale) {
  return {set.left.col(f) * scale, set.right.col(f) * scale};
}

}  // namespace detail

/// Runs the FF/NF comparison over every configured distance and frequency.
///
/// For each distance d the truth is the near-field steering matrix at d and
/// the reference HRTFs scaled by DVF(d, r_f). The FF filter is designed from
/// plane-wave steering and the reference HRTFs; the NF filter from the truth
/// pair. Near-field HRTFs are re-expressed in the same source normalization as
/// the steering matrix so the two stay comparable across distances.
///
/// Frequencies are processed on `threads` workers (0 = hardware concurrency);
/// the result does not depend on the thread count.
inline ErrorSurface run_sweep(const ExperimentConfig& config, unsigned threads = 0) {
  validate(config);
  const auto sphere = config.sphere();
  const auto array = config.array();
  const auto ears = config.ears();
  const auto order = config.series_order();
  const auto& noise = config.noise;

  detail::SweepInputs in;
  if (config.hrtf_source == HrtfSourceKind::file) {
    in.reference = hrtf::load_hrtf(config.hrtf_file);
    if (!(in.reference.reference_distance_m > sphere.radius_m)) {
      throw ValidationError("hrtf_file: reference distance must exceed the sphere radius");
    }
    in.directions = in.reference.directions;
    in.frequencies_hz = in.reference.frequencies_hz;
    in.reference_distance_m = in.reference.reference_distance_m;
  } else {
    in.directions = config.design_directions();
    in.frequencies_hz = config.frequency_grid();
    in.reference_distance_m = config.reference_distance_m;
    const auto model = config.hrtf_model == HrtfModel::point
                           ? hrtf::SourceModel::point(in.reference_distance_m)
                           : hrtf::SourceModel::plane_wave(in.reference_distance_m);
    in.reference = hrtf::analytic_sphere_hrtf(sphere, ears, in.directions, in.frequencies_hz, model, order);
  }

  hrtf::HrtfSet truth_reference = in.reference;
  in.truth_directions = in.directions;
  if (config.evaluation == EvaluationMode::single) {
    in.truth_directions = {Direction::from_degrees(config.evaluation_theta_deg, config.evaluation_phi_deg)};
    const auto model = config.hrtf_model == HrtfModel::point
                           ? hrtf::SourceModel::point(in.reference_distance_m)
                           : hrtf::SourceModel::plane_wave(in.reference_distance_m);
    truth_reference = hrtf::analytic_sphere_hrtf(sphere, ears, in.truth_directions, in.frequencies_hz, model, order);
  }
  for (double d : config.distances_m) {
    in.design_hrtfs.push_back(hrtf::nearfield_transform(in.reference, sphere, d, order, ears));
    in.truth_hrtfs.push_back(config.evaluation == EvaluationMode::single
                                 ? hrtf::nearfield_transform(truth_reference, sphere, d, order, ears)
                                 : in.design_hrtfs.back());
  }

  const std::size_t n_freq = in.frequencies_hz.size();
  const std::size_t n_dist = config.distances_m.size();
  // Slot layout: [frequency][distance][filter][ear].
  std::vector<double> eps(n_freq * n_dist * 4, 0.0);
  std::vector<std::exception_ptr> failures(n_freq);

  const auto work = [&](std::size_t fi) {
    const double hz = in.frequencies_hz[fi];
    const auto f = static_cast<Eigen::Index>(fi);
    double current_distance = std::numeric_limits<double>::infinity();
    try {
      const double k = sphere.wavenumber(hz);
      const auto v_ff = bsm::steering_matrix_farfield(array, in.directions, hz, order);
      const auto c_ff = bsm::design_filter(v_ff, detail::column(in.reference, f, 1.0), noise);
      for (std::size_t di = 0; di < n_dist; ++di) {
        const double d = config.distances_m[di];
        current_distance = d;
        // DVF-scaled HRTFs carry the r_f source normalization; move them to
        // the normalization used by the steering matrix at d.
        const cplx g_ref = field::free_field_factor(k, in.reference_distance_m);
        const cplx renorm = config.steering_normalization == SteeringNormalization::normalized
                                ? g_ref / field::free_field_factor(k, d)
                                : g_ref;
        const auto v_nf =
            bsm::steering_matrix_nearfield(array, in.directions, d, hz, order, config.steering_normalization);
        const auto h_nf = detail::column(in.design_hrtfs[di], f, renorm);
        const auto c_nf = bsm::design_filter(v_nf, h_nf, noise);

        const bool single = config.evaluation == EvaluationMode::single;
        const auto v_true = single ? bsm::steering_matrix_nearfield(array, in.truth_directions, d, hz, order,
                                                                    config.steering_normalization)
                                   : v_nf;
        const auto h_true = single ? detail::column(in.truth_hrtfs[di], f, renorm) : h_nf;

        const auto e_ff = bsm::evaluate_error(c_ff, v_true, h_true, noise);
        const auto e_nf = bsm::evaluate_error(c_nf, v_true, h_true, noise);
        double* slot = &eps[(fi * n_dist + di) * 4];
        slot[0] = e_ff.left;
        slot[1] = e_ff.right;
        slot[2] = e_nf.left;
        slot[3] = e_nf.right;
      }
    } catch (const Error&) {
      try {
        detail::rethrow_with_context(current_distance, hz);
      } catch (...) {
        failures[fi] = std::current_exception();
      }
    }
  };

  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n_freq, 1)));
  if (workers <= 1) {
    for (std::size_t fi = 0; fi < n_freq; ++fi) work(fi);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t fi = next++; fi < n_freq; fi = next++) work(fi);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }

  ErrorSurface surface;
  surface.lambda = noise.lambda();
  surface.records.reserve(eps.size());
  for (std::size_t fi = 0; fi < n_freq; ++fi) {
    for (std::size_t di = 0; di < n_dist; ++di) {
      const double* slot = &eps[(fi * n_dist + di) * 4];
      const double d = config.distances_m[di];
      const double hz = in.frequencies_hz[fi];
      surface.records.push_back(make_record(d, hz, bsm::DesignKind::ff, Ear::left, slot[0]));
      surface.records.push_back(make_record(d, hz, bsm::DesignKind::ff, Ear::right, slot[1]));
      surface.records.push_back(make_record(d, hz, bsm::DesignKind::nf, Ear::left, slot[2]));
      surface.records.push_back(make_record(d, hz, bsm::DesignKind::nf, Ear::right, slot[3]));
    }
  }
  return surface;
}

inline constexpr const char* kCsvHeader = "distance_m,frequency_hz,filter,ear,epsilon,epsilon_db";

/// CSV sorted by (filter, ear, distance, frequency), shortest round-trip
/// decimal numbers.
inline void write_csv(const ErrorSurface& surface, std::ostream& os) {
  if (surface.records.empty()) throw ContractError("error surface is empty");
  std::vector<ErrorRecord> rows = surface.records;
  std::sort(rows.begin(), rows.end(), [](const ErrorRecord& a, const ErrorRecord& b) {
    return std::tie(a.filter, a.ear, a.distance_m, a.frequency_hz) <
           std::tie(b.filter, b.ear, b.distance_m, b.frequency_hz);
  });
  os << kCsvHeader << "\n";
  for (const auto& r : rows) {
    os << text::format_double(r.distance_m) << ',' << text::format_double(r.frequency_hz) << ','
       << (r.filter == bsm::DesignKind::ff ? "ff" : "nf") << ',' << (r.ear == Ear::left ? "left" : "right") << ','
       << text::format_double(r.epsilon) << ',' << text::format_double(r.epsilon_db) << "\n";
  }
}

inline void emit_csv(const ErrorSurface& surface, const std::string& path) {
  if (surface.records.empty()) throw ContractError("error surface is empty");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_csv(surface, os);
  os.flush();
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace nfbsm::experiment
