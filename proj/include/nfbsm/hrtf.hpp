#pragma once

// HRTF sets on a direction grid: analytic rigid-sphere synthesis, near-field
// scaling by the DVF, and a line-oriented text format.
//
// File format (whitespace separated, '#' starts a comment):
//
//   version 1
//   reference_distance_m <r>
//   num_directions <Q>
//   num_frequencies <F>
//   dir <theta_deg> <phi_deg>                                  (Q lines)
//   freq <hz>                                                  (F lines)
//   h <q> <f> <re_left> <im_left> <re_right> <im_right>        (Q*F lines)
//
// Data lines are zero-based and direction-major: q = 0 covers f = 0..F-1,
// then q = 1, and so on.

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nfbsm/errors.hpp"
#include "nfbsm/field.hpp"
#include "nfbsm/sphmath.hpp"
#include "nfbsm/text.hpp"

namespace nfbsm::hrtf {

using field::RigidSphere;
using sphmath::Order;

/// Ear positions on the sphere surface. Defaults: horizontal plane,
/// azimuth 100 deg (left) and 260 deg (right).
struct EarGeometry {
  Direction left = Direction::from_degrees(90.0, 100.0);
  Direction right = Direction::from_degrees(90.0, 260.0);
};

struct SourceModel {
  enum class Kind { far_field_plane_wave, near_field_point };

  Kind kind = Kind::far_field_plane_wave;
  // Point source: the source distance. Plane wave: the nominal reference
  // distance the resulting set is labelled with.
  double distance_m = 3.2;

  static SourceModel plane_wave(double nominal_distance_m = 3.2) {
    return {Kind::far_field_plane_wave, nominal_distance_m};
  }
  static SourceModel point(double distance_m) { return {Kind::near_field_point, distance_m}; }
};

/// Per-ear complex responses, rows = directions, columns = frequencies.
struct HrtfSet {
  std::vector<Direction> directions;
  std::vector<double> frequencies_hz;
  double reference_distance_m = 3.2;
  Eigen::MatrixXcd left;
  Eigen::MatrixXcd right;

  Eigen::Index num_directions() const { return static_cast<Eigen::Index>(directions.size()); }
  Eigen::Index num_frequencies() const { return static_cast<Eigen::Index>(frequencies_hz.size()); }

  void validate() const {
    const auto q = num_directions();
    const auto f = num_frequencies();
    if (left.rows() != q || left.cols() != f || right.rows() != q || right.cols() != f) {
      throw ContractError("HRTF tables must be " + std::to_string(q) + "x" + std::to_string(f));
    }
    if (!(reference_distance_m > 0.0) || !std::isfinite(reference_distance_m)) {
      throw ContractError("HRTF reference distance must be positive");
    }
    for (double hz : frequencies_hz) {
      if (!(hz > 0.0) || !std::isfinite(hz)) throw ContractError("HRTF frequencies must be positive");
    }
    if (!left.allFinite() || !right.allFinite()) throw DataError("HRTF set contains non-finite values");
  }
};

/// Pressure at the two ear points for every (direction, frequency). Plane
/// waves are unit amplitude at the origin; point sources are divided by the
/// free-field factor e^{-ikr_s}/r_s, so |H| -> 1 at low frequency either way.
inline HrtfSet analytic_sphere_hrtf(const RigidSphere& sphere, const EarGeometry& ears,
                                    const std::vector<Direction>& directions,
                                    const std::vector<double>& frequencies_hz, const SourceModel& model,
                                    Order order) {
  sphere.validate();
  if (!(model.distance_m > sphere.radius_m)) {
    throw DomainError("source model distance must exceed the sphere radius");
  }
  HrtfSet set;
  set.directions = directions;
  set.frequencies_hz = frequencies_hz;
  set.reference_distance_m = model.distance_m;
  const auto q_count = set.num_directions();
  const auto f_count = set.num_frequencies();
  set.left.resize(q_count, f_count);
  set.right.resize(q_count, f_count);

  for (Eigen::Index f = 0; f < f_count; ++f) {
    const double hz = frequencies_hz[static_cast<std::size_t>(f)];
    if (!(hz > 0.0)) throw DomainError("frequencies must be positive");
    const double k = sphere.wavenumber(hz);
    field::ModalSeries series;
    cplx norm{1.0, 0.0};
    if (model.kind == SourceModel::Kind::near_field_point) {
      series = field::ModalSeries::point_source(sphere, model.distance_m, sphere.radius_m, k, order);
      norm = field::free_field_factor(k, model.distance_m);
    } else {
      series = field::ModalSeries::plane_wave(sphere, sphere.radius_m, k, order);
    }
    for (Eigen::Index q = 0; q < q_count; ++q) {
      const Direction& dir = directions[static_cast<std::size_t>(q)];
      set.left(q, f) = series.evaluate(dir, ears.left) / norm;
      set.right(q, f) = series.evaluate(dir, ears.right) / norm;
    }
  }
  return set;
}

/// Rescales every entry by DVF(target, reference) evaluated at the matching
/// ear point; the result is labelled with the target distance.
inline HrtfSet nearfield_transform(const HrtfSet& set, const RigidSphere& sphere, double target_distance_m,
                                   Order order, const EarGeometry& ears = {}) {
  sphere.validate();
  if (!(target_distance_m > sphere.radius_m) || !std::isfinite(target_distance_m)) {
    throw DomainError("target distance must exceed the sphere radius");
  }
  if (!(set.reference_distance_m > sphere.radius_m)) {
    throw DomainError("HRTF reference distance must exceed the sphere radius");
  }
  HrtfSet out = set;
  out.reference_distance_m = target_distance_m;
  for (Eigen::Index f = 0; f < set.num_frequencies(); ++f) {
    const double k = sphere.wavenumber(set.frequencies_hz[static_cast<std::size_t>(f)]);
    const auto near = field::ModalSeries::point_source(sphere, target_distance_m, sphere.radius_m, k, order);
    const auto far = field::ModalSeries::point_source(sphere, set.reference_distance_m, sphere.radius_m, k, order);
    for (Eigen::Index q = 0; q < set.num_directions(); ++q) {
      const Direction& dir = set.directions[static_cast<std::size_t>(q)];
      for (int ear = 0; ear < 2; ++ear) {
        const double c = cos_angle_between(dir, ear == 0 ? ears.left : ears.right);
        const cplx den = far.evaluate(c);
        if (!(std::abs(den) >= 1e-300)) throw DegenerateError("DVF denominator vanishes");
        const cplx ratio = near.evaluate(c) / den;
        auto& table = ear == 0 ? out.left : out.right;
        table(q, f) *= ratio;
      }
    }
  }
  return out;
}

inline void write_hrtf(const HrtfSet& set, std::ostream& os) {
  set.validate();
  using text::format_double;
  os << "version 1\n";
  os << "reference_distance_m " << format_double(set.reference_distance_m) << "\n";
  os << "num_directions " << set.directions.size() << "\n";
  os << "num_frequencies " << set.frequencies_hz.size() << "\n";
  for (const auto& d : set.directions) {
    os << "dir " << format_double(rad_to_deg(d.theta())) << " " << format_double(rad_to_deg(d.phi())) << "\n";
  }
  for (double hz : set.frequencies_hz) os << "freq " << format_double(hz) << "\n";
  for (Eigen::Index q = 0; q < set.num_directions(); ++q) {
    for (Eigen::Index f = 0; f < set.num_frequencies(); ++f) {
      const cplx l = set.left(q, f);
      const cplx r = set.right(q, f);
      os << "h " << q << " " << f << " " << format_double(l.real()) << " " << format_double(l.imag()) << " "
         << format_double(r.real()) << " " << format_double(r.imag()) << "\n";
    }
  }
}

namespace detail {

struct LineReader {
  std::istream& in;
  std::size_t line_no = 0;

  // Next non-empty line with comments removed, tokenized. Empty at EOF.
  std::vector<std::string> next(std::string& raw) {
    while (std::getline(in, raw)) {
      ++line_no;
      const auto tokens = text::split_whitespace(text::strip_comment(raw));
      if (tokens.empty()) continue;
      return {tokens.begin(), tokens.end()};
    }
    return {};
  }
};

inline double number_at(const std::vector<std::string>& tok, std::size_t i, std::size_t line) {
  const auto v = text::parse_double(tok[i]);
  if (!v) throw FormatError("expected a number, found '" + tok[i] + "'", line);
  return *v;
}

inline double finite_number_at(const std::vector<std::string>& tok, std::size_t i, std::size_t line) {
  const double v = number_at(tok, i, line);
  if (!std::isfinite(v)) {
    throw DataError("line " + std::to_string(line) + ": non-finite value '" + tok[i] + "'");
  }
  return v;
}

inline long long count_at(const std::vector<std::string>& tok, std::size_t i, std::size_t line) {
  const auto v = text::parse_int(tok[i]);
  if (!v || *v < 0) throw FormatError("expected a non-negative integer, found '" + tok[i] + "'", line);
  return *v;
}

inline std::vector<std::string> expect_line(LineReader& reader, const std::string& keyword, std::size_t arity) {
  std::string raw;
  auto tok = reader.next(raw);
  if (tok.empty()) {
    throw FormatError("unexpected end of file, expected '" + keyword + "'", reader.line_no + 1);
  }
  if (tok[0] != keyword || tok.size() != arity + 1) {
    throw FormatError("expected '" + keyword + "' with " + std::to_string(arity) + " value(s), found '" +
                          std::string(text::trim(raw)) + "'",
                      reader.line_no);
  }
  return tok;
}

}  // namespace detail

inline HrtfSet read_hrtf(std::istream& in) {
  detail::LineReader reader{in};

  auto tok = detail::expect_line(reader, "version", 1);
  if (tok[1] != "1") throw FormatError("unsupported version '" + tok[1] + "'", reader.line_no);

  HrtfSet set;
  tok = detail::expect_line(reader, "reference_distance_m", 1);
  set.reference_distance_m = detail::finite_number_at(tok, 1, reader.line_no);
  if (!(set.reference_distance_m > 0.0)) {
    throw DataError("line " + std::to_string(reader.line_no) + ": reference distance must be positive");
  }
  tok = detail::expect_line(reader, "num_directions", 1);
  const auto q_count = detail::count_at(tok, 1, reader.line_no);
  tok = detail::expect_line(reader, "num_frequencies", 1);
  const auto f_count = detail::count_at(tok, 1, reader.line_no);

  for (long long q = 0; q < q_count; ++q) {
    tok = detail::expect_line(reader, "dir", 2);
    const double theta = detail::finite_number_at(tok, 1, reader.line_no);
    const double phi = detail::finite_number_at(tok, 2, reader.line_no);
    if (theta < 0.0 || theta > 180.0) {
      throw DataError("line " + std::to_string(reader.line_no) + ": elevation must lie in [0, 180] deg");
    }
    set.directions.push_back(Direction::from_degrees(theta, phi));
  }
  for (long long f = 0; f < f_count; ++f) {
    tok = detail::expect_line(reader, "freq", 1);
    const double hz = detail::finite_number_at(tok, 1, reader.line_no);
    if (!(hz > 0.0)) throw DataError("line " + std::to_string(reader.line_no) + ": frequency must be positive");
    set.frequencies_hz.push_back(hz);
  }

  set.left.resize(q_count, f_count);
  set.right.resize(q_count, f_count);
  const long long expected = q_count * f_count;
  long long found = 0;
  std::string raw;
  for (auto row = reader.next(raw); !row.empty(); row = reader.next(raw)) {
    if (row[0] != "h" || row.size() != 7) {
      throw FormatError("expected a data line 'h q f re_l im_l re_r im_r', found '" +
                            std::string(text::trim(raw)) + "'",
                        reader.line_no);
    }
    if (found < expected) {
      const long long q = detail::count_at(row, 1, reader.line_no);
      const long long f = detail::count_at(row, 2, reader.line_no);
      if (q != found / f_count || f != found % f_count) {
        throw SchemaError("line " + std::to_string(reader.line_no) + ": expected indices (" +
                          std::to_string(found / f_count) + ", " + std::to_string(found % f_count) +
                          ") in direction-major order, found (" + std::to_string(q) + ", " + std::to_string(f) +
                          ")");
      }
      const double v[4] = {detail::finite_number_at(row, 3, reader.line_no),
                           detail::finite_number_at(row, 4, reader.line_no),
                           detail::finite_number_at(row, 5, reader.line_no),
                           detail::finite_number_at(row, 6, reader.line_no)};
      set.left(q, f) = {v[0], v[1]};
      set.right(q, f) = {v[2], v[3]};
    }
    ++found;
  }
  if (found != expected) {
    throw SchemaError("expected " + std::to_string(expected) + " data rows (" + std::to_string(q_count) + " x " +
                      std::to_string(f_count) + "), found " + std::to_string(found));
  }
  return set;
}

inline void save_hrtf(const HrtfSet& set, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_hrtf(set, os);
  os.flush();
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline HrtfSet load_hrtf(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_hrtf(in);
}

}  // namespace nfbsm::hrtf
