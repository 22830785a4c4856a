// bsm-sweep: run the FF/NF binaural signal matching sweep, validate configs,
// and write analytic HRTF tables.
//
// Exit codes: 0 success, 1 validation error, 2 numerical error, 3 I/O error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "nfbsm/nfbsm.hpp"

namespace {

using namespace nfbsm;

enum ExitCode : int { kOk = 0, kValidation = 1, kNumerical = 2, kIo = 3 };

experiment::ExperimentConfig load_or_default(const std::string& path) {
  return path.empty() ? experiment::parse_config_text("") : experiment::parse_config(path);
}

void print_summary(const experiment::ExperimentConfig& cfg, const experiment::ErrorSurface& surface,
                   std::ostream& os) {
  os << "lambda (sigma_n^2/sigma_s^2) = " << text::format_double(surface.lambda) << "\n";
  os << "records = " << surface.records.size() << "\n";
  // Left-ear mean error below 2 kHz per distance, FF vs NF.
  std::map<double, std::pair<double, double>> sums;
  std::map<double, int> counts;
  for (const auto& r : surface.records) {
    if (r.ear != experiment::Ear::left || r.frequency_hz > 2000.0) continue;
    auto& s = sums[r.distance_m];
    (r.filter == bsm::DesignKind::ff ? s.first : s.second) += r.epsilon;
    if (r.filter == bsm::DesignKind::ff) ++counts[r.distance_m];
  }
  os << "left ear, mean epsilon up to 2 kHz:\n";
  for (double d : cfg.distances_m) {
    const int n = counts[d];
    if (n == 0) continue;
    os << "  r_s = " << text::format_double(d) << " m: ff " << sums[d].first / n << "  nf " << sums[d].second / n
       << "\n";
  }
}

int run(const std::string& config_path, const std::string& out_path, unsigned threads) {
  const auto cfg = experiment::parse_config(config_path);
  const auto start = std::chrono::steady_clock::now();
  const auto surface = experiment::run_sweep(cfg, threads);
  experiment::emit_csv(surface, out_path);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  print_summary(cfg, surface, std::cout);
  std::cout << "wrote " << out_path << " in " << secs << " s\n";
  return kOk;
}

int validate(const std::string& config_path, bool print) {
  const auto cfg = experiment::parse_config(config_path);
  if (print) {
    std::cout << experiment::serialize_config(cfg);
  } else {
    std::cout << "config OK: " << cfg.distances_m.size() << " distances, " << cfg.frequency_grid().size()
              << " frequencies, lambda = " << text::format_double(cfg.noise.lambda()) << "\n";
  }
  return kOk;
}

int gen_hrtf(const std::string& out_path, const std::string& config_path, int num_directions,
             const std::vector<double>& frequencies, double distance_m, bool plane_wave) {
  const auto cfg = load_or_default(config_path);
  const auto dirs = num_directions > 0 ? grid::fibonacci_directions(num_directions) : cfg.design_directions();
  const auto freqs = frequencies.empty() ? cfg.frequency_grid() : frequencies;
  const double r = distance_m > 0.0 ? distance_m : cfg.reference_distance_m;
  const bool use_plane = plane_wave || cfg.hrtf_model == experiment::HrtfModel::plane_wave;
  const auto model = use_plane ? hrtf::SourceModel::plane_wave(r) : hrtf::SourceModel::point(r);
  const auto set = hrtf::analytic_sphere_hrtf(cfg.sphere(), cfg.ears(), dirs, freqs, model, cfg.series_order());
  hrtf::save_hrtf(set, out_path);
  std::cout << "wrote " << out_path << " (" << dirs.size() << " directions x " << freqs.size()
            << " frequencies, reference " << text::format_double(r) << " m)\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near-field / far-field binaural signal matching sweep"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  unsigned threads = 0;
  auto* run_cmd = app.add_subcommand("run", "Run the distance x frequency sweep and write a CSV");
  run_cmd->add_option("--config", config_path, "Config file")->required();
  run_cmd->add_option("--out", out_path, "Output CSV path")->required();
  run_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");

  bool print = false;
  auto* validate_cmd = app.add_subcommand("validate", "Parse and validate a config file");
  validate_cmd->add_option("--config", config_path, "Config file")->required();
  validate_cmd->add_flag("--print", print, "Print the fully expanded config");

  int num_directions = 0;
  std::vector<double> frequencies;
  double distance_m = 0.0;
  bool plane_wave = false;
  auto* gen_cmd = app.add_subcommand("gen-hrtf", "Write an analytic rigid-sphere HRTF table");
  gen_cmd->add_option("--out", out_path, "Output HRTF table path")->required();
  gen_cmd->add_option("--config", config_path, "Config supplying sphere, ears, grids and order");
  gen_cmd->add_option("--num-directions", num_directions, "Fibonacci grid size (default: config design grid)");
  gen_cmd->add_option("--frequencies", frequencies, "Frequencies in Hz (default: config grid)")->delimiter(',');
  gen_cmd->add_option("--distance", distance_m, "Source distance in m (default: reference_distance_m)");
  gen_cmd->add_flag("--plane-wave", plane_wave, "Plane-wave source model instead of a point source");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*run_cmd) return run(config_path, out_path, threads);
    if (*validate_cmd) return validate(config_path, print);
    if (*gen_cmd) return gen_hrtf(out_path, config_path, num_directions, frequencies, distance_m, plane_wave);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
