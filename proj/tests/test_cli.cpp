#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "nfbsm/experiment.hpp"
#include "nfbsm/hrtf.hpp"

namespace {

const std::string kExe = NFBSM_SWEEP_EXE;

int run(const std::string& args) {
  const std::string cmd = "\"" + kExe + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_temp(const std::string& name, const std::string& body) {
  const std::string path = ::testing::TempDir() + name;
  std::ofstream(path) << body;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmall = "distances_m = [0.2, 1.0]\nfreq_count = 3\ndesign_grid_size = 40\n";

TEST(Cli, ValidateExitCodes) {
  EXPECT_EQ(run("validate --config " + write_temp("ok.cfg", kSmall)), 0);
  EXPECT_EQ(run("validate --config " + write_temp("bad.cfg", "distances_m = [-1]\n")), 1);
  EXPECT_EQ(run("validate --config " + write_temp("unknown.cfg", "volume = 3\n")), 1);
  EXPECT_EQ(run("validate --config /nonexistent/dir/x.cfg"), 3);
}

TEST(Cli, UsageErrorsAreValidationErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("run --config x.cfg"), 1);  // --out missing
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, RunWritesCsv) {
  const std::string out = ::testing::TempDir() + "cli_sweep.csv";
  std::remove(out.c_str());
  ASSERT_EQ(run("run --config " + write_temp("run.cfg", kSmall) + " --out " + out), 0);
  const std::string csv = slurp(out);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), nfbsm::experiment::kCsvHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2 * 3 * 4 + 1);
}

TEST(Cli, RunErrorCategories) {
  const std::string cfg = write_temp("run2.cfg", kSmall);
  EXPECT_EQ(run("run --config " + cfg + " --out /nonexistent/dir/out.csv"), 3);

  const std::string zero = write_temp("zero_cli.hrtf",
                                      "version 1\nreference_distance_m 3.2\nnum_directions 1\nnum_frequencies 1\n"
                                      "dir 90 0\nfreq 1000\nh 0 0 0 0 0 0\n");
  const std::string numeric =
      write_temp("numeric.cfg", "distances_m = [0.4]\nhrtf_source = file\nhrtf_file = \"" + zero + "\"\n");
  EXPECT_EQ(run("run --config " + numeric + " --out " + ::testing::TempDir() + "never.csv"), 2);

  const std::string garbled = write_temp("garbled.hrtf", "version 1\nreference_distance 3.2\n");
  const std::string bad_file =
      write_temp("badfile.cfg", "distances_m = [0.4]\nhrtf_source = file\nhrtf_file = \"" + garbled + "\"\n");
  EXPECT_EQ(run("run --config " + bad_file + " --out " + ::testing::TempDir() + "never.csv"), 1);
}

TEST(Cli, GenHrtfRoundTrips) {
  const std::string out = ::testing::TempDir() + "gen.hrtf";
  ASSERT_EQ(run("gen-hrtf --num-directions 4 --frequencies 500,2000,8000 --out " + out), 0);
  const auto generated = nfbsm::hrtf::load_hrtf(out);
  const auto fixture = nfbsm::hrtf::load_hrtf(std::string(NFBSM_TEST_DATA_DIR) + "/analytic_4x3.hrtf");
  EXPECT_LT((generated.left - fixture.left).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((generated.right - fixture.right).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(run("gen-hrtf --num-directions 4 --frequencies 500 --out /nonexistent/dir/x.hrtf"), 3);
  EXPECT_EQ(run("gen-hrtf --num-directions 4 --frequencies 500 --distance 0.05 --out " + out), 2);
}

}  // namespace
