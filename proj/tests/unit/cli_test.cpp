#include "commands.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <regex>
#include <sstream>

#include "mft/fileutil.hpp"

namespace mft::cli {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mft_cli_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

template <class Args>
int run(int (*cmd)(const Args&, std::ostream&), const Args& a, std::string* out = nullptr) {
  std::ostringstream os, err;
  const int rc = guarded([&] { return cmd(a, os); }, err);
  if (out) *out = os.str() + err.str();
  return rc;
}

double field(const std::string& text, const std::string& key) {
  const std::regex re(key + ": ([-0-9.e+]+)");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return NAN;
  return std::stod(m[1]);
}

// --------------------------------------------------------------- quantize

TEST(Quantize, NormalSampleWithinBound) {
  QuantizeArgs a;
  std::string out;
  ASSERT_EQ(run(cmd_quantize, a, &out), kOk);
  EXPECT_LE(field(out, "max_rel_error"), 0.41422);
  EXPECT_EQ(field(out, "clamp_fraction"), 0.0);
}

TEST(Quantize, ZerosAreAllSentinels) {
  QuantizeArgs a;
  a.sample = "zeros";
  std::string out;
  ASSERT_EQ(run(cmd_quantize, a, &out), kOk);
  EXPECT_EQ(field(out, "zero_sentinel_fraction"), 1.0);
}

// PoT rounding error depends only on where mantissas fall inside an octave,
// and both samples spread them almost evenly: the mean error is about 0.175
// for each, so no strict ordering is asserted.
TEST(Quantize, LognormalAndUniformMeanErrorsAgree) {
  QuantizeArgs a;
  a.count = 100000;
  std::string lo, un;
  a.sample = "lognormal";
  ASSERT_EQ(run(cmd_quantize, a, &lo), kOk);
  a.sample = "uniform";
  ASSERT_EQ(run(cmd_quantize, a, &un), kOk);
  const double l = field(lo, "mean_rel_error"), u = field(un, "mean_rel_error");
  EXPECT_NEAR(l, 0.175, 0.005);
  EXPECT_NEAR(u, 0.175, 0.005);
  EXPECT_NEAR(l, u, 0.003);
}

TEST(Quantize, FileInputStatsAndHistogram) {
  const auto p = scratch("vals.txt");
  atomic_write(p, "0.5 -0.25 3 0 0.001\n");
  QuantizeArgs a;
  a.input = p;
  a.stats = true;
  a.hist_bins = 4;
  std::string out;
  ASSERT_EQ(run(cmd_quantize, a, &out), kOk);
  EXPECT_EQ(field(out, "elements"), 5);
  EXPECT_NE(out.find("kurtosis"), std::string::npos);
  EXPECT_NE(out.find("histogram"), std::string::npos);
}

TEST(Quantize, BadInputs) {
  QuantizeArgs a;
  a.input = scratch("missing.txt");
  EXPECT_EQ(run(cmd_quantize, a), kInput);
  a.input.reset();
  a.bits = 9;
  EXPECT_EQ(run(cmd_quantize, a), kConfig);
  const auto p = scratch("garbage.txt");
  atomic_write(p, "1 2 nope\n");
  a.bits = 5;
  a.input = p;
  EXPECT_EQ(run(cmd_quantize, a), kInput);
}

// ------------------------------------------------------------------ train

fs::path tiny_config(const std::string& name, const std::string& extra = "") {
  const auto p = scratch(name + ".yaml");
  atomic_write(p,
               "network:\n  mlp: [12, 8, 3]\n"
               "train:\n  epochs: 3\n  batch_size: 16\n  lr: 0.05\n"
               "dataset:\n  kind: synthetic\n  train_size: 64\n  test_size: 32\n  dim: 12\n"
               "  classes: 3\n  separation: 0.6\n" +
                   extra);
  return p;
}

TEST(Train, WritesDeterministicMetrics) {
  TrainArgs a;
  a.config = tiny_config("det");
  a.quiet = true;
  a.out = scratch("det1");
  ASSERT_EQ(run(cmd_train, a), kOk);
  a.out = scratch("det2");
  ASSERT_EQ(run(cmd_train, a), kOk);
  const std::string m1 = read_file(scratch("det1") / "metrics.csv");
  EXPECT_EQ(m1, read_file(scratch("det2") / "metrics.csv"));
  EXPECT_EQ(m1.rfind("#schema=1\nepoch,steps,lr,train_loss", 0), 0u);
  EXPECT_TRUE(fs::exists(scratch("det1") / "checkpoint.mftc"));
  EXPECT_TRUE(fs::exists(scratch("det1") / "census.json"));
  EXPECT_TRUE(fs::exists(scratch("det1") / "timing.csv"));
}

TEST(Train, ResumeReproducesUninterruptedRun) {
  TrainArgs a;
  a.config = tiny_config("res");
  a.quiet = true;
  a.out = scratch("res_full");
  ASSERT_EQ(run(cmd_train, a), kOk);
  a.out = scratch("res_split");
  a.stop_after = 1;
  ASSERT_EQ(run(cmd_train, a), kOk);
  a.stop_after.reset();
  a.resume = scratch("res_split") / "checkpoint.mftc";
  ASSERT_EQ(run(cmd_train, a), kOk);
  EXPECT_EQ(read_file(scratch("res_full") / "metrics.csv"),
            read_file(scratch("res_split") / "metrics.csv"));
}

TEST(Train, BaselineAndAblationsRun) {
  TrainArgs a;
  a.config = tiny_config("abl");
  a.quiet = true;
  a.out = scratch("abl_fp32");
  a.fp32_baseline = true;
  ASSERT_EQ(run(cmd_train, a), kOk);
  a.fp32_baseline = false;
  a.ablate = {"no_wbc", "no_prc"};
  a.out = scratch("abl_wbc");
  ASSERT_EQ(run(cmd_train, a), kOk);
  a.ablate = {"no_momentum"};
  EXPECT_EQ(run(cmd_train, a), kConfig);
}

TEST(Train, ErrorsMapToExitCodes) {
  TrainArgs a;
  a.quiet = true;
  a.out = scratch("err");
  a.config = scratch("absent.yaml");
  EXPECT_EQ(run(cmd_train, a), kInput);
  a.config = tiny_config("bad_key", "colour: blue\n");
  EXPECT_EQ(run(cmd_train, a), kConfig);
  // Example size 12 against a 10-wide input layer.
  a.config = tiny_config("mismatch", "");
  atomic_write(a.config, read_file(a.config).replace(read_file(a.config).find("[12"), 3, "[10"));
  EXPECT_EQ(run(cmd_train, a), kInput);
  const auto diverge = scratch("diverge.yaml");
  atomic_write(diverge, read_file(tiny_config("d0")).replace(
                            read_file(tiny_config("d0")).find("lr: 0.05"), 8, "lr: 1e300"));
  a.config = diverge;
  std::string out;
  EXPECT_EQ(run(cmd_train, a, &out), kTrainingFault);
  EXPECT_NE(out.find("step"), std::string::npos) << out;
}

// ------------------------------------------------------------------ energy

TEST(Energy, DefaultReport) {
  EnergyArgs a;
  a.out = scratch("energy");
  std::string out;
  ASSERT_EQ(run(cmd_energy, a, &out), kOk);
  EXPECT_NE(out.find("96.6%"), std::string::npos);
  EXPECT_NE(out.find("95.8%"), std::string::npos);
  EXPECT_TRUE(fs::exists(scratch("energy") / "energy.csv"));
}

TEST(Energy, RejectsBadWorkloadAndMethod) {
  EnergyArgs a;
  a.workload = "0";
  EXPECT_EQ(run(cmd_energy, a), kConfig);
  a.workload = "12abc";
  EXPECT_EQ(run(cmd_energy, a), kConfig);
  a.workload = "resnet50";
  a.methods = {"Ours", "Warp"};
  EXPECT_EQ(run(cmd_energy, a), kConfig);
}

TEST(Energy, CensusMatchesAnalytic) {
  TrainArgs t;
  t.config = tiny_config("census");
  t.quiet = true;
  t.out = scratch("census");
  ASSERT_EQ(run(cmd_train, t), kOk);
  EnergyArgs a;
  a.methods = {"Ours"};
  a.from_census = scratch("census") / "census.json";
  std::string out;
  ASSERT_EQ(run(cmd_energy, a, &out), kOk);
  EXPECT_LT(std::abs(field(out, "relative difference")), 1.0) << out;
}

// ----------------------------------------------------------------- compare

TEST(Compare, GapAndFlags) {
  const auto a = scratch("ca.csv"), b = scratch("cb.csv");
  atomic_write(a, "#schema=1\nepoch,train_loss,test_accuracy\n1,1.0,0.80\n2,0.5,0.90\n");
  atomic_write(b, "#schema=1\nepoch,train_loss,test_accuracy\n1,1.0,0.80\n2,0.6,0.89\n");
  CompareArgs c{a, b};
  std::string out;
  EXPECT_EQ(run(cmd_compare, c, &out), kOk);
  EXPECT_NEAR(field(out, "accuracy_gap_points"), 1.0, 1e-9);
  EXPECT_NE(out.find("b_worse_or_unstable: yes"), std::string::npos);
  c.max_gap_points = 0.5;
  EXPECT_EQ(run(cmd_compare, c), kFailed);
  atomic_write(b, "epoch,loss\n");
  EXPECT_EQ(run(cmd_compare, c), kInput);
}

// ---------------------------------------------------------------- selftest

TEST(Selftest, FreshBuildPasses) {
  SelftestArgs a;
  a.oracle_blocks = 200;
  std::string out;
  EXPECT_EQ(run(cmd_selftest, a, &out), kOk) << out;
  EXPECT_NE(out.find("strict32 saturation  PASS"), std::string::npos) << out;
}

TEST(Selftest, NegativeCostIsConfigError) {
  const auto p = scratch("neg.yaml");
  atomic_write(p, "costs:\n  int4_add: -0.015\n");
  SelftestArgs a;
  a.cost_table = p;
  std::string out;
  EXPECT_EQ(run(cmd_selftest, a, &out), kConfig);
  EXPECT_NE(out.find("config error"), std::string::npos);
}

}  // namespace
}  // namespace mft::cli
