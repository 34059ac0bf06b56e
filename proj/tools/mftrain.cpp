// mftrain: multiplication-free training toolkit.

#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace mft::cli;

int main(int argc, char** argv) {
  CLI::App app{"Power-of-two quantized, multiplication-free training"};
  app.require_subcommand(1);

  QuantizeArgs q;
  std::string q_input;
  auto* quantize = app.add_subcommand("quantize", "ALS-PoT quantize a tensor and report errors");
  quantize->add_option("input", q_input, "IDX or text file of numbers");
  quantize->add_option("--sample", q.sample, "normal | lognormal | uniform | zeros")
      ->check(CLI::IsMember({"normal", "lognormal", "uniform", "zeros"}));
  quantize->add_option("--count", q.count, "sample size")->check(CLI::PositiveNumber);
  quantize->add_option("--seed", q.seed);
  quantize->add_option("--bits", q.bits, "3..6");
  quantize->add_flag("--stats", q.stats, "print moments of the input");
  quantize->add_option("--hist-bins", q.hist_bins, "text histogram of log2|x|");

  TrainArgs t;
  std::string t_resume, t_out;
  auto* train = app.add_subcommand("train", "train a network from a YAML config");
  train->add_option("config", t.config)->required();
  train->add_option("--ablate", t.ablate, "no_als_scaling | no_wbc | no_prc (repeatable)");
  train->add_option("--resume", t_resume, "checkpoint to continue from");
  train->add_flag("--fp32-baseline", t.fp32_baseline, "dense FP32 arithmetic");
  train->add_option("--out", t_out, "output directory");
  std::size_t stop_after = 0;
  auto* stop = train->add_option("--stop-after", stop_after, "epochs to run in this call")
                   ->check(CLI::PositiveNumber);
  train->add_flag("--quiet", t.quiet);

  EnergyArgs e;
  std::string e_config, e_census, e_out;
  auto* energy = app.add_subcommand("energy", "per-iteration MAC energy report");
  energy->add_option("--config", e_config, "YAML with costs and methods");
  energy->add_option("--method", e.methods, "restrict to these methods (repeatable)");
  energy->add_option("--workload", e.workload, "resnet50 or a forward MAC count");
  energy->add_option("--bw-multiplier", e.bw_multiplier);
  energy->add_option("--block", e.block, "elements per quantization block");
  energy->add_option("--from-census", e_census, "census.json from a train run");
  energy->add_option("--out", e_out, "directory for energy.csv and energy.txt");

  CompareArgs c;
  auto* compare = app.add_subcommand("compare", "compare two metrics.csv files");
  compare->add_option("a", c.a)->required();
  compare->add_option("b", c.b)->required();
  compare->add_option("--max-gap", c.max_gap_points, "allowed accuracy gap in points");

  SelftestArgs s;
  std::string s_costs;
  auto* selftest = app.add_subcommand("selftest", "run the built-in checks");
  selftest->add_option("--cost-table", s_costs, "energy YAML to check");
  selftest->add_option("--oracle-blocks", s.oracle_blocks);
  selftest->add_option("--seed", s.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : kConfig;
  }

  auto run = [](auto&& f) { return guarded(f, std::cerr); };
  if (*quantize) {
    if (!q_input.empty()) q.input = q_input;
    return run([&] { return cmd_quantize(q, std::cout); });
  }
  if (*train) {
    if (!t_resume.empty()) t.resume = t_resume;
    if (!t_out.empty()) t.out = t_out;
    if (*stop) t.stop_after = stop_after;
    return run([&] { return cmd_train(t, std::cout); });
  }
  if (*energy) {
    if (!e_config.empty()) e.config = e_config;
    if (!e_census.empty()) e.from_census = e_census;
    if (!e_out.empty()) e.out = e_out;
    return run([&] { return cmd_energy(e, std::cout); });
  }
  if (*compare) return run([&] { return cmd_compare(c, std::cout); });
  if (!s_costs.empty()) s.cost_table = s_costs;
  return run([&] { return cmd_selftest(s, std::cout); });
}
