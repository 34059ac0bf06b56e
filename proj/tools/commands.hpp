#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mft/errors.hpp"

namespace mft::cli {

// Process exit codes.
enum Exit : int {
  kOk = 0,
  kFailed = 1,  // selftest suite failed, or an internal error
  kConfig = 2,
  kInput = 3,
  kTrainingFault = 4,
};

struct QuantizeArgs {
  std::optional<std::filesystem::path> input;
  std::string sample = "normal";  // normal | lognormal | uniform | zeros
  std::size_t count = 10000;
  std::uint64_t seed = 1;
  int bits = 5;
  bool stats = false;
  std::size_t hist_bins = 0;
};

struct TrainArgs {
  std::filesystem::path config;
  std::vector<std::string> ablate;
  std::optional<std::filesystem::path> resume;
  bool fp32_baseline = false;
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> stop_after;  // epochs to run in this invocation
  bool quiet = false;
};

struct EnergyArgs {
  std::optional<std::filesystem::path> config;
  std::vector<std::string> methods;
  std::string workload = "resnet50";  // or a forward MAC count
  double bw_multiplier = 2.0;
  std::size_t block = 256;            // elements per quantization block
  std::optional<std::filesystem::path> from_census;
  std::optional<std::filesystem::path> out;
};

struct CompareArgs {
  std::filesystem::path a, b;
  double max_gap_points = 2.0;
};

struct SelftestArgs {
  std::optional<std::filesystem::path> cost_table;
  std::size_t oracle_blocks = 2000;
  std::uint64_t seed = 1;
};

// Each returns an Exit code; library exceptions propagate to main().
int cmd_quantize(const QuantizeArgs& args, std::ostream& out);
int cmd_train(const TrainArgs& args, std::ostream& out);
int cmd_energy(const EnergyArgs& args, std::ostream& out);
int cmd_compare(const CompareArgs& args, std::ostream& out);
int cmd_selftest(const SelftestArgs& args, std::ostream& out);

// Runs body(), mapping library exceptions onto exit codes.
template <class F>
int guarded(F&& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const TrainingFault& e) {
    err << "training fault: " << e.what();
    if (e.step() >= 0) err << " (step " << e.step() << ")";
    if (e.layer() >= 0) err << " (layer " << e.layer() << ")";
    err << "\n";
    return kTrainingFault;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailed;
  }
}

}  // namespace mft::cli
