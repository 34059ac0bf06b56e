#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include "mft/dataset.hpp"
#include "mft/energy.hpp"
#include "mft/network.hpp"
#include "mft/trainer.hpp"

namespace mft {

// Directory searched for relative config paths that do not exist as given.
inline constexpr const char* kConfigDirEnv = "MFTRAIN_CONFIG_DIR";

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | idx | csv
  ClusterSpec clusters;
  std::size_t train_size = 6144, test_size = 2000;
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::filesystem::path train_csv, test_csv;
  CsvOptions csv;
};

struct RunConfig {
  NetworkSpec network;
  TrainConfig train;
  DatasetConfig dataset;
  OpCostTable costs = OpCostTable::defaults();
  std::filesystem::path output_dir = "run";
  std::size_t checkpoint_every = 1;  // epochs; 0 disables
};

// The 784-256-10 MLP on the synthetic digit-sized clusters.
RunConfig default_run_config();

// Strict parse: unknown keys, wrong types and out-of-range values raise
// ConfigError with origin:line:column. Relative paths resolve against
// base_dir.
RunConfig parse_run_config(std::string_view yaml_text, const std::string& origin,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Looks the path up as given, then under $MFTRAIN_CONFIG_DIR.
std::filesystem::path resolve_config_path(const std::filesystem::path& path);

// Train split and optional test split.
std::pair<Dataset, std::optional<Dataset>> load_datasets(const DatasetConfig& config);

}  // namespace mft
