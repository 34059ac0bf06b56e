#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mft/census.hpp"
#include "mft/dataset.hpp"
#include "mft/network.hpp"

namespace mft {

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 256;
  double lr = 0.05;
  std::vector<std::size_t> lr_decay_epochs;  // multiply by lr_decay at each
  double lr_decay = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  InitKind init = InitKind::untruncated_normal;
  bool shuffle = true;
  NetworkOptions arithmetic;

  bool no_als_scaling = false;
  bool no_wbc = false;
  bool no_prc = false;
  bool fp32_baseline = false;

  void validate() const;
  // Arithmetic switches after ablations and the baseline flag are applied.
  NetworkOptions network_options() const;
  double lr_for_epoch(std::size_t epoch) const;
};

struct StepMetrics {
  double loss = 0.0;
  std::size_t correct = 0, count = 0;
  OpCounts ops;
  SentinelCounts sentinels;
};

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0, train_accuracy = 0.0;
  double test_loss = 0.0, test_accuracy = 0.0;
  std::uint64_t steps = 0;
  std::uint64_t saturations = 0;
  double w_zero_fraction = 0.0, a_zero_fraction = 0.0, g_zero_fraction = 0.0;
  OpCounts ops;
  double wall_seconds = 0.0;
};

// Progress that a checkpoint must carry to resume a run exactly.
struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;
  std::string rng_state;
};

// True when the loss fails to fall between any two consecutive entries among
// the last `window` values.
bool non_monotone_tail(std::span<const double> losses, std::size_t window = 2);

class Trainer {
 public:
  Trainer(Network& net, TrainConfig config);

  // Draws fresh weights from the configured init.
  void init_weights();

  StepMetrics train_step(const Tensor& x, std::span<const int> labels,
                         const Tensor* targets = nullptr);
  EvalMetrics evaluate(const Dataset& data);
  // Shuffles, runs every full or partial batch once and evaluates on `test`
  // when given.
  EpochMetrics run_epoch(const Dataset& train, const Dataset* test = nullptr);

  TrainState state() const;
  void restore(const TrainState& s);

  const TrainConfig& config() const { return config_; }
  Network& network() { return net_; }

 private:
  Network& net_;
  TrainConfig config_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
  std::uint64_t step_ = 0;
};

}  // namespace mft
