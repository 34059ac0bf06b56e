#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mft/layers.hpp"

namespace mft {

enum class LossKind { softmax_xent, mse };
enum class InitKind { untruncated_normal, truncated_normal };

struct LayerSpec {
  std::string kind;  // linear | conv2d | relu | flatten
  std::size_t in = 0, out = 0;
  ConvGeometry conv;
  // Per-layer overrides.
  std::optional<int> bits_w, bits_a, bits_g;
  std::optional<double> gamma;
};

struct NetworkSpec {
  Shape input;  // one example, without the batch dimension
  std::vector<LayerSpec> layers;
  LossKind loss = LossKind::softmax_xent;

  // Flattened input -> hidden... -> classes, ReLU between linear layers.
  static NetworkSpec mlp(const std::vector<std::size_t>& sizes);
};

// Network-wide arithmetic switches. Per-layer overrides in LayerSpec win.
struct NetworkOptions {
  bool quantize = true;
  bool layer_scaling = true;
  bool bias_correction = true;
  bool clipping = true;
  int bits_w = 5, bits_a = 5, bits_g = 5;
  int last_layer_bits_g = 6;
  double gamma = 1.0;
  bool learn_gamma = false;
  bool mask_grad_by_clip = true;
  AccumulatorConfig accumulator;
};

struct LossResult {
  double loss = 0.0;
  std::size_t correct = 0;
  Tensor grad;  // d loss / d logits, batch-mean reduction
};

// Mean cross-entropy of softmax(logits) against integer labels.
LossResult softmax_xent(const Tensor& logits, std::span<const int> labels);
// 0.5 * mean over the batch of the squared error against one-hot labels
// (or against explicit targets when given).
LossResult mse_loss(const Tensor& out, std::span<const int> labels,
                    const Tensor* targets = nullptr);

class Network {
 public:
  Network(NetworkSpec spec, const NetworkOptions& options);

  const NetworkSpec& spec() const { return spec_; }
  const NetworkOptions& options() const { return options_; }
  std::size_t num_classes() const { return classes_; }

  // Throws TrainingFault (with the layer index) on non-finite values.
  Tensor forward(const Tensor& x);
  void backward(const Tensor& grad_out);
  LossResult loss(const Tensor& out, std::span<const int> labels,
                  const Tensor* targets = nullptr) const;

  void init_weights(InitKind kind, std::mt19937_64& rng);

  // MACs per example in the linear layers. Backward counts the weight
  // gradient everywhere and the input gradient for all but the first layer.
  struct MacCount {
    std::uint64_t fw = 0, bw = 0;
  };
  MacCount macs_per_example() const;

  std::vector<Param*> params();
  std::vector<MacLayer*> mac_layers();
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  void clear_caches();
  void after_update();
  SentinelCounts take_sentinel_counts();

 private:
  NetworkSpec spec_;
  NetworkOptions options_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::size_t classes_ = 0;
};

// He-scaled normal draw; the truncated kind redraws anything beyond 2 sigma.
double draw_init(InitKind kind, double sigma, std::mt19937_64& rng);

}  // namespace mft
