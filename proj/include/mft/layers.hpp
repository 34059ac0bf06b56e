#pragma once

// Layers of the training engine. Linear and convolution layers run the
// multiplication-free scheme when quantization is on:
//
//   forward:  W~ = W - mean(W);  Wq = ALS(W~);  A' = clip(A, gamma);
//             Aq = ALS(A');      Y = MF-MAC(Aq, Wq)
//   backward: Gq = ALS(G);  dA = MF-MAC(Gq, Wq);  dW = MF-MAC(Gq, Aq)
//
// Gradients pass straight through the quantizers. dA is zeroed where the
// clip was active. Everything else (ReLU, bias, loss) runs in full precision.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mft/mfmac.hpp"
#include "mft/quantizer.hpp"
#include "mft/tensor.hpp"

namespace mft {

struct QuantSettings {
  bool quantize = true;
  bool layer_scaling = true;
  bool bias_correction = true;
  BitWidth bits_w{5};
  BitWidth bits_a{5};
  BitWidth bits_g{5};
  AccumulatorConfig accumulator;
  bool mask_grad_by_clip = true;
  bool learn_gamma = false;
};

struct Param {
  std::string name;
  Tensor value;
  std::vector<double> grad;
  std::vector<double> momentum;

  Param() = default;
  Param(std::string n, Shape shape)
      : name(std::move(n)), value(std::move(shape)),
        grad(value.size(), 0.0), momentum(value.size(), 0.0) {}
};

// Zero-sentinel accounting per tensor class, summed over blocks.
struct SentinelCounts {
  std::uint64_t w_zero = 0, w_total = 0;
  std::uint64_t a_zero = 0, a_total = 0;
  std::uint64_t g_zero = 0, g_total = 0;

  SentinelCounts& operator+=(const SentinelCounts& o);
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  // Shapes include the batch dimension.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor forward(const Tensor& x) = 0;
  // need_input_grad is false for the first layer of a network.
  virtual Tensor backward(const Tensor& grad_out, bool need_input_grad) = 0;
  virtual std::vector<Param*> params() { return {}; }
  virtual void clear_caches() {}
  // Called after each optimizer step.
  virtual void after_update() {}
};

// Shared state of the quantized linear layers.
class MacLayer : public Layer {
 public:
  MacLayer(QuantSettings settings, double gamma);

  const QuantSettings& settings() const { return settings_; }
  QuantSettings& settings() { return settings_; }
  Param& weight() { return weight_; }
  const Shape& weight_shape() const { return weight_.value.shape; }
  Param& bias() { return bias_; }
  double gamma() const { return gamma_.value.data[0]; }
  void set_gamma(double g);

  const std::optional<QuantBlock>& wq_cache() const { return wq_; }
  const std::optional<QuantBlock>& aq_cache() const { return aq_; }
  const std::vector<bool>& clip_mask() const { return clip_mask_; }
  bool has_caches() const { return has_forward_; }

  SentinelCounts take_sentinel_counts();

  std::vector<Param*> params() override;
  void clear_caches() override;
  void after_update() override;

 protected:
  // Clips and (when quantizing) quantizes the input activations and the
  // bias-corrected weights. Returns the clipped activations.
  std::vector<double> prepare(const Tensor& x, const Shape& weight_matrix);
  QuantBlock quantize_grad(const std::vector<double>& g, const Shape& shape);
  // Applies the clip mask and accumulates the gamma gradient.
  void finish_input_grad(std::vector<double>& dx);

  QuantSettings settings_;
  Param weight_;
  Param bias_;
  Param gamma_;

  bool has_forward_ = false;
  std::optional<QuantBlock> wq_;
  std::optional<QuantBlock> aq_;
  std::vector<double> w_eff_;  // full-precision path
  std::vector<double> a_eff_;
  std::vector<bool> clip_mask_;
  std::vector<std::int8_t> input_sign_;
  double clip_max_ = 0.0;
  SentinelCounts counts_;
};

class LinearLayer : public MacLayer {
 public:
  LinearLayer(std::size_t in, std::size_t out, QuantSettings settings,
              double gamma = 1.0);

  std::string kind() const override { return "linear"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

 private:
  std::size_t in_, out_;
  std::size_t batch_ = 0;
};

struct ConvGeometry {
  std::size_t in_channels = 1, out_channels = 1;
  std::size_t kernel = 3, stride = 1, padding = 0;
};

// 2-D convolution over NCHW tensors, lowered to a matrix product.
class Conv2dLayer : public MacLayer {
 public:
  Conv2dLayer(ConvGeometry geometry, QuantSettings settings, double gamma = 1.0);

  std::string kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;

  const ConvGeometry& geometry() const { return geo_; }

 private:
  ConvGeometry geo_;
  Shape in_shape_;
  std::size_t out_h_ = 0, out_w_ = 0;
  std::optional<QuantBlock> cols_q_;
  std::vector<double> cols_;
};

class ReluLayer : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  void clear_caches() override { active_.clear(); }

 private:
  std::vector<bool> active_;
};

class FlattenLayer : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;

 private:
  Shape in_shape_;
};

// Plain row-major dense product used by the full-precision path and tests.
struct DenseView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool transposed = false;
};
Matrix dense_matmul(const DenseView& a, const DenseView& b);

}  // namespace mft
