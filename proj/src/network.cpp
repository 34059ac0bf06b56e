#include "mft/network.hpp"

#include <algorithm>
#include <cmath>

#include "mft/errors.hpp"

namespace mft {

NetworkSpec NetworkSpec::mlp(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
  NetworkSpec s;
  s.input = {sizes.front()};
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    if (i) {
      LayerSpec relu;
      relu.kind = "relu";
      s.layers.push_back(relu);
    }
    LayerSpec lin;
    lin.kind = "linear";
    lin.in = sizes[i];
    lin.out = sizes[i + 1];
    s.layers.push_back(lin);
  }
  return s;
}

// --- losses -------------------------------------------------------------------

LossResult softmax_xent(const Tensor& logits, std::span<const int> labels) {
  if (logits.shape.size() != 2 || logits.shape[0] != labels.size()) {
    throw InputError("softmax_xent: logits " + shape_string(logits.shape) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  LossResult r;
  r.grad = Tensor(logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data.data() + i * k;
    double* g = r.grad.data.data() + i * k;
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
    const double zmax = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
    const double lse = zmax + std::log(sum);
    r.loss += lse - z[y];
    for (std::size_t j = 0; j < k; ++j) {
      g[j] = (std::exp(z[j] - lse) - (j == static_cast<std::size_t>(y) ? 1.0 : 0.0)) /
             static_cast<double>(n);
    }
    if (static_cast<std::size_t>(std::max_element(z, z + k) - z) == static_cast<std::size_t>(y)) {
      ++r.correct;
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

LossResult mse_loss(const Tensor& out, std::span<const int> labels, const Tensor* targets) {
  if (out.shape.size() != 2) throw InputError("mse_loss: expected a matrix");
  const std::size_t n = out.shape[0], k = out.shape[1];
  if (targets ? targets->shape != out.shape : labels.size() != n) {
    throw InputError("mse_loss: target shape mismatch");
  }
  LossResult r;
  r.grad = Tensor(out.shape);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double t = targets ? targets->data[i * k + j]
                               : (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0);
      const double d = out.data[i * k + j] - t;
      r.loss += 0.5 * d * d;
      r.grad.data[i * k + j] = d / static_cast<double>(n);
    }
    if (!labels.empty()) {
      const double* z = out.data.data() + i * k;
      if (static_cast<std::size_t>(std::max_element(z, z + k) - z) ==
          static_cast<std::size_t>(labels[i])) {
        ++r.correct;
      }
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

// --- Network ------------------------------------------------------------------

Network::Network(NetworkSpec spec, const NetworkOptions& options)
    : spec_(std::move(spec)), options_(options) {
  if (spec_.input.empty()) throw ConfigError("network input shape is empty");
  if (spec_.layers.empty()) throw ConfigError("network has no layers");
  for (int b : {options_.bits_w, options_.bits_a, options_.bits_g, options_.last_layer_bits_g}) {
    BitWidth{b};
  }

  std::size_t mac_count = 0;
  for (const auto& l : spec_.layers) mac_count += (l.kind == "linear" || l.kind == "conv2d");
  if (mac_count == 0) throw ConfigError("network has no linear or conv2d layer");

  Shape shape{1};
  shape.insert(shape.end(), spec_.input.begin(), spec_.input.end());
  std::size_t mac_seen = 0;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& ls = spec_.layers[i];
    std::unique_ptr<Layer> layer;
    if (ls.kind == "linear" || ls.kind == "conv2d") {
      const bool last = ++mac_seen == mac_count;
      QuantSettings q;
      q.quantize = options_.quantize;
      q.layer_scaling = options_.layer_scaling;
      q.bias_correction = options_.bias_correction;
      q.bits_w = BitWidth(ls.bits_w.value_or(options_.bits_w));
      q.bits_a = BitWidth(ls.bits_a.value_or(options_.bits_a));
      q.bits_g = BitWidth(ls.bits_g.value_or(last ? options_.last_layer_bits_g : options_.bits_g));
      q.accumulator = options_.accumulator;
      q.mask_grad_by_clip = options_.mask_grad_by_clip;
      q.learn_gamma = options_.learn_gamma && options_.clipping;
      const double gamma = options_.clipping ? ls.gamma.value_or(options_.gamma) : 1.0;
      if (ls.kind == "linear") {
        layer = std::make_unique<LinearLayer>(ls.in, ls.out, q, gamma);
      } else {
        layer = std::make_unique<Conv2dLayer>(ls.conv, q, gamma);
      }
    } else if (ls.kind == "relu") {
      layer = std::make_unique<ReluLayer>();
    } else if (ls.kind == "flatten") {
      layer = std::make_unique<FlattenLayer>();
    } else {
      throw ConfigError("unknown layer kind '" + ls.kind + "'");
    }
    try {
      shape = layer->output_shape(shape);
    } catch (const InputError& e) {
      throw ConfigError("layer " + std::to_string(i) + " (" + ls.kind + "): " + e.what());
    }
    layers_.push_back(std::move(layer));
  }
  if (shape.size() != 2) {
    throw ConfigError("network output must be [N x classes], got " + shape_string(shape));
  }
  classes_ = shape[1];
}

Tensor Network::forward(const Tensor& x) {
  if (!x.all_finite()) throw TrainingFault("non-finite network input", -1, 0);
  Tensor a = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    a = layers_[i]->forward(a);
    if (!a.all_finite()) {
      throw TrainingFault("non-finite activations after layer " + std::to_string(i), -1,
                          static_cast<int>(i));
    }
  }
  return a;
}

void Network::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (!g.all_finite()) {
      throw TrainingFault("non-finite gradient entering layer " + std::to_string(i), -1,
                          static_cast<int>(i));
    }
    g = layers_[i]->backward(g, i > 0);
  }
}

LossResult Network::loss(const Tensor& out, std::span<const int> labels,
                         const Tensor* targets) const {
  return spec_.loss == LossKind::softmax_xent ? softmax_xent(out, labels)
                                              : mse_loss(out, labels, targets);
}

double draw_init(InitKind kind, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  for (;;) {
    const double v = normal(rng);
    if (kind == InitKind::untruncated_normal || std::fabs(v) <= 2.0 * sigma) return v;
  }
}

void Network::init_weights(InitKind kind, std::mt19937_64& rng) {
  for (MacLayer* m : mac_layers()) {
    Param& w = m->weight();
    const std::size_t fan_in = w.value.size() / w.value.shape[0];
    const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.value.data) v = draw_init(kind, sigma, rng);
    std::fill(m->bias().value.data.begin(), m->bias().value.data.end(), 0.0);
    for (Param* p : m->params()) std::fill(p->momentum.begin(), p->momentum.end(), 0.0);
  }
}

Network::MacCount Network::macs_per_example() const {
  MacCount c;
  Shape shape{1};
  shape.insert(shape.end(), spec_.input.begin(), spec_.input.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape out = layers_[i]->output_shape(shape);
    if (const auto* m = dynamic_cast<const MacLayer*>(layers_[i].get())) {
      const auto& w = m->weight_shape();
      const std::uint64_t per_output = shape_size(w) / w[0];
      const std::uint64_t macs = shape_size(out) * per_output;
      c.fw += macs;
      c.bw += macs;
      if (i > 0 || m->settings().learn_gamma) c.bw += macs;
    }
    shape = out;
  }
  return c;
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<MacLayer*> Network::mac_layers() {
  std::vector<MacLayer*> out;
  for (auto& l : layers_) {
    if (auto* m = dynamic_cast<MacLayer*>(l.get())) out.push_back(m);
  }
  return out;
}

void Network::clear_caches() {
  for (auto& l : layers_) l->clear_caches();
}

void Network::after_update() {
  for (auto& l : layers_) l->after_update();
}

SentinelCounts Network::take_sentinel_counts() {
  SentinelCounts c;
  for (MacLayer* m : mac_layers()) c += m->take_sentinel_counts();
  return c;
}

}  // namespace mft
