#include "mft/layers.hpp"

#include <algorithm>
#include <cmath>

#include "mft/errors.hpp"

namespace mft {

SentinelCounts& SentinelCounts::operator+=(const SentinelCounts& o) {
  w_zero += o.w_zero;
  w_total += o.w_total;
  a_zero += o.a_zero;
  a_total += o.a_total;
  g_zero += o.g_zero;
  g_total += o.g_total;
  return *this;
}

namespace {

// Copies `count` vectors of length `len` into contiguous storage.
std::vector<double> gather(const double* data, std::size_t count, std::size_t len,
                           std::size_t outer_stride, std::size_t inner_stride) {
  std::vector<double> out(count * len);
  for (std::size_t v = 0; v < count; ++v) {
    for (std::size_t j = 0; j < len; ++j) {
      out[v * len + j] = data[v * outer_stride + j * inner_stride];
    }
  }
  return out;
}

}  // namespace

Matrix dense_matmul(const DenseView& a, const DenseView& b) {
  const std::size_t m = a.transposed ? a.cols : a.rows;
  const std::size_t k = a.transposed ? a.rows : a.cols;
  const std::size_t n = b.transposed ? b.rows : b.cols;
  if ((b.transposed ? b.cols : b.rows) != k) {
    throw InputError("dense_matmul: inner dimensions differ");
  }
  const auto ra = a.transposed ? gather(a.data, m, k, 1, a.cols) : gather(a.data, m, k, a.cols, 1);
  const auto cb = b.transposed ? gather(b.data, n, k, b.cols, 1) : gather(b.data, n, k, 1, b.cols);
  Matrix out(m, n);
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = ra.data() + r * k;
    for (std::size_t c = 0; c < n; ++c) {
      const double* y = cb.data() + c * k;
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += x[j] * y[j];
      out(r, c) = s;
    }
  }
  return out;
}

// --- MacLayer ---------------------------------------------------------------

MacLayer::MacLayer(QuantSettings settings, double gamma)
    : settings_(settings), gamma_("gamma", {1}) {
  set_gamma(gamma);
}

void MacLayer::set_gamma(double g) { gamma_.value.data[0] = ClipParam(g).gamma(); }

SentinelCounts MacLayer::take_sentinel_counts() {
  SentinelCounts c = counts_;
  counts_ = {};
  return c;
}

std::vector<Param*> MacLayer::params() {
  std::vector<Param*> p{&weight_, &bias_};
  if (settings_.learn_gamma) p.push_back(&gamma_);
  return p;
}

void MacLayer::clear_caches() {
  has_forward_ = false;
  wq_.reset();
  aq_.reset();
  w_eff_.clear();
  a_eff_.clear();
  clip_mask_.clear();
  input_sign_.clear();
}

void MacLayer::after_update() {
  if (settings_.learn_gamma) {
    gamma_.value.data[0] = std::clamp(gamma_.value.data[0], 0.01, 1.0);
  }
}

std::vector<double> MacLayer::prepare(const Tensor& x, const Shape& weight_matrix) {
  std::vector<double> w_eff = settings_.bias_correction
                                  ? weight_bias_correction(weight_.value.data)
                                  : weight_.value.data;
  ClipResult clip = ratio_clip(x.data, ClipParam(gamma()));
  clip_mask_ = std::move(clip.mask);
  clip_max_ = 0.0;
  for (double v : x.data) clip_max_ = std::max(clip_max_, std::fabs(v));
  input_sign_.clear();
  if (settings_.learn_gamma) {
    input_sign_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) input_sign_[i] = x.data[i] < 0 ? -1 : 1;
  }

  if (settings_.quantize) {
    const QuantizeOptions opt{settings_.layer_scaling};
    wq_ = als_potq(w_eff, weight_matrix, settings_.bits_w, opt);
    aq_ = als_potq(clip.values, x.shape, settings_.bits_a, opt);
    counts_.w_zero += wq_->zero_count();
    counts_.w_total += wq_->size();
    counts_.a_zero += aq_->zero_count();
    counts_.a_total += aq_->size();
    w_eff_.clear();
    a_eff_.clear();
  } else {
    wq_.reset();
    aq_.reset();
    w_eff_ = std::move(w_eff);
    a_eff_ = clip.values;
  }
  has_forward_ = true;
  return std::move(clip.values);
}

QuantBlock MacLayer::quantize_grad(const std::vector<double>& g, const Shape& shape) {
  QuantBlock gq = als_potq(g, shape, settings_.bits_g, {settings_.layer_scaling});
  counts_.g_zero += gq.zero_count();
  counts_.g_total += gq.size();
  return gq;
}

void MacLayer::finish_input_grad(std::vector<double>& dx) {
  if (settings_.learn_gamma) {
    // d clip(a)/d gamma = sign(a) * max|A| on clipped elements.
    double s = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (clip_mask_[i]) s += input_sign_[i] < 0 ? -dx[i] : dx[i];
    }
    gamma_.grad[0] = s * clip_max_;
  }
  if (settings_.mask_grad_by_clip) {
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (clip_mask_[i]) dx[i] = 0.0;
    }
  }
}

// --- LinearLayer --------------------------------------------------------------

LinearLayer::LinearLayer(std::size_t in, std::size_t out, QuantSettings settings,
                         double gamma)
    : MacLayer(settings, gamma), in_(in), out_(out) {
  if (in == 0 || out == 0) throw ConfigError("linear layer needs non-zero sizes");
  weight_ = Param("weight", {out, in});
  bias_ = Param("bias", {out});
}

Shape LinearLayer::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != in_) {
    throw InputError("linear layer expects [N x " + std::to_string(in_) + "], got " +
                     shape_string(input));
  }
  return {input[0], out_};
}

Tensor LinearLayer::forward(const Tensor& x) {
  const Shape out_shape = output_shape(x.shape);
  batch_ = x.shape[0];
  prepare(x, {out_, in_});
  Matrix y = settings_.quantize
                 ? mf_matmul(as_matrix(*aq_, batch_, in_), as_matrix(*wq_, out_, in_, true),
                             settings_.accumulator)
                 : dense_matmul({a_eff_.data(), batch_, in_, false},
                                {w_eff_.data(), out_, in_, true});
  for (std::size_t r = 0; r < batch_; ++r) {
    for (std::size_t c = 0; c < out_; ++c) y(r, c) += bias_.value.data[c];
  }
  return Tensor(out_shape, std::move(y.data));
}

Tensor LinearLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  if (!has_forward_) throw ProtocolError("linear backward without a cached forward");
  if (grad_out.shape != Shape{batch_, out_}) {
    throw InputError("linear backward: gradient shape " + shape_string(grad_out.shape));
  }
  const bool want_dx = need_input_grad || settings_.learn_gamma;
  Matrix dw, dx;
  if (settings_.quantize) {
    const QuantBlock gq = quantize_grad(grad_out.data, grad_out.shape);
    dw = mf_matmul(as_matrix(gq, batch_, out_, true), as_matrix(*aq_, batch_, in_),
                   settings_.accumulator);
    if (want_dx) {
      dx = mf_matmul(as_matrix(gq, batch_, out_), as_matrix(*wq_, out_, in_),
                     settings_.accumulator);
    }
  } else {
    dw = dense_matmul({grad_out.data.data(), batch_, out_, true},
                      {a_eff_.data(), batch_, in_, false});
    if (want_dx) {
      dx = dense_matmul({grad_out.data.data(), batch_, out_, false},
                        {w_eff_.data(), out_, in_, false});
    }
  }
  weight_.grad = std::move(dw.data);
  std::fill(bias_.grad.begin(), bias_.grad.end(), 0.0);
  for (std::size_t r = 0; r < batch_; ++r) {
    for (std::size_t c = 0; c < out_; ++c) bias_.grad[c] += grad_out.data[r * out_ + c];
  }
  if (!want_dx) return Tensor();
  finish_input_grad(dx.data);
  if (!need_input_grad) return Tensor();
  return Tensor({batch_, in_}, std::move(dx.data));
}

// --- Conv2dLayer --------------------------------------------------------------

namespace {

struct ConvIndex {
  std::size_t batch, channels, height, width;
  std::size_t out_h, out_w, kernel, stride, padding;

  std::size_t patches() const { return batch * out_h * out_w; }
  std::size_t patch_len() const { return channels * kernel * kernel; }

  // Calls f(patch_row, patch_col, source_index) for every in-bounds tap;
  // padded taps are reported with source_index == npos.
  template <class F>
  void for_each_tap(F&& f) const {
    std::size_t row = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t oh = 0; oh < out_h; ++oh) {
        for (std::size_t ow = 0; ow < out_w; ++ow, ++row) {
          std::size_t col = 0;
          for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t kh = 0; kh < kernel; ++kh) {
              for (std::size_t kw = 0; kw < kernel; ++kw, ++col) {
                const auto ih = static_cast<long>(oh * stride + kh) - static_cast<long>(padding);
                const auto iw = static_cast<long>(ow * stride + kw) - static_cast<long>(padding);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(height) ||
                    iw >= static_cast<long>(width)) {
                  f(row, col, npos);
                  continue;
                }
                f(row, col,
                  ((b * channels + c) * height + static_cast<std::size_t>(ih)) * width +
                      static_cast<std::size_t>(iw));
              }
            }
          }
        }
      }
    }
  }
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

}  // namespace

Conv2dLayer::Conv2dLayer(ConvGeometry geometry, QuantSettings settings, double gamma)
    : MacLayer(settings, gamma), geo_(geometry) {
  if (!geo_.in_channels || !geo_.out_channels || !geo_.kernel || !geo_.stride) {
    throw ConfigError("conv2d layer needs non-zero channels, kernel and stride");
  }
  weight_ = Param("weight", {geo_.out_channels, geo_.in_channels, geo_.kernel, geo_.kernel});
  bias_ = Param("bias", {geo_.out_channels});
}

Shape Conv2dLayer::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] != geo_.in_channels) {
    throw InputError("conv2d expects [N x " + std::to_string(geo_.in_channels) +
                     " x H x W], got " + shape_string(input));
  }
  const std::size_t h = input[2] + 2 * geo_.padding;
  const std::size_t w = input[3] + 2 * geo_.padding;
  if (h < geo_.kernel || w < geo_.kernel) throw InputError("conv2d input smaller than kernel");
  return {input[0], geo_.out_channels, (h - geo_.kernel) / geo_.stride + 1,
          (w - geo_.kernel) / geo_.stride + 1};
}

Tensor Conv2dLayer::forward(const Tensor& x) {
  const Shape out_shape = output_shape(x.shape);
  in_shape_ = x.shape;
  out_h_ = out_shape[2];
  out_w_ = out_shape[3];
  const ConvIndex ix{x.shape[0], x.shape[1], x.shape[2], x.shape[3], out_h_,
                     out_w_,     geo_.kernel, geo_.stride, geo_.padding};
  const std::size_t rows = ix.patches();
  const std::size_t k = ix.patch_len();
  prepare(x, {geo_.out_channels, k});

  Matrix y;
  if (settings_.quantize) {
    QuantBlock cols = zero_block({rows, k}, aq_->bits);
    cols.beta = aq_->beta;
    ix.for_each_tap([&](std::size_t r, std::size_t c, std::size_t src) {
      if (src == ConvIndex::npos) return;
      cols.exps[r * k + c] = aq_->exps[src];
      cols.signs[r * k + c] = aq_->signs[src];
    });
    cols_q_ = std::move(cols);
    y = mf_matmul(as_matrix(*cols_q_, rows, k),
                  as_matrix(*wq_, geo_.out_channels, k, true), settings_.accumulator);
  } else {
    cols_.assign(rows * k, 0.0);
    ix.for_each_tap([&](std::size_t r, std::size_t c, std::size_t src) {
      if (src != ConvIndex::npos) cols_[r * k + c] = a_eff_[src];
    });
    y = dense_matmul({cols_.data(), rows, k, false},
                     {w_eff_.data(), geo_.out_channels, k, true});
  }

  Tensor out(out_shape);
  const std::size_t plane = out_h_ * out_w_;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t b = r / plane, pos = r % plane;
    for (std::size_t oc = 0; oc < geo_.out_channels; ++oc) {
      out.data[(b * geo_.out_channels + oc) * plane + pos] = y(r, oc) + bias_.value.data[oc];
    }
  }
  return out;
}

Tensor Conv2dLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  if (!has_forward_) throw ProtocolError("conv2d backward without a cached forward");
  const Shape expected{in_shape_[0], geo_.out_channels, out_h_, out_w_};
  if (grad_out.shape != expected) {
    throw InputError("conv2d backward: gradient shape " + shape_string(grad_out.shape));
  }
  const ConvIndex ix{in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3], out_h_,
                     out_w_,       geo_.kernel,  geo_.stride,  geo_.padding};
  const std::size_t rows = ix.patches();
  const std::size_t k = ix.patch_len();
  const std::size_t oc_n = geo_.out_channels;
  const std::size_t plane = out_h_ * out_w_;

  // NCHW gradient to a (patches x out_channels) matrix.
  std::vector<double> gm(rows * oc_n);
  std::fill(bias_.grad.begin(), bias_.grad.end(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t b = r / plane, pos = r % plane;
    for (std::size_t oc = 0; oc < oc_n; ++oc) {
      const double g = grad_out.data[(b * oc_n + oc) * plane + pos];
      gm[r * oc_n + oc] = g;
      bias_.grad[oc] += g;
    }
  }

  const bool want_dx = need_input_grad || settings_.learn_gamma;
  Matrix dw, dcols;
  if (settings_.quantize) {
    const QuantBlock gq = quantize_grad(gm, {rows, oc_n});
    dw = mf_matmul(as_matrix(gq, rows, oc_n, true), as_matrix(*cols_q_, rows, k),
                   settings_.accumulator);
    if (want_dx) {
      dcols = mf_matmul(as_matrix(gq, rows, oc_n), as_matrix(*wq_, oc_n, k),
                        settings_.accumulator);
    }
  } else {
    dw = dense_matmul({gm.data(), rows, oc_n, true}, {cols_.data(), rows, k, false});
    if (want_dx) {
      dcols = dense_matmul({gm.data(), rows, oc_n, false}, {w_eff_.data(), oc_n, k, false});
    }
  }
  weight_.grad = std::move(dw.data);
  if (!want_dx) return Tensor();

  std::vector<double> dx(shape_size(in_shape_), 0.0);
  ix.for_each_tap([&](std::size_t r, std::size_t c, std::size_t src) {
    if (src != ConvIndex::npos) dx[src] += dcols(r, c);
  });
  finish_input_grad(dx);
  if (!need_input_grad) return Tensor();
  return Tensor(in_shape_, std::move(dx));
}

// --- ReLU / Flatten ------------------------------------------------------------

Tensor ReluLayer::forward(const Tensor& x) {
  Tensor y(x.shape);
  active_.assign(x.size(), false);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.data[i] > 0.0) {
      y.data[i] = x.data[i];
      active_[i] = true;
    }
  }
  return y;
}

Tensor ReluLayer::backward(const Tensor& grad_out, bool) {
  if (grad_out.size() != active_.size()) throw ProtocolError("relu backward without forward");
  Tensor g(grad_out.shape);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (active_[i]) g.data[i] = grad_out.data[i];
  }
  return g;
}

Shape FlattenLayer::output_shape(const Shape& input) const {
  if (input.empty()) throw InputError("flatten of a rank-0 tensor");
  return {input[0], shape_size(input) / std::max<std::size_t>(input[0], 1)};
}

Tensor FlattenLayer::forward(const Tensor& x) {
  in_shape_ = x.shape;
  return Tensor(output_shape(x.shape), x.data);
}

Tensor FlattenLayer::backward(const Tensor& grad_out, bool) {
  return Tensor(in_shape_, grad_out.data);
}

}  // namespace mft
