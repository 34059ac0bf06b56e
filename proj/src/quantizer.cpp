#include "mft/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "mft/binary_io.hpp"
#include "mft/census.hpp"
#include "mft/errors.hpp"

namespace mft {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::size_t QuantBlock::zero_count() const {
  return static_cast<std::size_t>(std::count(exps.begin(), exps.end(), kZeroExp));
}

void QuantBlock::validate() const {
  if (exps.size() != signs.size() || exps.size() != shape_size(shape)) {
    throw InputError("QuantBlock: exponent/sign/shape sizes disagree");
  }
  const int emax = bits.emax();
  for (std::size_t i = 0; i < exps.size(); ++i) {
    if (exps[i] == kZeroExp) {
      if (signs[i] != 0) throw InputError("QuantBlock: signed zero sentinel");
      continue;
    }
    if (exps[i] < -emax || exps[i] > emax || signs[i] > 1) {
      throw InputError("QuantBlock: element " + std::to_string(i) +
                       " outside the code range");
    }
    if (null_scale()) throw InputError("QuantBlock: non-zero element in a null-scale block");
  }
}

QuantBlock zero_block(const Shape& shape, BitWidth bits) {
  const std::size_t n = shape_size(shape);
  return QuantBlock{std::vector<std::int8_t>(n, QuantBlock::kZeroExp),
                    std::vector<std::uint8_t>(n, 0), QuantBlock::kNullScale,
                    bits, shape};
}

namespace {

double max_abs(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw InputError("non-finite value in tensor");
    m = std::max(m, std::fabs(v));
  }
  return m;
}

}  // namespace

double compute_alpha(std::span<const double> values, BitWidth bits) {
  if (values.empty()) throw InputError("compute_alpha: empty tensor");
  return std::ldexp(max_abs(values), -bits.emax());
}

std::optional<int> compute_beta(double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw InputError("compute_beta: alpha must be finite and >= 0");
  }
  if (alpha == 0.0) return std::nullopt;
  if (auto e = round_log2(alpha)) return e;
  // Subnormal alpha: normalise first; the tie rule is unchanged.
  return round_log2(std::ldexp(alpha, 64)).value() - 64;
}

QuantBlock als_potq(std::span<const double> values, const Shape& shape,
                    BitWidth bits, QuantizeOptions options, QuantStats* stats) {
  if (values.empty()) throw InputError("als_potq: empty tensor");
  if (values.size() != shape_size(shape)) {
    throw InputError("als_potq: value count does not match shape");
  }
  const double top = max_abs(values);
  QuantBlock q = zero_block(shape, bits);
  const auto top_exp = round_log2(top);
  if (!top_exp) return q;

  const int emax = bits.emax();
  const int beta = options.layer_scaling ? *top_exp - emax : 0;
  q.beta = static_cast<std::int16_t>(beta);

  QuantStats local;
  OpCounts ops;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto parts = decompose(values[i]);
    if (!parts) {
      if (values[i] != 0.0) ++local.zeroed;
      continue;
    }
    // Exponent-field addition by -beta, then the rounding carry.
    const int scaled = parts->exponent - beta;
    const int e = scaled + (parts->m_at_least_sqrt2 ? 1 : 0);
    ++ops.scalings;
    ++ops.roundings;
    if (e < -emax) {
      ++local.zeroed;
      continue;
    }
    if (e > emax) ++local.clamped;
    q.exps[i] = static_cast<std::int8_t>(std::min(e, emax));
    q.signs[i] = parts->negative ? 1 : 0;
  }
  record_ops(ops);
  if (stats) *stats = local;
  return q;
}

double dequantize_element(const QuantBlock& q, std::size_t i) {
  if (q.exps[i] == QuantBlock::kZeroExp) return 0.0;
  const double mag = std::ldexp(1.0, q.exps[i] + q.beta);
  return q.signs[i] ? -mag : mag;
}

std::vector<double> dequantize_block(const QuantBlock& q) {
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = dequantize_element(q, i);
  return out;
}

std::vector<double> weight_bias_correction(std::span<const double> weights) {
  if (weights.empty()) throw InputError("weight_bias_correction: empty tensor");
  // Neumaier summation.
  double sum = 0.0;
  double comp = 0.0;
  for (double w : weights) {
    const double t = sum + w;
    comp += std::fabs(sum) >= std::fabs(w) ? (sum - t) + w : (w - t) + sum;
    sum = t;
  }
  const double mean = (sum + comp) / static_cast<double>(weights.size());
  std::vector<double> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] - mean;
  return out;
}

ClipParam::ClipParam(double gamma) : gamma_(gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("clipping ratio gamma must lie in (0, 1], got " +
                      std::to_string(gamma));
  }
}

ClipResult ratio_clip(std::span<const double> values, ClipParam gamma) {
  if (values.empty()) throw InputError("ratio_clip: empty tensor");
  ClipResult r;
  r.threshold = max_abs(values) * gamma.gamma();
  r.values.assign(values.begin(), values.end());
  r.mask.assign(values.size(), false);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > r.threshold) {
      r.values[i] = r.threshold;
    } else if (values[i] < -r.threshold) {
      r.values[i] = -r.threshold;
    } else {
      continue;
    }
    r.mask[i] = true;
    ++r.clipped;
  }
  return r;
}

void write_block(std::ostream& out, const QuantBlock& q) {
  io::put<std::uint8_t>(out, static_cast<std::uint8_t>(q.bits.bits()));
  io::put<std::int16_t>(out, q.beta);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(q.shape.size()));
  for (auto d : q.shape) io::put<std::uint64_t>(out, d);
  for (auto e : q.exps) io::put<std::int8_t>(out, e);
  std::uint8_t byte = 0;
  for (std::size_t i = 0; i < q.signs.size(); ++i) {
    byte |= static_cast<std::uint8_t>((q.signs[i] & 1) << (i % 8));
    if (i % 8 == 7) {
      io::put<std::uint8_t>(out, byte);
      byte = 0;
    }
  }
  if (q.signs.size() % 8) io::put<std::uint8_t>(out, byte);
}

QuantBlock read_block(std::istream& in) {
  const int bits = io::get<std::uint8_t>(in);
  QuantBlock q;
  try {
    q.bits = BitWidth(bits);
  } catch (const ConfigError& e) {
    throw InputError(std::string("QuantBlock stream: ") + e.what());
  }
  q.beta = io::get<std::int16_t>(in);
  const auto rank = io::get<std::uint32_t>(in);
  if (rank > 8) throw InputError("QuantBlock stream: rank too large");
  q.shape.resize(rank);
  for (auto& d : q.shape) d = io::get<std::uint64_t>(in);
  const std::size_t n = shape_size(q.shape);
  if (n > (std::size_t{1} << 32)) throw InputError("QuantBlock stream: block too large");
  q.exps.resize(n);
  for (auto& e : q.exps) e = io::get<std::int8_t>(in);
  q.signs.assign(n, 0);
  for (std::size_t i = 0; i < n; i += 8) {
    const auto byte = io::get<std::uint8_t>(in);
    for (std::size_t j = 0; j < 8 && i + j < n; ++j) q.signs[i + j] = (byte >> j) & 1;
  }
  q.validate();
  return q;
}

}  // namespace mft
