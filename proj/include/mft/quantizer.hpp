#pragma once

// Tensor-block PoT quantization with a layer-wise power-of-two scale.
//
// A block stores one exponent and one sign flag per element plus a single
// integer scale exponent beta: element i represents s_i * 2^(e_i + beta).
// Scaling by 2^-beta happens on the binary exponent of each input, so the
// quantization path contains no multiplications.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mft/potnum.hpp"

namespace mft {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

struct QuantBlock {
  static constexpr std::int8_t kZeroExp = INT8_MIN;
  // beta of a block whose input was all zeros.
  static constexpr std::int16_t kNullScale = INT16_MIN;

  std::vector<std::int8_t> exps;
  std::vector<std::uint8_t> signs;  // 1 = negative; 0 for sentinels
  std::int16_t beta = kNullScale;
  BitWidth bits{5};
  Shape shape;

  std::size_t size() const { return exps.size(); }
  bool is_zero(std::size_t i) const { return exps[i] == kZeroExp; }
  bool null_scale() const { return beta == kNullScale; }
  std::size_t zero_count() const;

  // Throws InputError if any structural invariant is broken.
  void validate() const;

  friend bool operator==(const QuantBlock&, const QuantBlock&) = default;
};

// Creates an all-sentinel block.
QuantBlock zero_block(const Shape& shape, BitWidth bits);

// max|F| / 2^emax. Throws InputError on an empty tensor.
double compute_alpha(std::span<const double> values, BitWidth bits);

// Round(log2 alpha) with the potnum tie rule; std::nullopt for alpha == 0.
std::optional<int> compute_beta(double alpha);

struct QuantizeOptions {
  // Off reproduces plain PoT quantization with beta fixed at 0.
  bool layer_scaling = true;
};

struct QuantStats {
  std::size_t zeroed = 0;   // non-zero inputs that fell below the window
  std::size_t clamped = 0;  // inputs clamped to the top code
};

// ALS PoT quantization of a tensor. Throws InputError on non-finite or empty
// input, or when values.size() != shape_size(shape).
QuantBlock als_potq(std::span<const double> values, const Shape& shape,
                    BitWidth bits, QuantizeOptions options = {},
                    QuantStats* stats = nullptr);

std::vector<double> dequantize_block(const QuantBlock& q);
double dequantize_element(const QuantBlock& q, std::size_t i);

// W - mean(W). The mean uses compensated summation and one division.
std::vector<double> weight_bias_correction(std::span<const double> weights);

// A clipping ratio in (0, 1].
class ClipParam {
 public:
  explicit ClipParam(double gamma = 1.0);
  double gamma() const { return gamma_; }

 private:
  double gamma_;
};

struct ClipResult {
  std::vector<double> values;
  std::vector<bool> mask;  // true where the input was clipped
  double threshold = 0.0;  // max|A| * gamma
  std::size_t clipped = 0;
};

// Clamps every element to [-max|A|*gamma, max|A|*gamma].
ClipResult ratio_clip(std::span<const double> values, ClipParam gamma);

// Little-endian block serialisation: u8 bit-width, i16 beta, u32 rank,
// u64 dims, i8 exponents, sign bits packed LSB-first.
void write_block(std::ostream& out, const QuantBlock& q);
QuantBlock read_block(std::istream& in);

}  // namespace mft
