#pragma once

// Scalar power-of-two (PoT) numbers.
//
// A b-bit PoT code is one sign bit plus a (b-1)-bit exponent field. Field
// value 0 is reserved for zero; fields 1..2*emax+1 map to exponents
// -emax..emax with emax = 2^(b-2) - 1. For b = 5 that is 31 distinct reals:
// 0 and +-2^-7 .. +-2^7.

#include <cstdint>
#include <optional>
#include <vector>

namespace mft {

class BitWidth {
 public:
  static constexpr int kMin = 3;
  static constexpr int kMax = 6;

  // Throws ConfigError outside [kMin, kMax].
  constexpr explicit BitWidth(int bits) : bits_(bits) {
    if (bits < kMin || bits > kMax) throw_unsupported(bits);
  }

  constexpr int bits() const { return bits_; }
  constexpr int emax() const { return (1 << (bits_ - 2)) - 1; }
  constexpr int exp_field_bits() const { return bits_ - 1; }
  // Number of raw bit patterns, 2^b.
  constexpr int pattern_count() const { return 1 << bits_; }

  friend constexpr bool operator==(BitWidth, BitWidth) = default;

 private:
  [[noreturn]] static void throw_unsupported(int bits);

  int bits_;
};

struct PotCode {
  std::uint8_t sign = 0;       // 1 = negative
  std::uint8_t exp_field = 0;  // 0 = zero sentinel

  constexpr bool is_zero() const { return exp_field == 0; }
  friend constexpr bool operator==(PotCode, PotCode) = default;
};

// Builds a non-zero code for sign * 2^exponent. Throws InputError when the
// exponent is outside [-emax, emax].
PotCode make_code(bool negative, int exponent, BitWidth b);

// Signed exponent carried by a non-zero code.
constexpr int code_exponent(PotCode c, BitWidth b) {
  return static_cast<int>(c.exp_field) - b.emax() - 1;
}

// Raw b-bit pattern: sign in the top bit, exponent field below it.
std::uint8_t to_pattern(PotCode c, BitWidth b);

// Inverse of to_pattern. Patterns with an exponent field above 2*emax+1 are
// invalid (std::nullopt); a zero field with the sign bit set is
// canonicalised to +0.
std::optional<PotCode> from_pattern(std::uint8_t pattern, BitWidth b);

// Binary exponent and rounding bit of a normal double: |f| = m * 2^exponent
// with m in [1, 2), and m_at_least_sqrt2 set when Round(log2 m) = 1.
struct FloatParts {
  int exponent = 0;
  bool m_at_least_sqrt2 = false;
  bool negative = false;
};

// std::nullopt for zero and subnormal inputs. Throws InputError for
// non-finite f.
std::optional<FloatParts> decompose(double f);

// Round(log2|f|) with ties toward +inf, computed from the binary exponent and
// a comparison of the mantissa against sqrt(2). std::nullopt for zero and
// subnormal inputs. f must be finite.
std::optional<int> round_log2(double f);

// All representable reals for the width, ascending.
std::vector<double> pot_values(BitWidth b);

// Throws InputError for non-finite f.
PotCode quantize_scalar(double f, BitWidth b);

double dequantize_scalar(PotCode c, BitWidth b);

struct PotProduct {
  int exp_sum = 0;
  std::uint8_t sign = 0;
  bool is_zero = true;
};

// Product of two codes as one exponent addition and one sign XOR. Widths may
// differ.
PotProduct pot_mul(PotCode a, BitWidth wa, PotCode b, BitWidth wb);

// x * code by shifting: left for positive exponents, arithmetic right for
// negative ones, then the code's sign is applied. Throws OverflowError if the
// result does not fit in 64 bits.
std::int64_t shift_mul(PotCode code, BitWidth b, std::int64_t x);

}  // namespace mft
