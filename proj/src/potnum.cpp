#include "mft/potnum.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "mft/errors.hpp"

namespace mft {

namespace {

constexpr std::uint64_t kMantissaMask = (std::uint64_t{1} << 52) - 1;
constexpr int kExponentBias = 1023;
// Mantissa field of the smallest double >= sqrt(2) (0x3FF6A09E667F3BCD). No
// double lies between it and sqrt(2), so `mantissa >= kSqrt2Mantissa` is
// exactly `m >= sqrt(2)` for m in [1, 2).
constexpr std::uint64_t kSqrt2Mantissa = 0x6A09E667F3BCDull;

}  // namespace

void BitWidth::throw_unsupported(int bits) {
  throw ConfigError("unsupported PoT bit-width " + std::to_string(bits) +
                    " (expected 3..6)");
}

PotCode make_code(bool negative, int exponent, BitWidth b) {
  if (exponent < -b.emax() || exponent > b.emax()) {
    throw InputError("exponent " + std::to_string(exponent) +
                     " outside the " + std::to_string(b.bits()) +
                     "-bit PoT range");
  }
  return PotCode{static_cast<std::uint8_t>(negative ? 1 : 0),
                 static_cast<std::uint8_t>(exponent + b.emax() + 1)};
}

std::uint8_t to_pattern(PotCode c, BitWidth b) {
  return static_cast<std::uint8_t>((c.sign << b.exp_field_bits()) |
                                   c.exp_field);
}

std::optional<PotCode> from_pattern(std::uint8_t pattern, BitWidth b) {
  if (pattern >= b.pattern_count()) return std::nullopt;
  const int field_mask = (1 << b.exp_field_bits()) - 1;
  PotCode c{static_cast<std::uint8_t>(pattern >> b.exp_field_bits()),
            static_cast<std::uint8_t>(pattern & field_mask)};
  if (c.exp_field > 2 * b.emax() + 1) return std::nullopt;
  if (c.is_zero()) c.sign = 0;
  return c;
}

std::optional<FloatParts> decompose(double f) {
  const auto bits = std::bit_cast<std::uint64_t>(f);
  const int biased = static_cast<int>((bits >> 52) & 0x7FF);
  if (biased == 0x7FF) throw InputError("non-finite value in PoT rounding");
  if (biased == 0) return std::nullopt;
  return FloatParts{biased - kExponentBias,
                    (bits & kMantissaMask) >= kSqrt2Mantissa,
                    (bits >> 63) != 0};
}

std::optional<int> round_log2(double f) {
  const auto parts = decompose(f);
  if (!parts) return std::nullopt;
  return parts->exponent + (parts->m_at_least_sqrt2 ? 1 : 0);
}

std::vector<double> pot_values(BitWidth b) {
  std::vector<double> values;
  values.reserve(4 * b.emax() + 3);
  for (int e = b.emax(); e >= -b.emax(); --e) values.push_back(-std::ldexp(1.0, e));
  values.push_back(0.0);
  for (int e = -b.emax(); e <= b.emax(); ++e) values.push_back(std::ldexp(1.0, e));
  return values;
}

PotCode quantize_scalar(double f, BitWidth b) {
  if (!std::isfinite(f)) throw InputError("cannot quantize a non-finite value");
  const auto e = round_log2(f);
  if (!e || *e < -b.emax()) return PotCode{};
  return make_code(std::signbit(f), *e > b.emax() ? b.emax() : *e, b);
}

double dequantize_scalar(PotCode c, BitWidth b) {
  if (c.is_zero()) return 0.0;
  const double mag = std::ldexp(1.0, code_exponent(c, b));
  return c.sign ? -mag : mag;
}

PotProduct pot_mul(PotCode a, BitWidth wa, PotCode b, BitWidth wb) {
  if (a.is_zero() || b.is_zero()) return PotProduct{};
  return PotProduct{code_exponent(a, wa) + code_exponent(b, wb),
                    static_cast<std::uint8_t>(a.sign ^ b.sign), false};
}

std::int64_t shift_mul(PotCode code, BitWidth b, std::int64_t x) {
  if (code.is_zero()) return 0;
  const int k = code_exponent(code, b);
  std::int64_t r = x;
  if (k > 0) {
    if (k >= 63 || ((x << k) >> k) != x) {
      throw OverflowError("shift_mul: " + std::to_string(x) + " << " +
                          std::to_string(k) + " overflows 64 bits");
    }
    r = x << k;
  } else if (k < 0) {
    r = x >> -k;
  }
  if (code.sign) {
    if (r == INT64_MIN) throw OverflowError("shift_mul: negation overflows");
    r = -r;
  }
  return r;
}

}  // namespace mft
