#include "mft/mfmac.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <string>

#include "mft/census.hpp"
#include "mft/errors.hpp"

namespace mft {

namespace {

using wide_t = __int128;

// ---------------------------------------------------------------------------
// Counting arithmetic for audits. Every operator bumps a thread-local tally;
// the exponent lane and the accumulator lane are told apart by Lane.

struct Tally {
  std::uint64_t exp_adds = 0;
  std::uint64_t xors = 0;
  std::uint64_t bit_sets = 0;
  std::uint64_t accumulations = 0;
  std::uint64_t multiplies = 0;
};

thread_local Tally t_tally;

enum class Lane { exponent, accumulator };

template <class T, Lane L>
class Counted {
 public:
  constexpr Counted() = default;
  constexpr explicit Counted(T v) : v_(v) {}
  T raw() const { return v_; }

  friend Counted operator+(Counted a, Counted b) {
    bump_add();
    return Counted(a.v_ + b.v_);
  }
  friend Counted operator-(Counted a, Counted b) {
    bump_add();
    return Counted(a.v_ - b.v_);
  }
  friend Counted operator^(Counted a, Counted b) {
    ++t_tally.xors;
    return Counted(a.v_ ^ b.v_);
  }
  friend Counted operator*(Counted a, Counted b) {
    ++t_tally.multiplies;
    return Counted(a.v_ * b.v_);
  }
  template <class U>
  friend Counted operator<<(Counted a, Counted<U, Lane::exponent> s) {
    ++t_tally.bit_sets;
    return Counted(a.v_ << s.raw());
  }
  friend bool operator==(Counted a, Counted b) { return a.v_ == b.v_; }

 private:
  static void bump_add() {
    if constexpr (L == Lane::exponent) {
      ++t_tally.exp_adds;
    } else {
      ++t_tally.accumulations;
    }
  }
  T v_{};
};

template <class T>
T raw_value(T v) {
  return v;
}
template <class T, Lane L>
T raw_value(Counted<T, L> v) {
  return v.raw();
}

// ---------------------------------------------------------------------------
// Accumulators.

template <class Word>
struct WideAccumulator {
  Word z{0};
  std::uint64_t saturations = 0;
  void add(Word t) { z = z + t; }
  void sub(Word t) { z = z - t; }
  wide_t value() const { return static_cast<wide_t>(raw_value(z)); }
};

template <class Word>
struct Strict32Accumulator {
  Word z{0};
  std::uint64_t saturations = 0;
  void add(Word t) {
    z = z + t;
    clamp();
  }
  void sub(Word t) {
    z = z - t;
    clamp();
  }
  void clamp() {
    const auto v = static_cast<wide_t>(raw_value(z));
    if (v > INT32_MAX) {
      z = Word(INT32_MAX);
      ++saturations;
    } else if (v < INT32_MIN) {
      z = Word(INT32_MIN);
      ++saturations;
    }
  }
  wide_t value() const { return static_cast<wide_t>(raw_value(z)); }
};

// Inner loop. Operands are biased exponents e + emax (so pa + pb is the bit
// position of the product) with -1 marking a zero sentinel.
template <class Exp, class Word, class Acc>
std::uint64_t mac_loop(const std::int8_t* pa, const std::uint8_t* sa,
                       const std::int8_t* pb, const std::uint8_t* sb,
                       std::size_t n, Acc& acc) {
  std::uint64_t active = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if ((pa[i] | pb[i]) < 0) continue;
    const Exp pos = Exp(pa[i]) + Exp(pb[i]);
    const Exp flip = Exp(sa[i]) ^ Exp(sb[i]);
    const Word term = Word(1) << pos;
    if (flip == Exp(1)) {
      acc.sub(term);
    } else {
      acc.add(term);
    }
    ++active;
  }
  return active;
}

struct Packed {
  std::vector<std::int8_t> exps;  // biased, -1 for zero
  std::vector<std::uint8_t> signs;
};

// Packs `count` vectors of length `len`; element j of vector v is at stored
// index v * outer_stride + j * inner_stride.
Packed pack(const QuantBlock& q, std::size_t count, std::size_t len,
            std::size_t outer_stride, std::size_t inner_stride) {
  Packed p;
  p.exps.resize(count * len);
  p.signs.resize(count * len);
  const int bias = q.bits.emax();
  for (std::size_t v = 0; v < count; ++v) {
    for (std::size_t j = 0; j < len; ++j) {
      const std::size_t src = v * outer_stride + j * inner_stride;
      const std::size_t dst = v * len + j;
      const auto e = q.exps[src];
      p.exps[dst] = e == QuantBlock::kZeroExp ? std::int8_t{-1}
                                              : static_cast<std::int8_t>(e + bias);
      p.signs[dst] = q.signs[src];
    }
  }
  return p;
}

// Largest bit position a product can occupy.
int max_position(BitWidth a, BitWidth b) { return 2 * (a.emax() + b.emax()); }

bool fits_int64(BitWidth a, BitWidth b, std::size_t len) {
  return max_position(a, b) + std::bit_width(len + 1) <= 62;
}

struct DotRunner {
  AccumulatorConfig cfg;
  bool instrumented = false;
  bool narrow = false;  // int64 accumulation is exact for this shape
  OpCounts ops;

  template <class Acc, class Exp, class Word>
  wide_t run_with(const std::int8_t* pa, const std::uint8_t* sa,
                  const std::int8_t* pb, const std::uint8_t* sb, std::size_t n) {
    Acc acc;
    const auto active = mac_loop<Exp, Word>(pa, sa, pb, sb, n, acc);
    ops.saturations += acc.saturations;
    if (!instrumented) {
      ops.exp_adds += active;
      ops.xors += active;
      ops.accumulations += active;
    }
    return acc.value();
  }

  template <class Exp, class Word>
  wide_t run_typed(const std::int8_t* pa, const std::uint8_t* sa,
                   const std::int8_t* pb, const std::uint8_t* sb, std::size_t n) {
    if (cfg.mode == AccumulatorMode::strict32) {
      return run_with<Strict32Accumulator<Word>, Exp, Word>(pa, sa, pb, sb, n);
    }
    return run_with<WideAccumulator<Word>, Exp, Word>(pa, sa, pb, sb, n);
  }

  wide_t run(const std::int8_t* pa, const std::uint8_t* sa, const std::int8_t* pb,
             const std::uint8_t* sb, std::size_t n) {
    ops.mac_slots += n;
    if (instrumented) {
      return run_typed<Counted<int, Lane::exponent>,
                       Counted<wide_t, Lane::accumulator>>(pa, sa, pb, sb, n);
    }
    if (narrow) return run_typed<int, std::int64_t>(pa, sa, pb, sb, n);
    return run_typed<int, wide_t>(pa, sa, pb, sb, n);
  }

  void finish() {
    if (instrumented) {
      ops.exp_adds += t_tally.exp_adds;
      ops.xors += t_tally.xors;
      ops.accumulations += t_tally.accumulations;
      ops.multiplies += t_tally.multiplies;
      t_tally = Tally{};
    }
    record_ops(ops);
  }
};

double to_real(wide_t z, int shift) {
  if (z == 0) return 0.0;
  return std::ldexp(static_cast<double>(z), shift);
}

}  // namespace

QuantMatrixView as_matrix(const QuantBlock& q, std::size_t rows, std::size_t cols,
                          bool transposed) {
  if (rows * cols != q.size()) {
    throw InputError("matrix view " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " does not cover a block of " +
                     std::to_string(q.size()) + " elements");
  }
  return QuantMatrixView{&q, rows, cols, transposed};
}

double mf_dot(const QuantBlock& qa, const QuantBlock& qb, AccumulatorConfig cfg) {
  if (qa.size() != qb.size()) {
    throw InputError("mf_dot: length mismatch (" + std::to_string(qa.size()) +
                     " vs " + std::to_string(qb.size()) + ")");
  }
  const std::size_t n = qa.size();
  const Packed a = pack(qa, 1, n, 0, 1);
  const Packed b = pack(qb, 1, n, 0, 1);
  DotRunner runner{cfg, instrumented_census(), fits_int64(qa.bits, qb.bits, n), {}};
  const wide_t z = runner.run(a.exps.data(), a.signs.data(), b.exps.data(),
                              b.signs.data(), n);
  ++runner.ops.final_shifts;
  runner.finish();
  if (qa.null_scale() || qb.null_scale()) return 0.0;
  return to_real(z, qa.beta + qb.beta + accumulator_scale_exp(qa.bits, qb.bits));
}

Matrix mf_matmul(const QuantMatrixView& a, const QuantMatrixView& b,
                 AccumulatorConfig cfg) {
  if (!a.block || !b.block) throw InputError("mf_matmul: empty view");
  if (a.rows * a.cols != a.block->size() || b.rows * b.cols != b.block->size()) {
    throw InputError("mf_matmul: view does not match its block");
  }
  const std::size_t m = a.view_rows();
  const std::size_t k = a.view_cols();
  const std::size_t n = b.view_cols();
  if (b.view_rows() != k) {
    throw InputError("mf_matmul: inner dimensions differ (" + std::to_string(k) +
                     " vs " + std::to_string(b.view_rows()) + ")");
  }
  // Row r of view A, element j: stored (r, j) or (j, r).
  const Packed pa = a.transposed ? pack(*a.block, m, k, 1, a.cols)
                                 : pack(*a.block, m, k, a.cols, 1);
  // Column c of view B, element j: stored (j, c) or (c, j).
  const Packed pb = b.transposed ? pack(*b.block, n, k, b.cols, 1)
                                 : pack(*b.block, n, k, 1, b.cols);

  const BitWidth wa = a.block->bits;
  const BitWidth wb = b.block->bits;
  const bool null = a.block->null_scale() || b.block->null_scale();
  const int shift = null ? 0 : a.block->beta + b.block->beta + accumulator_scale_exp(wa, wb);

  Matrix out(m, n);
  DotRunner runner{cfg, instrumented_census(), fits_int64(wa, wb, k), {}};
  for (std::size_t r = 0; r < m; ++r) {
    const std::int8_t* ea = pa.exps.data() + r * k;
    const std::uint8_t* sa = pa.signs.data() + r * k;
    for (std::size_t c = 0; c < n; ++c) {
      const wide_t z = runner.run(ea, sa, pb.exps.data() + c * k,
                                  pb.signs.data() + c * k, k);
      out(r, c) = null ? 0.0 : to_real(z, shift);
    }
  }
  runner.ops.final_shifts += m * n;
  runner.finish();
  return out;
}

namespace {

// Exact running sum as a list of non-overlapping partials (Shewchuk).
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  // Correctly rounded value of the exact sum.
  double value() const {
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      lo = y - (hi - x);
      if (lo != 0.0) break;
    }
    // Half-way case: the remaining partials decide the rounding direction.
    if (n > 0 && ((lo < 0 && partials_[n - 1] < 0) || (lo > 0 && partials_[n - 1] > 0))) {
      const double y = lo * 2;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
};

}  // namespace

double reference_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("reference_dot: length mismatch");
  ExactSum sum;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = a[i] * b[i];
    sum.add(p);
    sum.add(std::fma(a[i], b[i], -p));
  }
  return sum.value();
}

}  // namespace mft
