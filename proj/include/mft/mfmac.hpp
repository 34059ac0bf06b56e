#pragma once

// Multiplication-free multiply-accumulate over QuantBlocks.
//
// Each product of two PoT elements is formed by adding their exponents and
// XOR-ing their signs. The product 2^(ea+eb) is materialised as a single set
// bit at position (ea + emaxA) + (eb + emaxB) of a fixed-point accumulator z
// whose unit is 2^-(emaxA + emaxB); for 5-bit x 5-bit operands every product
// is an integer in [1, 2^28]. One final shift by betaA + betaB - emaxA - emaxB
// turns z back into a real.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mft/quantizer.hpp"

namespace mft {

enum class AccumulatorMode {
  // 128-bit accumulation; exact for every supported width and length.
  wide,
  // 32-bit saturating accumulation. Clamp events go to the census.
  strict32,
};

struct AccumulatorConfig {
  AccumulatorMode mode = AccumulatorMode::wide;
};

// Binary point of z: -(emaxA + emaxB).
constexpr int accumulator_scale_exp(BitWidth a, BitWidth b) {
  return -(a.emax() + b.emax());
}

// Row-major real matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// A QuantBlock read as a rows x cols row-major matrix, optionally transposed.
struct QuantMatrixView {
  const QuantBlock* block = nullptr;
  std::size_t rows = 0;  // of the stored (untransposed) matrix
  std::size_t cols = 0;
  bool transposed = false;

  std::size_t view_rows() const { return transposed ? cols : rows; }
  std::size_t view_cols() const { return transposed ? rows : cols; }
};

QuantMatrixView as_matrix(const QuantBlock& q, std::size_t rows, std::size_t cols,
                          bool transposed = false);

// Sum over i of qa[i] * qb[i]. Throws InputError on length mismatch.
double mf_dot(const QuantBlock& qa, const QuantBlock& qb, AccumulatorConfig cfg = {});

// a (m x k) times b (k x n). Every output element has the numerics of mf_dot
// on the matching row and column.
Matrix mf_matmul(const QuantMatrixView& a, const QuantMatrixView& b,
                 AccumulatorConfig cfg = {});

// Correctly rounded inner product: every product is split exactly with an
// FMA and all parts are summed with exact floating-point expansions.
double reference_dot(std::span<const double> a, std::span<const double> b);

}  // namespace mft
