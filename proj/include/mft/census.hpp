#pragma once

// Process-wide operation census for the multiplication-free path.
//
// Kernels tally into a local OpCounts and merge once per call; merging uses
// relaxed atomics, so concurrent kernels may report at the same time.

#include <cstdint>

namespace mft {

struct OpCounts {
  std::uint64_t mac_slots = 0;      // operand pairs presented to the MAC
  std::uint64_t exp_adds = 0;       // small-int exponent additions
  std::uint64_t xors = 0;           // sign XORs
  std::uint64_t accumulations = 0;  // adds/subs into the accumulator z
  std::uint64_t final_shifts = 0;   // dequantising shifts of z
  std::uint64_t scalings = 0;       // exponent-field additions by -beta
  std::uint64_t roundings = 0;      // PoT rounding carries
  std::uint64_t multiplies = 0;     // general multiplications (instrumented)
  std::uint64_t saturations = 0;    // strict32 clamp events

  OpCounts& operator+=(const OpCounts& o);
  friend OpCounts operator-(OpCounts a, const OpCounts& b);
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

// Totals since the last reset.
OpCounts op_census();
void reset_op_census();
void record_ops(const OpCounts& counts);

// When on, MAC kernels run an instantiation whose every arithmetic operator
// is counted, including multiplication. Slow; meant for audits.
void set_instrumented_census(bool on);
bool instrumented_census();

}  // namespace mft
