#include "mft/census.hpp"

#include <atomic>

namespace mft {

namespace {

struct AtomicCounts {
  std::atomic<std::uint64_t> mac_slots{0};
  std::atomic<std::uint64_t> exp_adds{0};
  std::atomic<std::uint64_t> xors{0};
  std::atomic<std::uint64_t> accumulations{0};
  std::atomic<std::uint64_t> final_shifts{0};
  std::atomic<std::uint64_t> scalings{0};
  std::atomic<std::uint64_t> roundings{0};
  std::atomic<std::uint64_t> multiplies{0};
  std::atomic<std::uint64_t> saturations{0};
};

AtomicCounts g_counts;
std::atomic<bool> g_instrumented{false};

template <class F>
void for_each_field(AtomicCounts& a, const OpCounts& c, F&& f) {
  f(a.mac_slots, c.mac_slots);
  f(a.exp_adds, c.exp_adds);
  f(a.xors, c.xors);
  f(a.accumulations, c.accumulations);
  f(a.final_shifts, c.final_shifts);
  f(a.scalings, c.scalings);
  f(a.roundings, c.roundings);
  f(a.multiplies, c.multiplies);
  f(a.saturations, c.saturations);
}

}  // namespace

OpCounts& OpCounts::operator+=(const OpCounts& o) {
  mac_slots += o.mac_slots;
  exp_adds += o.exp_adds;
  xors += o.xors;
  accumulations += o.accumulations;
  final_shifts += o.final_shifts;
  scalings += o.scalings;
  roundings += o.roundings;
  multiplies += o.multiplies;
  saturations += o.saturations;
  return *this;
}

OpCounts operator-(OpCounts a, const OpCounts& b) {
  a.mac_slots -= b.mac_slots;
  a.exp_adds -= b.exp_adds;
  a.xors -= b.xors;
  a.accumulations -= b.accumulations;
  a.final_shifts -= b.final_shifts;
  a.scalings -= b.scalings;
  a.roundings -= b.roundings;
  a.multiplies -= b.multiplies;
  a.saturations -= b.saturations;
  return a;
}

OpCounts op_census() {
  const auto& a = g_counts;
  auto ld = [](const std::atomic<std::uint64_t>& v) {
    return v.load(std::memory_order_relaxed);
  };
  return OpCounts{ld(a.mac_slots),     ld(a.exp_adds),   ld(a.xors),
                  ld(a.accumulations), ld(a.final_shifts), ld(a.scalings),
                  ld(a.roundings),     ld(a.multiplies), ld(a.saturations)};
}

void reset_op_census() {
  for_each_field(g_counts, OpCounts{}, [](auto& slot, std::uint64_t) {
    slot.store(0, std::memory_order_relaxed);
  });
}

void record_ops(const OpCounts& counts) {
  for_each_field(g_counts, counts, [](auto& slot, std::uint64_t v) {
    if (v) slot.fetch_add(v, std::memory_order_relaxed);
  });
}

void set_instrumented_census(bool on) {
  g_instrumented.store(on, std::memory_order_relaxed);
}

bool instrumented_census() {
  return g_instrumented.load(std::memory_order_relaxed);
}

}  // namespace mft
