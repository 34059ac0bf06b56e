#pragma once

// Energy model for the MAC work of one training iteration. Unit costs are
// picojoules per operation in 45 nm CMOS; iteration figures are joules.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mft/census.hpp"

namespace YAML {
class Node;
}

namespace mft {

class OpCostTable {
 public:
  // The published 45 nm table plus xor (0.01) and pot_round (0.004).
  static OpCostTable defaults();

  double cost(const std::string& op) const;  // ConfigError when unknown
  bool has(const std::string& op) const { return costs_.count(op) != 0; }
  void set(const std::string& op, double pj);  // ConfigError unless finite > 0
  const std::map<std::string, double>& entries() const { return costs_; }

 private:
  std::map<std::string, double> costs_;
};

// op name -> how many of that op one MAC uses (fractions allowed, e.g. half
// the backward MACs on one unit and half on another).
using OpMix = std::map<std::string, double>;

struct MethodProfile {
  std::string name;
  OpMix fw, bw;
  OpMix side;                   // charged per MAC but reported on their own line
  bool quant_overhead = false;  // charge ALS-PoTQ per quantized number
  bool editable = false;        // not an arithmetic closure of the table
  std::optional<double> published_fw, published_bw, published_total;  // joules
  std::string note;
};

std::vector<MethodProfile> default_profiles();
const MethodProfile& find_profile(const std::vector<MethodProfile>& profiles,
                                  const std::string& name);

struct WorkloadSpec {
  double fw_macs = 0.0;
  double bw_multiplier = 2.0;
  // Representative quantization block (m x n) for amortising the
  // dequantising shift.
  std::size_t block_m = 16, block_n = 16;
  // Numbers run through ALS-PoTQ per iteration; defaults to one per MAC.
  std::optional<double> quantized_numbers;
  std::string note;

  void validate() const;
  double bw_macs() const { return fw_macs * bw_multiplier; }
  double total_macs() const { return fw_macs + bw_macs(); }

  // Forward MACs back-solved from the FP32 row: 14.53 J / (3 x 4.6 pJ).
  static WorkloadSpec resnet50();
};

enum class Pass { fw, bw };

double mix_cost(const OpMix& mix, const OpCostTable& table);
double mac_cost(const MethodProfile& profile, Pass pass, const OpCostTable& table);

struct QuantOverhead {
  double scaling_pj = 0.0;   // one INT8 add per number
  double rounding_pj = 0.0;  // one PoT rounding per number
  double shift_pj = 0.0;     // one INT32 shift per block
  double total_pj = 0.0;
  double per_number_pj = 0.0;
};
QuantOverhead quant_overhead(std::size_t m, std::size_t n, const OpCostTable& table);

// MF-MAC plus amortised quantizer cost for one MAC.
double combined_mac_cost(const OpCostTable& table, std::size_t m, std::size_t n);

struct IterationEnergy {
  double fw_j = 0.0, bw_j = 0.0, total_j = 0.0;
  double side_j = 0.0;
  double overhead_j = 0.0;
  double total_with_overhead() const { return total_j + overhead_j; }
};
IterationEnergy iteration_energy(const MethodProfile& profile, const WorkloadSpec& workload,
                                 const OpCostTable& table);

struct ReportRow {
  std::string method;
  IterationEnergy energy;
  std::optional<double> published_total;
  std::optional<double> savings;  // vs the FP32 row, 0..1
  bool editable = false;
};

struct CompareReport {
  std::vector<ReportRow> rows;
  std::optional<double> savings_mac_only;       // best quantizer-charged method
  std::optional<double> savings_with_overhead;
  std::string csv;
  std::string text;
};
CompareReport compare_report(const std::vector<MethodProfile>& profiles,
                             const WorkloadSpec& workload, const OpCostTable& table);

// Prices instrumented op counts from a real run. Without zero gating every
// MAC slot pays for its exponent add, XOR and accumulation, sentinel or not;
// with it only the non-zero products do.
struct CensusEnergy {
  double exp_add_j = 0.0, accumulate_j = 0.0, xor_j = 0.0;
  double scaling_j = 0.0, rounding_j = 0.0, shift_j = 0.0;
  double mac_j() const { return exp_add_j + accumulate_j; }
  double overhead_j() const { return scaling_j + rounding_j + shift_j; }
  double total_j() const { return mac_j() + xor_j + overhead_j(); }
};
CensusEnergy price_census(const OpCounts& counts, const OpCostTable& table,
                          bool zero_gating = false);

// YAML: {costs: {op: pJ, ...}} overrides on top of the defaults, and
// {methods: [{name, fw, bw, side, quant_overhead, editable, published, note}]}.
// Unknown keys are rejected with file:line context.
void apply_cost_overrides(OpCostTable& table, const YAML::Node& costs,
                          const std::string& origin);
MethodProfile parse_profile(const YAML::Node& node, const std::string& origin);
struct EnergyConfig {
  OpCostTable table = OpCostTable::defaults();
  std::vector<MethodProfile> profiles = default_profiles();
};
EnergyConfig load_energy_config(const std::filesystem::path& path);

}  // namespace mft
