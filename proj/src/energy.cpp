#include "mft/energy.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "mft/errors.hpp"
#include "yaml_util.hpp"

namespace mft {

namespace {

constexpr double kPico = 1e-12;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

// --- cost table -----------------------------------------------------------------

OpCostTable OpCostTable::defaults() {
  OpCostTable t;
  t.costs_ = {
      {"fp32_mul", 3.7},       {"int32_mul", 3.1},      {"fp8_mul", 0.23},
      {"int8_mul", 0.19},      {"int4_mul", 0.048},     {"fp32_add", 0.9},
      {"int32_add", 0.14},     {"int16_add", 0.05},     {"int8_add", 0.03},
      {"int4_add", 0.015},     {"shift_int32_4", 0.96}, {"shift_int32_3", 0.72},
      {"shift_int4_3", 0.081}, {"xor", 0.01},           {"pot_round", 0.004},
  };
  return t;
}

double OpCostTable::cost(const std::string& op) const {
  const auto it = costs_.find(op);
  if (it == costs_.end()) throw ConfigError("unknown operation '" + op + "' in cost table");
  return it->second;
}

void OpCostTable::set(const std::string& op, double pj) {
  if (!std::isfinite(pj) || pj <= 0) {
    throw ConfigError("cost of '" + op + "' must be a positive number of pJ, got " +
                      fmt("%g", pj));
  }
  costs_[op] = pj;
}

// --- profiles -------------------------------------------------------------------

std::vector<MethodProfile> default_profiles() {
  const OpMix fp32_mac{{"fp32_mul", 1}, {"fp32_add", 1}};
  std::vector<MethodProfile> p;
  p.push_back({.name = "Original", .fw = fp32_mac, .bw = fp32_mac,
               .published_fw = 4.84, .published_bw = 9.69, .published_total = 14.53});
  p.push_back({.name = "INQ", .fw = fp32_mac, .bw = fp32_mac,
               .published_fw = 4.84, .published_bw = 9.69, .published_total = 14.53,
               .note = "fine-tunes a pre-trained model; inference fw with INT32-4 shift 1.97 J"});
  p.push_back({.name = "LogNN", .fw = fp32_mac, .bw = fp32_mac,
               .published_fw = 4.84, .published_bw = 9.69, .published_total = 14.53,
               .note = "fine-tunes a pre-trained model; inference 0.95 / 1.92 / 2.87 J"});
  p.push_back({.name = "ShiftCNN", .fw = fp32_mac, .bw = fp32_mac,
               .published_fw = 4.84, .published_bw = 9.69, .published_total = 14.53,
               .note = "fine-tunes a pre-trained model; inference fw with INT32-4 shift 1.70 J"});
  p.push_back({.name = "ShiftAddNet",
               .fw = {{"shift_int32_4", 1}, {"int32_add", 1}},
               .bw = {{"int32_mul", 1}, {"shift_int32_4", 1}},
               .editable = true, .published_fw = 2.45, .published_bw = 6.63, .published_total = 9.08,
               .note = "published figures do not follow from the unit table; edit to taste"});
  p.push_back({.name = "AdderNet", .fw = {{"fp32_add", 2}}, .bw = {{"fp32_add", 2}},
               .published_fw = 1.90, .published_bw = 3.80, .published_total = 5.70});
  // Half of the backward products (W.G) become INT8 exponent adds.
  p.push_back({.name = "DeepShift",
               .fw = {{"shift_int32_4", 1}, {"fp32_add", 1}},
               .bw = {{"fp32_mul", 0.5}, {"int8_add", 0.5}, {"fp32_add", 1}},
               .published_fw = 1.97, .published_bw = 5.84, .published_total = 7.81});
  p.push_back({.name = "S2FP8",
               .fw = {{"fp8_mul", 1}, {"fp32_add", 1}},
               .bw = {{"fp8_mul", 1}, {"fp32_add", 1}},
               .published_fw = 1.19, .published_bw = 2.38, .published_total = 3.57,
               .note = "quantizer multiplications not charged"});
  p.push_back({.name = "LUQ",
               .fw = {{"int4_mul", 1}, {"fp32_add", 1}},
               .bw = {{"shift_int4_3", 1}, {"fp32_add", 1}},
               .published_fw = 1.00, .published_bw = 2.06, .published_total = 3.07,
               .note = "quantizer multiplications not charged"});
  p.push_back({.name = "Ours",
               .fw = {{"int4_add", 1}, {"int32_add", 1}},
               .bw = {{"int4_add", 1}, {"int32_add", 1}},
               .side = {{"xor", 1}}, .quant_overhead = true,
               .published_fw = 0.16, .published_bw = 0.33, .published_total = 0.49});
  return p;
}

const MethodProfile& find_profile(const std::vector<MethodProfile>& profiles,
                                  const std::string& name) {
  for (const auto& p : profiles) {
    if (p.name == name) return p;
  }
  std::string known;
  for (const auto& p : profiles) known += (known.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown method '" + name + "' (known: " + known + ")");
}

// --- workload -------------------------------------------------------------------

void WorkloadSpec::validate() const {
  if (!std::isfinite(fw_macs) || fw_macs <= 0) throw ConfigError("workload MAC count must be > 0");
  if (!std::isfinite(bw_multiplier) || bw_multiplier < 0) {
    throw ConfigError("workload backward multiplier must be >= 0");
  }
  if (!block_m || !block_n) throw ConfigError("quantization block dimensions must be > 0");
  if (quantized_numbers && (!std::isfinite(*quantized_numbers) || *quantized_numbers < 0)) {
    throw ConfigError("quantized number count must be >= 0");
  }
}

WorkloadSpec WorkloadSpec::resnet50() {
  WorkloadSpec w;
  w.fw_macs = 14.53 / (3.0 * 4.6 * kPico);
  w.note =
      "forward MACs back-solved from the FP32 row; 12.36 G MACs per example x batch 256 "
      "= 3.16e12 MACs per iteration, about 3x the forward figure";
  return w;
}

// --- costs ----------------------------------------------------------------------

double mix_cost(const OpMix& mix, const OpCostTable& table) {
  double pj = 0.0;
  for (const auto& [op, count] : mix) {
    if (!std::isfinite(count) || count < 0) {
      throw ConfigError("op '" + op + "' has a negative or non-finite share");
    }
    pj += count * table.cost(op);
  }
  return pj;
}

double mac_cost(const MethodProfile& profile, Pass pass, const OpCostTable& table) {
  return mix_cost(pass == Pass::fw ? profile.fw : profile.bw, table);
}

QuantOverhead quant_overhead(std::size_t m, std::size_t n, const OpCostTable& table) {
  if (!m || !n) throw ConfigError("quant_overhead needs m, n > 0");
  const double count = static_cast<double>(m) * static_cast<double>(n);
  QuantOverhead q;
  q.scaling_pj = table.cost("int8_add") * count;
  q.rounding_pj = table.cost("pot_round") * count;
  q.shift_pj = table.cost("shift_int32_4");
  q.total_pj = q.scaling_pj + q.rounding_pj + q.shift_pj;
  q.per_number_pj = q.total_pj / count;
  return q;
}

double combined_mac_cost(const OpCostTable& table, std::size_t m, std::size_t n) {
  const double mac = table.cost("int4_add") + table.cost("int32_add");
  return mac + quant_overhead(m, n, table).per_number_pj;
}

IterationEnergy iteration_energy(const MethodProfile& profile, const WorkloadSpec& workload,
                                 const OpCostTable& table) {
  workload.validate();
  IterationEnergy e;
  e.fw_j = workload.fw_macs * mac_cost(profile, Pass::fw, table) * kPico;
  e.bw_j = workload.bw_macs() * mac_cost(profile, Pass::bw, table) * kPico;
  e.total_j = e.fw_j + e.bw_j;
  e.side_j = workload.total_macs() * mix_cost(profile.side, table) * kPico;
  if (profile.quant_overhead) {
    const double numbers = workload.quantized_numbers.value_or(workload.total_macs());
    e.overhead_j =
        numbers * quant_overhead(workload.block_m, workload.block_n, table).per_number_pj * kPico;
  }
  return e;
}

// --- report ---------------------------------------------------------------------

CompareReport compare_report(const std::vector<MethodProfile>& profiles,
                             const WorkloadSpec& workload, const OpCostTable& table) {
  if (profiles.empty()) throw ConfigError("compare_report needs at least one method");
  CompareReport r;
  std::optional<double> baseline;
  for (const auto& p : profiles) {
    ReportRow row{p.name, iteration_energy(p, workload, table), p.published_total, std::nullopt,
                  p.editable};
    if (p.name == "Original") baseline = row.energy.total_j;
    r.rows.push_back(row);
  }
  const bool with_savings = baseline && r.rows.size() > 1;
  if (with_savings) {
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      auto& row = r.rows[i];
      row.savings = 1.0 - row.energy.total_j / *baseline;
      if (profiles[i].quant_overhead && !r.savings_mac_only) {
        r.savings_mac_only = row.savings;
        r.savings_with_overhead = 1.0 - row.energy.total_with_overhead() / *baseline;
      }
    }
  }

  std::ostringstream csv;
  csv << "method,fw_j,bw_j,total_j,xor_j,quant_overhead_j,total_with_overhead_j,published_total_j";
  if (with_savings) csv << ",savings_pct";
  csv << "\n";
  for (const auto& row : r.rows) {
    const auto& e = row.energy;
    csv << row.method << fmt(",%.6g", e.fw_j) << fmt(",%.6g", e.bw_j) << fmt(",%.6g", e.total_j)
        << fmt(",%.6g", e.side_j) << fmt(",%.6g", e.overhead_j)
        << fmt(",%.6g", e.total_with_overhead()) << ","
        << (row.published_total ? fmt("%.2f", *row.published_total) : "");
    if (with_savings) csv << fmt(",%.2f", *row.savings * 100.0);
    csv << "\n";
  }
  r.csv = csv.str();

  std::ostringstream txt;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %9s %9s", "method", "FW (J)", "BW (J)",
                "total (J)", "published", "delta");
  txt << line << (with_savings ? "   savings" : "") << "\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    const auto& e = row.energy;
    const std::string pub = row.published_total ? fmt("%.2f", *row.published_total) : "-";
    const std::string delta =
        row.published_total ? fmt("%+.1f%%", (e.total_j / *row.published_total - 1.0) * 100.0) : "-";
    std::snprintf(line, sizeof line, "%-12s %9.3f %9.3f %9.3f %9s %9s", row.method.c_str(),
                  e.fw_j, e.bw_j, e.total_j, pub.c_str(), delta.c_str());
    txt << line;
    if (with_savings) txt << fmt("  %7.2f%%", *row.savings * 100.0);
    if (row.editable) txt << "  (editable profile)";
    txt << "\n";
    if (e.side_j > 0 || e.overhead_j > 0) {
      std::snprintf(line, sizeof line, "%-12s   xor %.3f J, quantizer %.3f J, with quantizer %.3f J",
                    "", e.side_j, e.overhead_j, e.total_with_overhead());
      txt << line << "\n";
    }
    if (!profiles[i].note.empty()) txt << "             note: " << profiles[i].note << "\n";
  }
  if (r.savings_mac_only) {
    txt << fmt("savings vs FP32, MAC only:        %.1f%%\n", *r.savings_mac_only * 100.0);
    txt << fmt("savings vs FP32, with quantizer:  %.1f%%\n", *r.savings_with_overhead * 100.0);
  }
  txt << fmt("workload: %.4g forward MACs", workload.fw_macs)
      << fmt(", backward x%g", workload.bw_multiplier) << "\n";
  if (!workload.note.empty()) txt << "  " << workload.note << "\n";
  r.text = txt.str();
  return r;
}

CensusEnergy price_census(const OpCounts& c, const OpCostTable& t, bool zero_gating) {
  CensusEnergy e;
  const auto n = [&](std::uint64_t gated) {
    return static_cast<double>(zero_gating ? gated : c.mac_slots);
  };
  e.exp_add_j = n(c.exp_adds) * t.cost("int4_add") * kPico;
  e.accumulate_j = n(c.accumulations) * t.cost("int32_add") * kPico;
  e.xor_j = n(c.xors) * t.cost("xor") * kPico;
  e.scaling_j = static_cast<double>(c.scalings) * t.cost("int8_add") * kPico;
  e.rounding_j = static_cast<double>(c.roundings) * t.cost("pot_round") * kPico;
  e.shift_j = static_cast<double>(c.final_shifts) * t.cost("shift_int32_4") * kPico;
  return e;
}

// --- configuration --------------------------------------------------------------

void apply_cost_overrides(OpCostTable& table, const YAML::Node& costs, const std::string& origin) {
  yaml::expect_map(costs, origin, "costs");
  for (const auto& kv : costs) {
    const auto op = kv.first.as<std::string>();
    const double pj = yaml::get<double>(kv.second, origin, "costs." + op);
    try {
      table.set(op, pj);
    } catch (const ConfigError& e) {
      yaml::fail(kv.second, origin, e.what());
    }
  }
}

namespace {

OpMix parse_mix(const YAML::Node& n, const std::string& origin, const std::string& what) {
  yaml::expect_map(n, origin, what);
  OpMix mix;
  for (const auto& kv : n) {
    const auto op = kv.first.as<std::string>();
    const double share = yaml::get<double>(kv.second, origin, what + "." + op);
    if (!std::isfinite(share) || share < 0) yaml::fail(kv.second, origin, "share must be >= 0");
    mix[op] = share;
  }
  return mix;
}

}  // namespace

MethodProfile parse_profile(const YAML::Node& n, const std::string& origin) {
  yaml::check_keys(n, {"name", "fw", "bw", "side", "quant_overhead", "editable", "published", "note"},
                   origin, "method");
  MethodProfile p;
  if (!n["name"]) yaml::fail(n, origin, "method needs a name");
  p.name = yaml::get<std::string>(n["name"], origin, "name");
  if (!n["fw"] || !n["bw"]) yaml::fail(n, origin, "method '" + p.name + "' needs fw and bw");
  p.fw = parse_mix(n["fw"], origin, p.name + ".fw");
  p.bw = parse_mix(n["bw"], origin, p.name + ".bw");
  if (n["side"]) p.side = parse_mix(n["side"], origin, p.name + ".side");
  yaml::read(n, "quant_overhead", p.quant_overhead, origin);
  yaml::read(n, "editable", p.editable, origin);
  yaml::read(n, "note", p.note, origin);
  if (const YAML::Node ref = n["published"]) {
    yaml::check_keys(ref, {"fw", "bw", "total"}, origin, "published");
    if (ref["fw"]) p.published_fw = yaml::get<double>(ref["fw"], origin, "published.fw");
    if (ref["bw"]) p.published_bw = yaml::get<double>(ref["bw"], origin, "published.bw");
    if (ref["total"]) p.published_total = yaml::get<double>(ref["total"], origin, "published.total");
  }
  return p;
}

EnergyConfig load_energy_config(const std::filesystem::path& path) {
  const std::string origin = path.string();
  YAML::Node root;
  try {
    root = YAML::LoadFile(origin);
  } catch (const YAML::BadFile&) {
    throw InputError("cannot open " + origin);
  } catch (const YAML::Exception& e) {
    throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  EnergyConfig cfg;
  if (root.IsNull()) return cfg;
  yaml::check_keys(root, {"costs", "methods"}, origin, "energy config");
  if (root["costs"]) apply_cost_overrides(cfg.table, root["costs"], origin);
  if (const YAML::Node methods = root["methods"]) {
    if (!methods.IsSequence()) yaml::fail(methods, origin, "methods must be a list");
    for (const auto& m : methods) {
      MethodProfile p = parse_profile(m, origin);
      bool replaced = false;
      for (auto& q : cfg.profiles) {
        if (q.name == p.name) {
          q = p;
          replaced = true;
        }
      }
      if (!replaced) cfg.profiles.push_back(p);
    }
  }
  // Every op must resolve before a report starts.
  for (const auto& p : cfg.profiles) {
    for (const OpMix* mix : {&p.fw, &p.bw, &p.side}) {
      for (const auto& kv : *mix) {
        if (!cfg.table.has(kv.first)) {
          throw ConfigError(origin + ": method '" + p.name + "' uses unknown operation '" +
                            kv.first + "'");
        }
      }
    }
  }
  return cfg;
}

}  // namespace mft
