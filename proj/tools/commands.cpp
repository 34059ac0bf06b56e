#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mft/checkpoint.hpp"
#include "mft/config.hpp"
#include "mft/energy.hpp"
#include "mft/fileutil.hpp"
#include "mft/mfmac.hpp"
#include "mft/potnum.hpp"
#include "mft/quantizer.hpp"
#include "mft/trainer.hpp"

namespace mft::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------- quantize

std::vector<double> draw_sample(const std::string& kind, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(n);
  if (kind == "zeros") return v;
  if (kind == "normal") {
    std::normal_distribution<double> d(0.0, 1.0);
    for (auto& x : v) x = d(rng);
  } else if (kind == "lognormal") {
    // Random sign on a log-normal magnitude.
    std::lognormal_distribution<double> d(0.0, 1.0);
    std::bernoulli_distribution s(0.5);
    for (auto& x : v) x = s(rng) ? -d(rng) : d(rng);
  } else if (kind == "uniform") {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (auto& x : v) x = d(rng);
  } else {
    throw ConfigError("unknown sample '" + kind + "' (normal, lognormal, uniform, zeros)");
  }
  return v;
}

std::string bar(std::size_t count, std::size_t peak, int width = 30) {
  const int n = peak ? static_cast<int>(std::lround(static_cast<double>(count) * width /
                                                    static_cast<double>(peak)))
                     : 0;
  return std::string(static_cast<std::size_t>(n), '#');
}

// ------------------------------------------------------------------- train

const char* kMetricsHeader =
    "epoch,steps,lr,train_loss,train_accuracy,test_loss,test_accuracy,saturations,"
    "w_zero_frac,a_zero_frac,g_zero_frac,mac_slots,multiplies";

std::string metrics_row(const EpochMetrics& e) {
  return fmt("%zu,%llu,%.10g,%.10g,%.10g,%.10g,%.10g,%llu,%.10g,%.10g,%.10g,%llu,%llu", e.epoch,
             static_cast<unsigned long long>(e.steps), e.lr, e.train_loss, e.train_accuracy,
             e.test_loss, e.test_accuracy, static_cast<unsigned long long>(e.saturations),
             e.w_zero_fraction, e.a_zero_fraction, e.g_zero_fraction,
             static_cast<unsigned long long>(e.ops.mac_slots),
             static_cast<unsigned long long>(e.ops.multiplies));
}

std::size_t leading_epoch(const std::string& line) {
  std::size_t v = 0;
  const auto r = std::from_chars(line.data(), line.data() + line.size(), v);
  return r.ec == std::errc() ? v : 0;
}

// Data rows of an earlier metrics or timing file up to `epoch`.
std::vector<std::string> kept_rows(const fs::path& path, std::size_t epoch) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("epoch", 0) == 0) continue;
    const std::size_t e = leading_epoch(line);
    if (e >= 1 && e <= epoch) rows.push_back(line);
  }
  return rows;
}

std::string join_csv(const std::string& schema, const char* header,
                     const std::vector<std::string>& rows) {
  std::string s = schema + header + "\n";
  for (const auto& r : rows) s += r + "\n";
  return s;
}

json ops_json(const OpCounts& c) {
  return {{"mac_slots", c.mac_slots},         {"exp_adds", c.exp_adds},
          {"xors", c.xors},                   {"accumulations", c.accumulations},
          {"final_shifts", c.final_shifts},   {"scalings", c.scalings},
          {"roundings", c.roundings},         {"multiplies", c.multiplies},
          {"saturations", c.saturations}};
}

OpCounts ops_from_json(const json& j) {
  OpCounts c;
  c.mac_slots = j.at("mac_slots").get<std::uint64_t>();
  c.exp_adds = j.at("exp_adds").get<std::uint64_t>();
  c.xors = j.at("xors").get<std::uint64_t>();
  c.accumulations = j.at("accumulations").get<std::uint64_t>();
  c.final_shifts = j.at("final_shifts").get<std::uint64_t>();
  c.scalings = j.at("scalings").get<std::uint64_t>();
  c.roundings = j.at("roundings").get<std::uint64_t>();
  c.multiplies = j.at("multiplies").get<std::uint64_t>();
  c.saturations = j.at("saturations").get<std::uint64_t>();
  return c;
}

void apply_ablation(TrainConfig& t, const std::string& name) {
  if (name == "no_als_scaling" || name == "no_als") t.no_als_scaling = true;
  else if (name == "no_wbc") t.no_wbc = true;
  else if (name == "no_prc") t.no_prc = true;
  else throw ConfigError("unknown ablation '" + name + "' (no_als_scaling, no_wbc, no_prc)");
}

// ----------------------------------------------------------------- compare

struct MetricsFile {
  std::vector<double> train_loss, test_accuracy;
};

MetricsFile read_metrics(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::string> header;
  MetricsFile m;
  int loss_col = -1, acc_col = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (header.empty()) {
      header = cells;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "train_loss") loss_col = static_cast<int>(i);
        if (cells[i] == "test_accuracy") acc_col = static_cast<int>(i);
      }
      if (loss_col < 0 || acc_col < 0) {
        throw InputError(path.string() + ": no train_loss/test_accuracy columns");
      }
      continue;
    }
    if (cells.size() != header.size()) throw InputError(path.string() + ": ragged row");
    try {
      m.train_loss.push_back(std::stod(cells[static_cast<std::size_t>(loss_col)]));
      m.test_accuracy.push_back(std::stod(cells[static_cast<std::size_t>(acc_col)]));
    } catch (const std::exception&) {
      throw InputError(path.string() + ": non-numeric cell in '" + line + "'");
    }
  }
  if (m.train_loss.empty()) throw InputError(path.string() + ": no epochs recorded");
  return m;
}

// ---------------------------------------------------------------- selftest

struct Suite {
  std::string name;
  bool ok = true;
  std::string detail;
};

Suite codec_suite() {
  Suite s{"codec"};
  std::string parts;
  for (int bits = BitWidth::kMin; bits <= BitWidth::kMax; ++bits) {
    const BitWidth b{bits};
    std::set<double> values;
    for (int p = 0; p < b.pattern_count(); ++p) {
      const auto code = from_pattern(static_cast<std::uint8_t>(p), b);
      if (!code) {
        s.ok = false;
        continue;
      }
      const double v = dequantize_scalar(*code, b);
      values.insert(v);
      const bool neg_zero = code->is_zero() && (p >> (bits - 1));
      if (!neg_zero && to_pattern(*code, b) != p) s.ok = false;
      if (!(quantize_scalar(v, b) == *code)) s.ok = false;
    }
    const std::size_t expect = static_cast<std::size_t>(b.pattern_count() - 1);
    const std::vector<double> table = pot_values(b);
    if (values.size() != expect || values != std::set<double>(table.begin(), table.end())) {
      s.ok = false;
    }
    parts += fmt("%sb=%d:%zu", parts.empty() ? "" : " ", bits, values.size());
  }
  s.detail = "distinct values " + parts;
  return s;
}

Suite product_suite() {
  Suite s{"product table"};
  const BitWidth b{5};
  std::size_t pairs = 0, wrong = 0;
  // Every value of the width, zero included.
  std::vector<PotCode> codes;
  for (double v : pot_values(b)) codes.push_back(quantize_scalar(v, b));
  for (PotCode x : codes) {
    for (PotCode y : codes) {
      const PotProduct pr = pot_mul(x, b, y, b);
      const double got = pr.is_zero ? 0.0 : (pr.sign ? -1.0 : 1.0) * std::ldexp(1.0, pr.exp_sum);
      if (got != dequantize_scalar(x, b) * dequantize_scalar(y, b)) ++wrong;
      ++pairs;
    }
  }
  s.ok = wrong == 0 && pairs == 31 * 31;
  s.detail = fmt("%zu pairs, %zu mismatches", pairs, wrong);
  return s;
}

QuantBlock random_block(std::mt19937_64& rng, std::size_t n, BitWidth bits) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> octave(-20.0, 20.0);
  std::bernoulli_distribution zero(0.05);
  const double scale = std::exp2(octave(rng));
  std::vector<double> v(n);
  for (auto& x : v) x = zero(rng) ? 0.0 : normal(rng) * scale;
  return als_potq(v, {n}, bits);
}

Suite oracle_suite(std::size_t blocks, std::uint64_t seed) {
  Suite s{"oracle sample"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(1, 1024);
  std::bernoulli_distribution six(0.5);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::size_t n = len(rng);
    const QuantBlock a = random_block(rng, n, BitWidth{six(rng) ? 6 : 5});
    const QuantBlock b = random_block(rng, n, BitWidth{six(rng) ? 6 : 5});
    const double got = mf_dot(a, b);
    const double want = reference_dot(dequantize_block(a), dequantize_block(b));
    if (got != want) ++wrong;
  }
  s.ok = wrong == 0;
  s.detail = fmt("%zu blocks, %zu not bit-exact", blocks, wrong);
  return s;
}

Suite closure_suite(const EnergyConfig& ec) {
  Suite s{"energy closure"};
  const WorkloadSpec w = WorkloadSpec::resnet50();
  const auto total = [&](const char* name) {
    return iteration_energy(find_profile(ec.profiles, name), w, ec.table).total_j;
  };
  const double original = total("Original");
  const double ours = total("Ours");
  const double adder = total("AdderNet");
  s.ok = std::abs(original - 14.53) < 1e-9 && std::abs(ours / 0.49 - 1) <= 0.05 &&
         std::abs(adder / 5.70 - 1) <= 0.05;
  s.detail = fmt("Original %.4f J, Ours %.4f J, AdderNet %.4f J", original, ours, adder);
  return s;
}

Suite overhead_suite(const OpCostTable& t) {
  Suite s{"quantizer overhead"};
  const QuantOverhead q = quant_overhead(16, 16, t);
  const double combined = combined_mac_cost(t, 16, 16);
  s.ok = std::abs(q.scaling_pj + q.rounding_pj - 0.034 * 256) < 1e-9 &&
         std::abs(combined / 0.195 - 1) <= 0.03;
  s.detail = fmt("16x16 block: %.4f pJ quantizer, %.5f pJ per MAC combined",
                 q.scaling_pj + q.rounding_pj, combined);
  return s;
}

Suite saturation_suite() {
  Suite s{"strict32 saturation"};
  // 16 top-code products of 2^28 each overflow a 32-bit accumulator.
  const std::vector<double> ones(16, 1.0);
  const QuantBlock a = als_potq(ones, {16}, BitWidth{5});
  const OpCounts before = op_census();
  const double clamped = mf_dot(a, a, {AccumulatorMode::strict32});
  const std::uint64_t sat = (op_census() - before).saturations;
  const double exact = mf_dot(a, a);
  s.ok = sat > 0 && clamped < exact && exact == 16.0;
  s.detail = fmt("%llu saturations, strict32 %.6g vs exact %.6g (expected)",
                 static_cast<unsigned long long>(sat), clamped, exact);
  return s;
}

}  // namespace

// ==================================================================== commands

int cmd_quantize(const QuantizeArgs& args, std::ostream& out) {
  const BitWidth bits{args.bits};
  std::vector<double> v =
      args.input ? read_numbers(*args.input) : draw_sample(args.sample, args.count, args.seed);
  if (v.empty()) throw InputError("no values to quantize");

  QuantStats qs;
  const QuantBlock q = als_potq(v, {v.size()}, bits, {}, &qs);
  const std::vector<double> d = dequantize_block(q);

  std::size_t sentinels = 0, clamped = 0, measured = 0;
  double max_err = 0.0, sum_err = 0.0;
  const double top =
      q.null_scale() ? 0.0 : std::ldexp(std::sqrt(2.0), bits.emax() + q.beta);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (q.is_zero(i)) {
      ++sentinels;
      continue;
    }
    if (std::abs(v[i]) >= top) {
      ++clamped;
      continue;
    }
    const double e = std::abs(d[i] - v[i]) / std::abs(v[i]);
    max_err = std::max(max_err, e);
    sum_err += e;
    ++measured;
  }
  const double n = static_cast<double>(v.size());
  out << "source: " << (args.input ? args.input->string() : args.sample + " sample") << "\n";
  out << fmt("elements: %zu\nbits: %d\n", v.size(), bits.bits());
  if (q.null_scale()) {
    out << "alpha: 0\nbeta: none (all zero)\n";
  } else {
    out << fmt("alpha: %.6g\nbeta: %d\n", compute_alpha(v, bits), q.beta);
  }
  out << fmt("zero_sentinel_fraction: %.6f\n", static_cast<double>(sentinels) / n);
  out << fmt("clamp_fraction: %.6f\n", static_cast<double>(clamped) / n);
  out << fmt("max_rel_error: %.6f\n", max_err);
  out << fmt("mean_rel_error: %.6f\n", measured ? sum_err / static_cast<double>(measured) : 0.0);
  out << fmt("bound: %.6f (%s)\n", std::sqrt(2.0) - 1.0,
             max_err <= std::sqrt(2.0) - 1.0 ? "holds" : "VIOLATED");

  if (args.stats) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : v) {
      const double c = x - mean;
      m2 += c * c;
      m3 += c * c * c;
      m4 += c * c * c * c;
    }
    m2 /= n, m3 /= n, m4 /= n;
    const double sd = std::sqrt(m2);
    out << fmt("mean: %.6g\nstd: %.6g\n", mean, sd);
    out << fmt("skewness: %.4f\nkurtosis: %.4f\n", sd > 0 ? m3 / (sd * sd * sd) : 0.0,
               sd > 0 ? m4 / (m2 * m2) : 0.0);
    out << fmt("exact_zero_fraction: %.6f\n",
               static_cast<double>(std::count(v.begin(), v.end(), 0.0)) / n);
  }

  if (args.hist_bins > 0) {
    // log2|x| histogram, original against dequantized.
    double lo = INFINITY, hi = -INFINITY;
    for (double x : v) {
      if (x != 0) {
        lo = std::min(lo, std::log2(std::abs(x)));
        hi = std::max(hi, std::log2(std::abs(x)));
      }
    }
    if (!(lo <= hi)) {
      out << "histogram: no non-zero values\n";
      return kOk;
    }
    lo = std::floor(lo), hi = std::ceil(hi + 1e-9);
    const std::size_t bins = args.hist_bins;
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::size_t> ho(bins), hq(bins);
    auto bin = [&](double x) {
      const double t = (std::log2(std::abs(x)) - lo) / width;
      return std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, t)));
    };
    std::size_t qzero = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] != 0) ++ho[bin(v[i])];
      if (d[i] != 0) ++hq[bin(d[i])];
      else ++qzero;
    }
    const std::size_t peak = std::max(*std::max_element(ho.begin(), ho.end()),
                                      *std::max_element(hq.begin(), hq.end()));
    out << "histogram of log2|x| (o = original, q = dequantized)\n";
    for (std::size_t b = 0; b < bins; ++b) {
      const double a = lo + width * static_cast<double>(b);
      out << fmt("[%7.2f,%7.2f) o %8zu %-30s\n", a, a + width, ho[b], bar(ho[b], peak).c_str());
      out << fmt("%17s q %8zu %-30s\n", "", hq[b], bar(hq[b], peak).c_str());
    }
    out << fmt("dequantized zeros: %zu\n", qzero);
  }
  return kOk;
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
  RunConfig cfg = load_run_config(args.config);
  for (const auto& a : args.ablate) apply_ablation(cfg.train, a);
  if (args.fp32_baseline) cfg.train.fp32_baseline = true;
  const fs::path dir = args.out.value_or(cfg.output_dir);

  auto [train, test] = load_datasets(cfg.dataset);
  const std::size_t in_size = shape_size(cfg.network.input);
  if (train.example_size() != in_size) {
    throw InputError(fmt("dataset examples have %zu values, the network expects %zu",
                         train.example_size(), in_size));
  }
  if (test && test->example_size() != in_size) throw InputError("test split has a different example size");
  // Flat files feed conv nets too.
  train.example_shape = cfg.network.input;
  if (test) test->example_shape = cfg.network.input;

  Network net(cfg.network, cfg.train.network_options());
  for (const auto* d : {&train, test ? &*test : nullptr}) {
    if (!d) continue;
    for (int l : d->labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= net.num_classes()) {
        throw InputError(fmt("label %d outside the network's %zu classes", l, net.num_classes()));
      }
    }
  }
  Trainer trainer(net, cfg.train);

  std::vector<std::string> rows, timing;
  TrainState state;
  if (args.resume) {
    state = load_checkpoint(*args.resume, net);
    trainer.restore(state);
    rows = kept_rows(dir / "metrics.csv", state.epoch);
    timing = kept_rows(dir / "timing.csv", state.epoch);
    if (rows.size() != state.epoch) {
      throw InputError(fmt("%s holds %zu epochs, the checkpoint %zu",
                           (dir / "metrics.csv").string().c_str(), rows.size(), state.epoch));
    }
    if (!args.quiet) out << "resumed at epoch " << state.epoch << ", step " << state.step << "\n";
  } else {
    trainer.init_weights();
  }

  const auto mac = net.macs_per_example();
  OpCounts ops;
  std::uint64_t steps = 0, examples = 0;
  std::size_t ran = 0;
  const fs::path ckpt = dir / "checkpoint.mftc";
  for (std::size_t epoch = state.epoch; epoch < cfg.train.epochs; ++epoch) {
    if (args.stop_after && ran >= *args.stop_after) break;
    const EpochMetrics e = trainer.run_epoch(train, test ? &*test : nullptr);
    ++ran;
    ops += e.ops;
    steps += e.steps;
    examples += train.size();
    rows.push_back(metrics_row(e));
    timing.push_back(fmt("%zu,%.3f", e.epoch, e.wall_seconds));
    atomic_write(dir / "metrics.csv", join_csv("#schema=1\n", kMetricsHeader, rows));
    atomic_write(dir / "timing.csv", join_csv("", "epoch,wall_seconds", timing));
    const bool last = e.epoch == cfg.train.epochs || (args.stop_after && ran == *args.stop_after);
    if ((cfg.checkpoint_every && e.epoch % cfg.checkpoint_every == 0) || last) {
      save_checkpoint(ckpt, net, trainer.state());
    }
    if (!args.quiet) {
      out << fmt("epoch %zu  loss %.5f  train %.4f  test %.4f  g_zero %.4f  sat %llu  %.1fs\n",
                 e.epoch, e.train_loss, e.train_accuracy, e.test_accuracy, e.g_zero_fraction,
                 static_cast<unsigned long long>(e.saturations), e.wall_seconds);
    }
  }

  const json census = {
      {"schema", 1},
      {"epochs", ran},
      {"steps", steps},
      {"examples", examples},
      {"ops", ops_json(ops)},
      {"analytic_macs",
       {{"fw", static_cast<double>(mac.fw) * static_cast<double>(examples)},
        {"bw", static_cast<double>(mac.bw) * static_cast<double>(examples)}}},
      {"quantized", cfg.train.network_options().quantize},
  };
  atomic_write(dir / "census.json", census.dump(2) + "\n");
  if (!args.quiet) out << "wrote " << (dir / "metrics.csv").string() << "\n";
  return kOk;
}

int cmd_energy(const EnergyArgs& args, std::ostream& out) {
  const EnergyConfig ec = args.config ? load_energy_config(*args.config) : EnergyConfig{};

  std::vector<MethodProfile> profiles;
  if (args.methods.empty()) {
    profiles = ec.profiles;
  } else {
    for (const auto& m : args.methods) profiles.push_back(find_profile(ec.profiles, m));
  }

  WorkloadSpec w;
  if (args.workload == "resnet50") {
    w = WorkloadSpec::resnet50();
  } else {
    double macs = 0;
    const char* b = args.workload.data();
    const auto r = std::from_chars(b, b + args.workload.size(), macs);
    if (r.ec != std::errc() || r.ptr != b + args.workload.size()) {
      throw ConfigError("--workload takes resnet50 or a forward MAC count, got '" +
                        args.workload + "'");
    }
    w.fw_macs = macs;
  }
  w.bw_multiplier = args.bw_multiplier;
  if (args.block == 0) throw ConfigError("--block must be positive");
  if (args.block != 256) w.block_m = args.block, w.block_n = 1;
  w.validate();

  const CompareReport rep = compare_report(profiles, w, ec.table);
  std::string text = rep.text;
  const QuantOverhead q = quant_overhead(w.block_m, w.block_n, ec.table);
  text += fmt("quantizer per block of %zu: %.4f pJ scaling and rounding, %.2f pJ shift\n",
              w.block_m * w.block_n, q.scaling_pj + q.rounding_pj, q.shift_pj);
  text += fmt("MF-MAC with quantizer: %.5f pJ per MAC\n",
              combined_mac_cost(ec.table, w.block_m, w.block_n));

  if (args.from_census) {
    json j;
    try {
      j = json::parse(read_file(*args.from_census));
    } catch (const json::exception& e) {
      throw InputError(args.from_census->string() + ": " + e.what());
    }
    OpCounts ops;
    double fw = 0, bw = 0;
    try {
      ops = ops_from_json(j.at("ops"));
      fw = j.at("analytic_macs").at("fw").get<double>();
      bw = j.at("analytic_macs").at("bw").get<double>();
    } catch (const json::exception& e) {
      throw InputError(args.from_census->string() + ": " + e.what());
    }
    const CensusEnergy ce = price_census(ops, ec.table);
    const CensusEnergy gated = price_census(ops, ec.table, true);
    const MethodProfile& ours = find_profile(ec.profiles, "Ours");
    const double analytic = (fw * mac_cost(ours, Pass::fw, ec.table) +
                             bw * mac_cost(ours, Pass::bw, ec.table)) * 1e-12;
    text += "census from " + args.from_census->string() + "\n";
    text += fmt("  MAC slots %llu, multiplies %llu, saturations %llu\n",
                static_cast<unsigned long long>(ops.mac_slots),
                static_cast<unsigned long long>(ops.multiplies),
                static_cast<unsigned long long>(ops.saturations));
    text += fmt("  census MAC energy:   %.6g J\n", ce.mac_j());
    text += fmt("  analytic MAC energy: %.6g J\n", analytic);
    text += fmt("  relative difference: %.4f%%\n",
                analytic > 0 ? (ce.mac_j() / analytic - 1.0) * 100.0 : 0.0);
    text += fmt("  xor %.6g J, quantizer %.6g J, total %.6g J\n", ce.xor_j, ce.overhead_j(),
                ce.total_j());
    text += fmt("  with zero gating: MAC %.6g J, total %.6g J\n", gated.mac_j(), gated.total_j());
  }

  out << text;
  if (args.out) {
    atomic_write(*args.out / "energy.csv", rep.csv);
    atomic_write(*args.out / "energy.txt", text);
  }
  return kOk;
}

int cmd_compare(const CompareArgs& args, std::ostream& out) {
  const MetricsFile a = read_metrics(args.a), b = read_metrics(args.b);
  const double acc_a = a.test_accuracy.back(), acc_b = b.test_accuracy.back();
  const double gap = (acc_a - acc_b) * 100.0;
  const bool unstable = non_monotone_tail(b.train_loss);
  const bool worse = b.train_loss.back() > a.train_loss.back();
  out << fmt("a: final test accuracy %.4f, train loss %.6g (%zu epochs)\n", acc_a,
             a.train_loss.back(), a.train_loss.size());
  out << fmt("b: final test accuracy %.4f, train loss %.6g (%zu epochs)\n", acc_b,
             b.train_loss.back(), b.train_loss.size());
  out << fmt("accuracy_gap_points: %.3f\n", gap);
  out << fmt("b_final_loss_higher: %s\n", worse ? "yes" : "no");
  out << fmt("b_non_monotone_tail: %s\n", unstable ? "yes" : "no");
  out << fmt("b_worse_or_unstable: %s\n", worse || unstable ? "yes" : "no");
  const bool within = std::abs(gap) <= args.max_gap_points;
  out << fmt("within %.2f points: %s\n", args.max_gap_points, within ? "yes" : "no");
  return within ? kOk : kFailed;
}

int cmd_selftest(const SelftestArgs& args, std::ostream& out) {
  const EnergyConfig ec = args.cost_table ? load_energy_config(*args.cost_table) : EnergyConfig{};
  std::vector<Suite> suites;
  suites.push_back(codec_suite());
  suites.push_back(product_suite());
  suites.push_back(oracle_suite(args.oracle_blocks, args.seed));
  suites.push_back(closure_suite(ec));
  suites.push_back(overhead_suite(ec.table));
  suites.push_back(saturation_suite());
  bool ok = true;
  for (const auto& s : suites) {
    out << fmt("%-20s %s  %s\n", s.name.c_str(), s.ok ? "PASS" : "FAIL", s.detail.c_str());
    ok = ok && s.ok;
  }
  out << (ok ? "selftest: all suites passed\n" : "selftest: FAILED\n");
  return ok ? kOk : kFailed;
}

}  // namespace mft::cli
