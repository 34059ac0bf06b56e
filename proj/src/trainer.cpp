#include "mft/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mft/errors.hpp"

namespace mft {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

double fraction(std::uint64_t a, std::uint64_t b) {
  return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be > 0");
  if (!(lr_decay > 0) || lr_decay > 1) throw ConfigError("lr_decay must be in (0, 1]");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
  for (int b : {arithmetic.bits_w, arithmetic.bits_a, arithmetic.bits_g,
                arithmetic.last_layer_bits_g}) {
    BitWidth{b};
  }
  ClipParam{arithmetic.gamma};
}

NetworkOptions TrainConfig::network_options() const {
  NetworkOptions o = arithmetic;
  if (no_als_scaling) {
    o.layer_scaling = false;
    // The wider last-layer gradient is part of the scaled scheme.
    o.last_layer_bits_g = o.bits_g;
  }
  if (no_wbc) o.bias_correction = false;
  if (no_prc) o.clipping = false;
  if (fp32_baseline) {
    o.quantize = false;
    o.bias_correction = false;
    o.clipping = false;
  }
  return o;
}

double TrainConfig::lr_for_epoch(std::size_t epoch) const {
  double r = lr;
  for (std::size_t e : lr_decay_epochs) {
    if (epoch >= e) r *= lr_decay;
  }
  return r;
}

bool non_monotone_tail(std::span<const double> losses, std::size_t window) {
  if (window < 2 || losses.size() < window) return false;
  for (std::size_t i = losses.size() - window + 1; i < losses.size(); ++i) {
    if (!(losses[i] < losses[i - 1])) return true;
  }
  return false;
}

Trainer::Trainer(Network& net, TrainConfig config)
    : net_(net), config_(std::move(config)), rng_(stream(config_.seed, 2)) {
  config_.validate();
}

void Trainer::init_weights() {
  auto rng = stream(config_.seed, 1);
  net_.init_weights(config_.init, rng);
}

StepMetrics Trainer::train_step(const Tensor& x, std::span<const int> labels,
                                const Tensor* targets) {
  const OpCounts before = op_census();
  const long step = static_cast<long>(step_);
  StepMetrics m;
  try {
    const Tensor out = net_.forward(x);
    LossResult lr = net_.loss(out, labels, targets);
    if (!std::isfinite(lr.loss)) throw TrainingFault("non-finite loss", step);
    net_.backward(lr.grad);
    m.loss = lr.loss;
    m.correct = lr.correct;
    m.count = x.rows();
  } catch (const TrainingFault& f) {
    net_.clear_caches();
    throw TrainingFault(f.what(), step, f.layer());
  }

  const double rate = config_.lr_for_epoch(epoch_);
  for (Param* p : net_.params()) {
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      const double g = p->grad[i];
      if (!std::isfinite(g)) {
        net_.clear_caches();
        throw TrainingFault("non-finite gradient for " + p->name, step);
      }
      p->momentum[i] = config_.momentum * p->momentum[i] + g;
      p->value.data[i] -= rate * p->momentum[i];
    }
    if (!p->value.all_finite()) throw TrainingFault("non-finite " + p->name, step);
  }
  net_.after_update();
  net_.clear_caches();
  ++step_;
  m.ops = op_census() - before;
  m.sentinels = net_.take_sentinel_counts();
  return m;
}

EvalMetrics Trainer::evaluate(const Dataset& data) {
  EvalMetrics r;
  std::vector<std::size_t> index;
  std::vector<int> labels;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += config_.batch_size) {
    const std::size_t end = std::min(data.size(), start + config_.batch_size);
    index.resize(end - start);
    std::iota(index.begin(), index.end(), start);
    const Tensor x = data.batch(index, labels);
    const Tensor out = net_.forward(x);
    const LossResult lr = net_.loss(out, labels);
    r.loss += lr.loss * static_cast<double>(index.size());
    correct += lr.correct;
    net_.clear_caches();
  }
  net_.take_sentinel_counts();
  r.loss /= static_cast<double>(data.size());
  r.accuracy = fraction(correct, data.size());
  return r;
}

EpochMetrics Trainer::run_epoch(const Dataset& train, const Dataset* test) {
  const auto t0 = std::chrono::steady_clock::now();
  EpochMetrics e;
  e.epoch = epoch_ + 1;
  e.lr = config_.lr_for_epoch(epoch_);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  if (config_.shuffle) std::shuffle(order.begin(), order.end(), rng_);

  SentinelCounts sc;
  std::size_t correct = 0;
  std::vector<int> labels;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    const Tensor x = train.batch(idx, labels);
    const StepMetrics m = train_step(x, labels);
    e.train_loss += m.loss * static_cast<double>(m.count);
    correct += m.correct;
    e.ops += m.ops;
    sc += m.sentinels;
    ++e.steps;
  }
  e.train_loss /= static_cast<double>(train.size());
  e.train_accuracy = fraction(correct, train.size());
  e.saturations = e.ops.saturations;
  e.w_zero_fraction = fraction(sc.w_zero, sc.w_total);
  e.a_zero_fraction = fraction(sc.a_zero, sc.a_total);
  e.g_zero_fraction = fraction(sc.g_zero, sc.g_total);
  ++epoch_;
  if (test) {
    const EvalMetrics ev = evaluate(*test);
    e.test_loss = ev.loss;
    e.test_accuracy = ev.accuracy;
  }
  e.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return e;
}

TrainState Trainer::state() const {
  std::ostringstream os;
  os << rng_;
  return {epoch_, step_, os.str()};
}

void Trainer::restore(const TrainState& s) {
  std::istringstream is(s.rng_state);
  std::mt19937_64 rng;
  is >> rng;
  if (is.fail()) throw InputError("checkpoint carries an unreadable RNG state");
  rng_ = rng;
  epoch_ = s.epoch;
  step_ = s.step;
}

}  // namespace mft
