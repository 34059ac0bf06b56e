#include "mft/config.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>

#include "mft/errors.hpp"
#include "yaml_util.hpp"

namespace mft {

namespace fs = std::filesystem;

RunConfig default_run_config() {
  RunConfig c;
  c.network = NetworkSpec::mlp({784, 256, 10});
  c.dataset.clusters.separation = 0.15;
  c.dataset.clusters.seed = 7;
  return c;
}

namespace {

struct Ctx {
  std::string origin;
  fs::path base;

  fs::path path(const YAML::Node& n, const std::string& what) const {
    fs::path p = yaml::get<std::string>(n, origin, what);
    return p.is_relative() && !base.empty() ? base / p : p;
  }
};

template <class T>
T positive(const YAML::Node& n, const Ctx& c, const std::string& what) {
  const T v = yaml::get<T>(n, c.origin, what);
  if (!(v > 0)) yaml::fail(n, c.origin, what + " must be positive");
  return v;
}

LayerSpec parse_layer(const YAML::Node& n, const Ctx& c) {
  yaml::check_keys(n,
                   {"type", "in", "out", "in_channels", "out_channels", "kernel", "stride",
                    "padding", "bits_w", "bits_a", "bits_g", "gamma"},
                   c.origin, "layer");
  LayerSpec l;
  if (!n["type"]) yaml::fail(n, c.origin, "layer needs a type");
  l.kind = yaml::get<std::string>(n["type"], c.origin, "type");
  if (l.kind != "linear" && l.kind != "conv2d" && l.kind != "relu" && l.kind != "flatten") {
    yaml::fail(n["type"], c.origin, "unknown layer type '" + l.kind + "'");
  }
  const bool linear = l.kind == "linear", conv = l.kind == "conv2d";
  auto only = [&](const char* key, bool ok) {
    if (n[key] && !ok) yaml::fail(n[key], c.origin, std::string(key) + " does not apply to " + l.kind);
  };
  for (const char* k : {"in", "out"}) only(k, linear);
  for (const char* k : {"in_channels", "out_channels", "kernel", "stride", "padding"}) only(k, conv);
  for (const char* k : {"bits_w", "bits_a", "bits_g", "gamma"}) only(k, linear || conv);
  if (linear) {
    if (!n["in"] || !n["out"]) yaml::fail(n, c.origin, "linear layer needs in and out");
    l.in = positive<std::size_t>(n["in"], c, "in");
    l.out = positive<std::size_t>(n["out"], c, "out");
  }
  if (conv) {
    if (!n["in_channels"] || !n["out_channels"] || !n["kernel"]) {
      yaml::fail(n, c.origin, "conv2d layer needs in_channels, out_channels and kernel");
    }
    l.conv.in_channels = positive<std::size_t>(n["in_channels"], c, "in_channels");
    l.conv.out_channels = positive<std::size_t>(n["out_channels"], c, "out_channels");
    l.conv.kernel = positive<std::size_t>(n["kernel"], c, "kernel");
    if (n["stride"]) l.conv.stride = positive<std::size_t>(n["stride"], c, "stride");
    yaml::read(n, "padding", l.conv.padding, c.origin);
  }
  auto bits = [&](const char* key, std::optional<int>& out) {
    if (!n[key]) return;
    const int b = yaml::get<int>(n[key], c.origin, key);
    try {
      BitWidth{b};
    } catch (const ConfigError& e) {
      yaml::fail(n[key], c.origin, e.what());
    }
    out = b;
  };
  bits("bits_w", l.bits_w);
  bits("bits_a", l.bits_a);
  bits("bits_g", l.bits_g);
  if (n["gamma"]) {
    const double g = yaml::get<double>(n["gamma"], c.origin, "gamma");
    if (!(g > 0 && g <= 1)) yaml::fail(n["gamma"], c.origin, "gamma must be in (0, 1]");
    l.gamma = g;
  }
  return l;
}

NetworkSpec parse_network(const YAML::Node& n, const Ctx& c) {
  yaml::check_keys(n, {"mlp", "input", "layers", "loss"}, c.origin, "network");
  NetworkSpec s;
  if (n["mlp"]) {
    if (n["layers"] || n["input"]) yaml::fail(n, c.origin, "use either mlp or input+layers");
    s = NetworkSpec::mlp(yaml::get<std::vector<std::size_t>>(n["mlp"], c.origin, "mlp"));
  } else {
    if (!n["input"] || !n["layers"]) yaml::fail(n, c.origin, "network needs mlp or input+layers");
    s.input = yaml::get<std::vector<std::size_t>>(n["input"], c.origin, "input");
    if (!n["layers"].IsSequence()) yaml::fail(n["layers"], c.origin, "layers must be a list");
    for (const auto& l : n["layers"]) s.layers.push_back(parse_layer(l, c));
  }
  if (n["loss"]) {
    const auto loss = yaml::get<std::string>(n["loss"], c.origin, "loss");
    if (loss == "softmax_xent") s.loss = LossKind::softmax_xent;
    else if (loss == "mse") s.loss = LossKind::mse;
    else yaml::fail(n["loss"], c.origin, "loss must be softmax_xent or mse");
  }
  return s;
}

void parse_arithmetic(const YAML::Node& n, const Ctx& c, NetworkOptions& o) {
  yaml::check_keys(n,
                   {"quantize", "layer_scaling", "bias_correction", "clipping", "bits", "gamma",
                    "learn_gamma", "mask_grad_by_clip", "accumulator"},
                   c.origin, "arithmetic");
  yaml::read(n, "quantize", o.quantize, c.origin);
  yaml::read(n, "layer_scaling", o.layer_scaling, c.origin);
  yaml::read(n, "bias_correction", o.bias_correction, c.origin);
  yaml::read(n, "clipping", o.clipping, c.origin);
  yaml::read(n, "learn_gamma", o.learn_gamma, c.origin);
  yaml::read(n, "mask_grad_by_clip", o.mask_grad_by_clip, c.origin);
  if (const YAML::Node b = n["bits"]) {
    yaml::check_keys(b, {"w", "a", "g", "last_g"}, c.origin, "bits");
    for (auto [key, dst] : {std::pair{"w", &o.bits_w}, std::pair{"a", &o.bits_a},
                            std::pair{"g", &o.bits_g}, std::pair{"last_g", &o.last_layer_bits_g}}) {
      if (!b[key]) continue;
      *dst = yaml::get<int>(b[key], c.origin, std::string("bits.") + key);
      try {
        BitWidth{*dst};
      } catch (const ConfigError& e) {
        yaml::fail(b[key], c.origin, e.what());
      }
    }
  }
  if (n["gamma"]) {
    o.gamma = yaml::get<double>(n["gamma"], c.origin, "gamma");
    if (!(o.gamma > 0 && o.gamma <= 1)) yaml::fail(n["gamma"], c.origin, "gamma must be in (0, 1]");
  }
  if (n["accumulator"]) {
    const auto mode = yaml::get<std::string>(n["accumulator"], c.origin, "accumulator");
    if (mode == "wide") o.accumulator.mode = AccumulatorMode::wide;
    else if (mode == "strict32") o.accumulator.mode = AccumulatorMode::strict32;
    else yaml::fail(n["accumulator"], c.origin, "accumulator must be wide or strict32");
  }
}

void parse_train(const YAML::Node& n, const Ctx& c, TrainConfig& t) {
  yaml::check_keys(n,
                   {"epochs", "batch_size", "lr", "lr_decay_epochs", "lr_decay", "momentum",
                    "seed", "init", "shuffle"},
                   c.origin, "train");
  if (n["epochs"]) t.epochs = positive<std::size_t>(n["epochs"], c, "epochs");
  if (n["batch_size"]) t.batch_size = positive<std::size_t>(n["batch_size"], c, "batch_size");
  if (n["lr"]) t.lr = positive<double>(n["lr"], c, "lr");
  yaml::read(n, "lr_decay_epochs", t.lr_decay_epochs, c.origin);
  if (n["lr_decay"]) {
    t.lr_decay = yaml::get<double>(n["lr_decay"], c.origin, "lr_decay");
    if (!(t.lr_decay > 0 && t.lr_decay <= 1)) yaml::fail(n["lr_decay"], c.origin, "lr_decay must be in (0, 1]");
  }
  if (n["momentum"]) {
    t.momentum = yaml::get<double>(n["momentum"], c.origin, "momentum");
    if (!(t.momentum >= 0 && t.momentum < 1)) yaml::fail(n["momentum"], c.origin, "momentum must be in [0, 1)");
  }
  yaml::read(n, "seed", t.seed, c.origin);
  yaml::read(n, "shuffle", t.shuffle, c.origin);
  if (n["init"]) {
    const auto init = yaml::get<std::string>(n["init"], c.origin, "init");
    if (init == "untruncated_normal") t.init = InitKind::untruncated_normal;
    else if (init == "truncated_normal") t.init = InitKind::truncated_normal;
    else yaml::fail(n["init"], c.origin, "init must be untruncated_normal or truncated_normal");
  }
}

void parse_dataset(const YAML::Node& n, const Ctx& c, DatasetConfig& d) {
  yaml::check_keys(n,
                   {"kind", "train_size", "test_size", "dim", "classes", "separation", "noise",
                    "seed", "train_images", "train_labels", "test_images", "test_labels", "train",
                    "test", "header", "label_column"},
                   c.origin, "dataset");
  yaml::read(n, "kind", d.kind, c.origin);
  const bool synth = d.kind == "synthetic", idx = d.kind == "idx", csv = d.kind == "csv";
  if (!synth && !idx && !csv) yaml::fail(n["kind"], c.origin, "dataset kind must be synthetic, idx or csv");
  auto only = [&](std::initializer_list<const char*> keys, bool ok) {
    for (const char* k : keys) {
      if (n[k] && !ok) yaml::fail(n[k], c.origin, std::string(k) + " does not apply to a " + d.kind + " dataset");
    }
  };
  only({"train_size", "dim", "classes", "separation", "noise", "seed"}, synth);
  only({"test_size"}, synth);
  only({"train_images", "train_labels", "test_images", "test_labels"}, idx);
  only({"train", "test", "header", "label_column"}, csv);
  if (synth) {
    if (n["train_size"]) d.train_size = positive<std::size_t>(n["train_size"], c, "train_size");
    yaml::read(n, "test_size", d.test_size, c.origin);
    if (n["dim"]) d.clusters.dim = positive<std::size_t>(n["dim"], c, "dim");
    if (n["classes"]) d.clusters.classes = positive<std::size_t>(n["classes"], c, "classes");
    if (n["separation"]) d.clusters.separation = positive<double>(n["separation"], c, "separation");
    if (n["noise"]) d.clusters.noise = positive<double>(n["noise"], c, "noise");
    yaml::read(n, "seed", d.clusters.seed, c.origin);
    if (d.clusters.classes < 2) yaml::fail(n["classes"], c.origin, "need at least 2 classes");
  }
  if (idx) {
    if (!n["train_images"] || !n["train_labels"]) {
      yaml::fail(n, c.origin, "idx dataset needs train_images and train_labels");
    }
    d.train_images = c.path(n["train_images"], "train_images");
    d.train_labels = c.path(n["train_labels"], "train_labels");
    if (n["test_images"].IsDefined() != n["test_labels"].IsDefined()) {
      yaml::fail(n, c.origin, "give both test_images and test_labels or neither");
    }
    if (n["test_images"]) {
      d.test_images = c.path(n["test_images"], "test_images");
      d.test_labels = c.path(n["test_labels"], "test_labels");
    }
  }
  if (csv) {
    if (!n["train"]) yaml::fail(n, c.origin, "csv dataset needs train");
    d.train_csv = c.path(n["train"], "train");
    if (n["test"]) d.test_csv = c.path(n["test"], "test");
    yaml::read(n, "header", d.csv.header, c.origin);
    yaml::read(n, "label_column", d.csv.label_column, c.origin);
  }
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::string& origin,
                           const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  const Ctx c{origin, base_dir};
  RunConfig r = default_run_config();
  if (root.IsNull()) return r;
  yaml::check_keys(root, {"network", "train", "arithmetic", "ablations", "dataset", "energy", "output"},
                   origin, "config");
  if (root["network"]) r.network = parse_network(root["network"], c);
  if (root["train"]) parse_train(root["train"], c, r.train);
  if (root["arithmetic"]) parse_arithmetic(root["arithmetic"], c, r.train.arithmetic);
  if (const YAML::Node a = root["ablations"]) {
    if (!a.IsSequence()) yaml::fail(a, origin, "ablations must be a list");
    for (const auto& item : a) {
      const auto name = yaml::get<std::string>(item, origin, "ablation");
      if (name == "no_als_scaling") r.train.no_als_scaling = true;
      else if (name == "no_wbc") r.train.no_wbc = true;
      else if (name == "no_prc") r.train.no_prc = true;
      else yaml::fail(item, origin, "unknown ablation '" + name + "'");
    }
  }
  if (root["dataset"]) parse_dataset(root["dataset"], c, r.dataset);
  if (const YAML::Node e = root["energy"]) {
    yaml::check_keys(e, {"costs"}, origin, "energy");
    if (e["costs"]) apply_cost_overrides(r.costs, e["costs"], origin);
  }
  if (const YAML::Node o = root["output"]) {
    yaml::check_keys(o, {"dir", "checkpoint_every"}, origin, "output");
    // Relative to the working directory, unlike dataset paths.
    if (o["dir"]) r.output_dir = yaml::get<std::string>(o["dir"], origin, "output.dir");
    yaml::read(o, "checkpoint_every", r.checkpoint_every, origin);
  }

  // Shape errors surface here rather than mid-run.
  try {
    Network probe(r.network, r.train.network_options());
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": network: " + e.what());
  }
  return r;
}

RunConfig load_run_config(const fs::path& path) {
  const fs::path resolved = resolve_config_path(path);
  std::ifstream probe(resolved);
  if (!probe) throw InputError("cannot open config " + resolved.string());
  std::string text((std::istreambuf_iterator<char>(probe)), std::istreambuf_iterator<char>());
  return parse_run_config(text, resolved.string(), resolved.parent_path());
}

fs::path resolve_config_path(const fs::path& path) {
  if (fs::exists(path) || path.is_absolute()) return path;
  if (const char* dir = std::getenv(kConfigDirEnv); dir && *dir) {
    const fs::path alt = fs::path(dir) / path;
    if (fs::exists(alt)) return alt;
  }
  return path;
}

std::pair<Dataset, std::optional<Dataset>> load_datasets(const DatasetConfig& d) {
  if (d.kind == "synthetic") {
    auto [train, test] = make_clusters(d.clusters, d.train_size, d.test_size);
    std::optional<Dataset> t;
    if (d.test_size) t = std::move(test);
    return {std::move(train), std::move(t)};
  }
  if (d.kind == "idx") {
    Dataset train = load_idx(d.train_images, d.train_labels);
    std::optional<Dataset> test;
    if (!d.test_images.empty()) test = load_idx(d.test_images, d.test_labels);
    return {std::move(train), std::move(test)};
  }
  if (d.kind == "csv") {
    Dataset train = load_csv(d.train_csv, d.csv);
    std::optional<Dataset> test;
    if (!d.test_csv.empty()) test = load_csv(d.test_csv, d.csv);
    return {std::move(train), std::move(test)};
  }
  throw ConfigError("unknown dataset kind '" + d.kind + "'");
}

}  // namespace mft
