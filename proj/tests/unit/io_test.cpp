// Datasets, checkpoints, run configs and atomic files.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mft/checkpoint.hpp"
#include "mft/config.hpp"
#include "mft/dataset.hpp"
#include "mft/errors.hpp"
#include "mft/fileutil.hpp"

namespace mft {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mft_io_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

// ------------------------------------------------------------------ IDX

TEST(Idx, HandEncodedHeader) {
  // ubyte, rank 2, dims 2x3.
  const std::string bytes{"\x00\x00\x08\x02\x00\x00\x00\x02\x00\x00\x00\x03\x00\x01\x02\xff\x80\x10", 18};
  const IdxArray a = parse_idx(bytes);
  EXPECT_EQ(a.type, 0x08);
  EXPECT_EQ(a.dims, (Shape{2, 3}));
  EXPECT_EQ(a.values, (std::vector<double>{0, 1, 2, 255, 128, 16}));
}

TEST(Idx, BigEndianTypesRoundTrip) {
  for (std::uint8_t type : {0x08, 0x09, 0x0B, 0x0C, 0x0D, 0x0E}) {
    IdxArray a;
    a.type = type;
    a.dims = {2, 2};
    a.values = {1, 2, 3, 100};
    if (type == 0x09 || type == 0x0B || type == 0x0C || type == 0x0D || type == 0x0E) a.values[1] = -2;
    if (type == 0x0D || type == 0x0E) a.values[2] = 0.5;
    const IdxArray b = parse_idx(encode_idx(a));
    EXPECT_EQ(b.dims, a.dims);
    EXPECT_EQ(b.values, a.values) << int(type);
  }
  IdxArray i;
  i.type = 0x0C;
  i.dims = {1};
  i.values = {258};
  EXPECT_EQ(encode_idx(i).substr(8), std::string("\x00\x00\x01\x02", 4));
}

TEST(Idx, Malformed) {
  EXPECT_THROW(parse_idx(std::string("\x01\x00\x08\x01\x00\x00\x00\x01\x05", 9)), InputError);
  EXPECT_THROW(parse_idx(std::string("\x00\x00\x07\x01\x00\x00\x00\x01\x05", 9)), InputError);
  // Declares 2 elements, carries 1.
  EXPECT_THROW(parse_idx(std::string("\x00\x00\x08\x01\x00\x00\x00\x02\x05", 9)), InputError);
  EXPECT_THROW(parse_idx(std::string("\x00\x00\x08\x01\x00\x00\x00\x01\x05\x06", 10)), InputError);
  EXPECT_THROW(read_idx("/nonexistent.idx"), InputError);
}

TEST(Idx, LoadScalesImagesAndChecksCounts) {
  IdxArray img;
  img.dims = {2, 2, 2};
  img.values = {0, 255, 51, 102, 0, 0, 0, 255};
  IdxArray lab;
  lab.dims = {2};
  lab.values = {3, 7};
  const auto pi = scratch("img.idx"), pl = scratch("lab.idx");
  atomic_write(pi, encode_idx(img));
  atomic_write(pl, encode_idx(lab));
  const Dataset d = load_idx(pi, pl);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.example_shape, (Shape{2, 2}));
  EXPECT_DOUBLE_EQ(d.x[1], 1.0);
  EXPECT_DOUBLE_EQ(d.x[2], 0.2);
  EXPECT_EQ(d.labels, (std::vector<int>{3, 7}));
  lab.dims = {3};
  lab.values = {1, 2, 3};
  atomic_write(pl, encode_idx(lab));
  EXPECT_THROW(load_idx(pi, pl), InputError);
}

// ------------------------------------------------------------------ CSV

TEST(Csv, HeaderAndLabelColumn) {
  const auto p = scratch("t.csv");
  atomic_write(p, "a,b,label\n0.5,1,2\n-1,2.5,0\n");
  CsvOptions o;
  o.label_column = -1;
  const Dataset d = load_csv(p, o);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.example_shape, (Shape{2}));
  EXPECT_EQ(d.x, (std::vector<double>{0.5, 1, -1, 2.5}));
  EXPECT_EQ(d.labels, (std::vector<int>{2, 0}));
}

TEST(Csv, Errors) {
  const auto p = scratch("bad.csv");
  atomic_write(p, "1,2,3\n1,2\n");
  CsvOptions o;
  o.header = false;
  EXPECT_THROW(load_csv(p, o), InputError);
  atomic_write(p, "1,abc\n");
  EXPECT_THROW(load_csv(p, o), InputError);
  atomic_write(p, "1.5,2\n");
  EXPECT_THROW(load_csv(p, o), InputError);  // fractional label
  EXPECT_THROW(load_csv(scratch("missing.csv"), o), InputError);
}

// ------------------------------------------------------------- clusters

TEST(Clusters, SeededAndShared) {
  ClusterSpec s;
  s.dim = 8;
  s.classes = 3;
  auto [a, at] = make_clusters(s, 30, 9);
  auto [b, bt] = make_clusters(s, 30, 9);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(at.x, bt.x);
  EXPECT_EQ(a.labels[4], 1);
  EXPECT_EQ(a.classes, 3u);
  s.seed = 2;
  EXPECT_NE(make_clusters(s, 30, 9).first.x, a.x);
}

TEST(ReadNumbers, TextAndIdx) {
  const auto p = scratch("n.txt");
  atomic_write(p, "1 2.5\n-3, 4e-2\n");
  EXPECT_EQ(read_numbers(p), (std::vector<double>{1, 2.5, -3, 0.04}));
  atomic_write(p, "1 x\n");
  EXPECT_THROW(read_numbers(p), InputError);
}

// ------------------------------------------------------------- checkpoint

struct Trained {
  Network net{NetworkSpec::mlp({6, 5, 3}), NetworkOptions{}};
  Trainer trainer{net, TrainConfig{}};
  Trained() {
    trainer.init_weights();
    Tensor x({4, 6});
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = std::sin(0.7 * static_cast<double>(i));
    for (int s = 0; s < 3; ++s) trainer.train_step(x, std::vector<int>{0, 1, 2, 1});
  }
};

TEST(Checkpoint, RoundTripIsBitExact) {
  Trained a;
  const std::string bytes = encode_checkpoint(a.net, a.trainer.state());
  EXPECT_EQ(bytes.substr(0, 4), "MFTC");
  Network fresh(NetworkSpec::mlp({6, 5, 3}), NetworkOptions{});
  const TrainState st = decode_checkpoint(bytes, fresh);
  EXPECT_EQ(st.step, 3u);
  EXPECT_EQ(encode_checkpoint(fresh, st), bytes);
  for (std::size_t i = 0; i < a.net.params().size(); ++i) {
    EXPECT_EQ(a.net.params()[i]->value.data, fresh.params()[i]->value.data);
    EXPECT_EQ(a.net.params()[i]->momentum, fresh.params()[i]->momentum);
  }
}

TEST(Checkpoint, RefusesVersionShapeAndTruncation) {
  Trained a;
  std::string bytes = encode_checkpoint(a.net, a.trainer.state());
  Network other(NetworkSpec::mlp({6, 4, 3}), NetworkOptions{});
  EXPECT_THROW(decode_checkpoint(bytes, other), InputError);
  Network same(NetworkSpec::mlp({6, 5, 3}), NetworkOptions{});
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1), same), InputError);
  EXPECT_THROW(decode_checkpoint(bytes + "x", same), InputError);
  std::string v2 = bytes;
  v2[4] = 2;
  EXPECT_THROW(decode_checkpoint(v2, same), InputError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic, same), InputError);
}

TEST(Checkpoint, ResumedTrainingMatchesUninterrupted) {
  ClusterSpec cs;
  cs.dim = 10;
  cs.classes = 3;
  cs.separation = 0.5;
  auto [train, test] = make_clusters(cs, 96, 30);
  TrainConfig tc;
  tc.batch_size = 32;
  auto run = [&](Network& net, Trainer& t, int epochs) {
    std::vector<double> out;
    for (int e = 0; e < epochs; ++e) {
      const EpochMetrics m = t.run_epoch(train, &test);
      out.push_back(m.train_loss);
      out.push_back(m.test_accuracy);
    }
    (void)net;
    return out;
  };
  Network n1(NetworkSpec::mlp({10, 8, 3}), tc.network_options());
  Trainer t1(n1, tc);
  t1.init_weights();
  const auto full = run(n1, t1, 3);

  Network n2(NetworkSpec::mlp({10, 8, 3}), tc.network_options());
  Trainer t2(n2, tc);
  t2.init_weights();
  auto part = run(n2, t2, 1);
  const auto path = scratch("resume.mftc");
  save_checkpoint(path, n2, t2.state());

  Network n3(NetworkSpec::mlp({10, 8, 3}), tc.network_options());
  Trainer t3(n3, tc);
  t3.restore(load_checkpoint(path, n3));
  const auto rest = run(n3, t3, 2);
  part.insert(part.end(), rest.begin(), rest.end());
  EXPECT_EQ(part, full);
}

// ------------------------------------------------------------------ config

TEST(Config, DefaultsAndOverrides) {
  const RunConfig c = parse_run_config(
      "train:\n  epochs: 2\n  lr: 0.1\narithmetic:\n  bits: {g: 6}\n  accumulator: strict32\n"
      "ablations: [no_wbc]\n",
      "inline");
  EXPECT_EQ(c.train.epochs, 2u);
  EXPECT_EQ(c.train.lr, 0.1);
  EXPECT_EQ(c.train.arithmetic.bits_g, 6);
  EXPECT_EQ(c.train.arithmetic.accumulator.mode, AccumulatorMode::strict32);
  EXPECT_TRUE(c.train.no_wbc);
  EXPECT_EQ(c.dataset.train_size, 6144u);
  EXPECT_EQ(c.network.layers.size(), 3u);
}

TEST(Config, UnknownKeyReportsLine) {
  try {
    parse_run_config("train:\n  epochs: 2\n  learning_rate: 0.1\n", "run.yaml");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("run.yaml:3"), std::string::npos) << w;
    EXPECT_NE(w.find("learning_rate"), std::string::npos) << w;
  }
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse_run_config("arithmetic:\n  bits: {w: 8}\n", "x"), ConfigError);
  EXPECT_THROW(parse_run_config("arithmetic:\n  gamma: 0\n", "x"), ConfigError);
  EXPECT_THROW(parse_run_config("train:\n  epochs: -1\n", "x"), ConfigError);
  EXPECT_THROW(parse_run_config("train:\n  epochs: many\n", "x"), ConfigError);
  EXPECT_THROW(parse_run_config("ablations: [no_everything]\n", "x"), ConfigError);
  EXPECT_THROW(parse_run_config("dataset:\n  kind: csv\n  separation: 1\n", "x"), ConfigError);
  EXPECT_THROW(parse_run_config("network:\n  mlp: [4, 3]\n  input: [4]\n", "x"), ConfigError);
  EXPECT_THROW(parse_run_config("network:\n  input: [4]\n  layers:\n    - {type: linear, in: 5, out: 2}\n",
                                "x"),
               ConfigError);
  EXPECT_THROW(parse_run_config("energy:\n  costs: {xor: -1}\n", "x"), ConfigError);
  EXPECT_THROW(parse_run_config("train: [1, 2\n", "x"), ConfigError);
}

TEST(Config, ConvNetwork) {
  const RunConfig c = parse_run_config(
      "network:\n  input: [1, 6, 6]\n  layers:\n"
      "    - {type: conv2d, in_channels: 1, out_channels: 2, kernel: 3, padding: 1}\n"
      "    - {type: relu}\n    - {type: flatten}\n    - {type: linear, in: 72, out: 4, bits_g: 6}\n",
      "x");
  EXPECT_EQ(c.network.layers[0].conv.padding, 1u);
  EXPECT_EQ(c.network.layers[3].bits_g, 6);
}

TEST(Config, EnvDirectoryLookup) {
  const auto dir = scratch("cfgdir");
  fs::create_directories(dir);
  atomic_write(dir / "tiny.yaml", "train:\n  epochs: 1\n");
  ::setenv(kConfigDirEnv, dir.c_str(), 1);
  EXPECT_EQ(load_run_config("tiny.yaml").train.epochs, 1u);
  ::unsetenv(kConfigDirEnv);
  EXPECT_THROW(load_run_config("tiny-missing.yaml"), InputError);
}

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"mlp_synthetic.yaml", "mlp_idx.yaml", "small_cnn.yaml"}) {
    EXPECT_NO_THROW(load_run_config(fs::path(MFT_SOURCE_DIR) / "configs" / name)) << name;
  }
  EXPECT_NO_THROW(load_energy_config(fs::path(MFT_SOURCE_DIR) / "configs" / "energy_costs.yaml"));
}

// ------------------------------------------------------------------ files

TEST(AtomicWrite, ReplacesWholeFile) {
  const auto p = scratch("sub/dir/out.txt");
  atomic_write(p, "first");
  atomic_write(p, "second");
  EXPECT_EQ(read_file(p), "second");
  for (const auto& e : fs::directory_iterator(p.parent_path())) {
    EXPECT_EQ(e.path().filename(), "out.txt");
  }
  EXPECT_THROW(read_file(scratch("nope.txt")), InputError);
}

}  // namespace
}  // namespace mft
