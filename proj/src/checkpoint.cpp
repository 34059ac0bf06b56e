#include "mft/checkpoint.hpp"

#include <sstream>

#include "mft/binary_io.hpp"
#include "mft/errors.hpp"
#include "mft/fileutil.hpp"

namespace mft {

namespace {

struct NamedParam {
  std::string name;
  Param* param;
};

std::vector<NamedParam> named_params(Network& net) {
  std::vector<NamedParam> out;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (Param* p : layers[i]->params()) {
      out.push_back({"layer" + std::to_string(i) + "." + p->name, p});
    }
  }
  return out;
}

std::optional<QuantBlock> weight_block(MacLayer& m) {
  const QuantSettings& s = m.settings();
  if (!s.quantize) return std::nullopt;
  const auto& w = m.weight().value;
  const std::vector<double> w_eff =
      s.bias_correction ? weight_bias_correction(w.data) : w.data;
  const std::size_t rows = w.shape[0];
  return als_potq(w_eff, {rows, w.size() / rows}, s.bits_w, {s.layer_scaling});
}

}  // namespace

std::string encode_checkpoint(Network& net, const TrainState& state) {
  std::ostringstream out(std::ios::binary);
  out.write("MFTC", 4);
  io::put<std::uint32_t>(out, kCheckpointVersion);
  io::put<std::uint64_t>(out, state.epoch);
  io::put<std::uint64_t>(out, state.step);
  io::put_string(out, state.rng_state);

  const auto params = named_params(net);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    io::put_string(out, name);
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.shape.size()));
    for (auto d : p->value.shape) io::put<std::uint64_t>(out, d);
    for (double v : p->value.data) io::put<double>(out, v);
    for (double v : p->momentum) io::put<double>(out, v);
  }

  const auto macs = net.mac_layers();
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(macs.size()));
  for (MacLayer* m : macs) {
    io::put<double>(out, m->gamma());
    const auto block = weight_block(*m);
    io::put<std::uint8_t>(out, block ? 1 : 0);
    if (block) write_block(out, *block);
  }
  return std::move(out).str();
}

TrainState decode_checkpoint(std::string_view bytes, Network& net) {
  std::istringstream in(std::string(bytes), std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "MFTC") {
    throw InputError("not a checkpoint (bad magic)");
  }
  const auto version = io::get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  }
  TrainState st;
  st.epoch = io::get<std::uint64_t>(in);
  st.step = io::get<std::uint64_t>(in);
  st.rng_state = io::get_string(in);

  // Decode into scratch first so a bad file leaves the network untouched.
  const auto params = named_params(net);
  if (io::get<std::uint32_t>(in) != params.size()) {
    throw InputError("checkpoint parameter count does not match the network");
  }
  std::vector<std::pair<std::vector<double>, std::vector<double>>> loaded;
  for (const auto& [name, p] : params) {
    const std::string got = io::get_string(in);
    if (got != name) throw InputError("checkpoint has '" + got + "' where '" + name + "' was expected");
    const auto rank = io::get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = io::get<std::uint64_t>(in);
    if (shape != p->value.shape) {
      throw InputError("checkpoint shape " + shape_string(shape) + " for " + name +
                       " does not match " + shape_string(p->value.shape));
    }
    std::vector<double> values(p->value.size()), momentum(p->value.size());
    for (double& v : values) v = io::get<double>(in);
    for (double& v : momentum) v = io::get<double>(in);
    loaded.emplace_back(std::move(values), std::move(momentum));
  }
  const auto macs = net.mac_layers();
  if (io::get<std::uint32_t>(in) != macs.size()) {
    throw InputError("checkpoint layer count does not match the network");
  }
  std::vector<double> gammas;
  for (std::size_t i = 0; i < macs.size(); ++i) {
    gammas.push_back(io::get<double>(in));
    if (io::get<std::uint8_t>(in)) read_block(in);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw InputError("trailing bytes after checkpoint");

  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].param->value.data = std::move(loaded[i].first);
    params[i].param->momentum = std::move(loaded[i].second);
  }
  for (std::size_t i = 0; i < macs.size(); ++i) {
    try {
      macs[i]->set_gamma(gammas[i]);
    } catch (const ConfigError& e) {
      throw InputError(std::string("checkpoint gamma: ") + e.what());
    }
    macs[i]->clear_caches();
  }
  return st;
}

void save_checkpoint(const std::filesystem::path& path, Network& net, const TrainState& state) {
  atomic_write(path, encode_checkpoint(net, state));
}

TrainState load_checkpoint(const std::filesystem::path& path, Network& net) {
  return decode_checkpoint(read_file(path), net);
}

}  // namespace mft
