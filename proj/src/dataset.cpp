#include "mft/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "mft/errors.hpp"
#include "mft/fileutil.hpp"

namespace mft {

Tensor Dataset::batch(std::span<const std::size_t> index, std::vector<int>& labels_out) const {
  const std::size_t d = example_size();
  Shape shape{index.size()};
  shape.insert(shape.end(), example_shape.begin(), example_shape.end());
  Tensor t(std::move(shape));
  labels_out.resize(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::size_t src = index[i];
    if (src >= size()) throw InputError("batch index out of range");
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(src * d), d,
                t.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    labels_out[i] = labels[src];
  }
  return t;
}

void Dataset::validate() const {
  if (labels.empty()) throw InputError("dataset is empty");
  if (x.size() != labels.size() * example_size()) {
    throw InputError("dataset feature count does not match its labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InputError("dataset label " + std::to_string(y) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw InputError("dataset contains non-finite values");
  }
}

// --- IDX ------------------------------------------------------------------------

namespace {

std::size_t idx_elem_size(std::uint8_t type) {
  switch (type) {
    case 0x08: case 0x09: return 1;
    case 0x0B: return 2;
    case 0x0C: case 0x0D: return 4;
    case 0x0E: return 8;
    default: return 0;
  }
}

std::uint64_t read_be(const unsigned char* p, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v = (v << 8) | p[i];
  return v;
}

void write_be(std::string& out, std::uint64_t v, std::size_t n) {
  for (std::size_t i = n; i-- > 0;) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

IdxArray parse_idx(std::string_view bytes, const std::string& origin) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || p[0] != 0 || p[1] != 0) {
    throw InputError(origin + ": not an IDX file (bad magic)");
  }
  IdxArray a;
  a.type = p[2];
  const std::size_t esize = idx_elem_size(a.type);
  if (!esize) throw InputError(origin + ": unknown IDX element type " + std::to_string(a.type));
  const std::size_t rank = p[3];
  if (rank == 0) throw InputError(origin + ": IDX rank 0");
  if (bytes.size() < 4 + 4 * rank) throw InputError(origin + ": truncated IDX header");
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    a.dims.push_back(static_cast<std::size_t>(read_be(p + 4 + 4 * i, 4)));
    count *= a.dims.back();
  }
  const std::size_t offset = 4 + 4 * rank;
  if (bytes.size() != offset + count * esize) {
    throw InputError(origin + ": IDX payload is " + std::to_string(bytes.size() - offset) +
                     " bytes, header promises " + std::to_string(count * esize));
  }
  a.values.resize(count);
  const unsigned char* q = p + offset;
  for (std::size_t i = 0; i < count; ++i, q += esize) {
    const std::uint64_t raw = read_be(q, esize);
    switch (a.type) {
      case 0x08: a.values[i] = static_cast<double>(raw); break;
      case 0x09: a.values[i] = static_cast<std::int8_t>(raw); break;
      case 0x0B: a.values[i] = static_cast<std::int16_t>(raw); break;
      case 0x0C: a.values[i] = static_cast<std::int32_t>(raw); break;
      case 0x0D: a.values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(raw)); break;
      default: a.values[i] = std::bit_cast<double>(raw); break;
    }
  }
  return a;
}

IdxArray read_idx(const std::filesystem::path& path) {
  return parse_idx(read_file(path), path.string());
}

std::string encode_idx(const IdxArray& a) {
  const std::size_t esize = idx_elem_size(a.type);
  if (!esize) throw InputError("unknown IDX element type");
  if (a.dims.empty() || a.dims.size() > 255 || shape_size(a.dims) != a.values.size()) {
    throw InputError("IDX dims do not match the values");
  }
  std::string out{'\0', '\0', static_cast<char>(a.type), static_cast<char>(a.dims.size())};
  for (std::size_t d : a.dims) write_be(out, d, 4);
  for (double v : a.values) {
    std::uint64_t raw = 0;
    switch (a.type) {
      case 0x08: raw = static_cast<std::uint8_t>(v); break;
      case 0x09: raw = static_cast<std::uint8_t>(static_cast<std::int8_t>(v)); break;
      case 0x0B: raw = static_cast<std::uint16_t>(static_cast<std::int16_t>(v)); break;
      case 0x0C: raw = static_cast<std::uint32_t>(static_cast<std::int32_t>(v)); break;
      case 0x0D: raw = std::bit_cast<std::uint32_t>(static_cast<float>(v)); break;
      default: raw = std::bit_cast<std::uint64_t>(v); break;
    }
    write_be(out, raw, esize);
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  IdxArray img = read_idx(images);
  IdxArray lab = read_idx(labels);
  if (lab.dims.size() != 1) throw InputError(labels.string() + ": labels must be rank 1");
  if (img.dims[0] != lab.dims[0]) {
    throw InputError("IDX image count " + std::to_string(img.dims[0]) + " != label count " +
                     std::to_string(lab.dims[0]));
  }
  Dataset d;
  d.example_shape.assign(img.dims.begin() + 1, img.dims.end());
  if (d.example_shape.empty()) d.example_shape = {1};
  d.x = std::move(img.values);
  if (img.type == 0x08) {
    for (double& v : d.x) v /= 255.0;
  }
  int max_label = 0;
  for (double v : lab.values) {
    if (v < 0 || v != std::floor(v)) throw InputError(labels.string() + ": bad label value");
    d.labels.push_back(static_cast<int>(v));
    max_label = std::max(max_label, d.labels.back());
  }
  d.classes = static_cast<std::size_t>(max_label) + 1;
  d.validate();
  return d;
}

// --- CSV ------------------------------------------------------------------------

namespace {

double parse_number(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError(where + ": cannot parse '" + std::string(s) + "' as a number");
  }
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  if (options.header) {
    std::getline(in, line);
    ++line_no;
  }
  Dataset d;
  std::size_t columns = 0;
  int max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::vector<double> row;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      row.push_back(parse_number(rest.substr(0, comma), where));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!columns) {
      columns = row.size();
      if (columns < 2) throw InputError(where + ": need a label and at least one feature");
    } else if (row.size() != columns) {
      throw InputError(where + ": expected " + std::to_string(columns) + " columns, got " +
                       std::to_string(row.size()));
    }
    const int c = options.label_column;
    const std::size_t lc = c < 0 ? columns - static_cast<std::size_t>(-c) : static_cast<std::size_t>(c);
    if (lc >= columns) throw InputError(where + ": label column out of range");
    const double y = row[lc];
    if (y < 0 || y != std::floor(y)) throw InputError(where + ": label must be a non-negative integer");
    d.labels.push_back(static_cast<int>(y));
    max_label = std::max(max_label, d.labels.back());
    for (std::size_t j = 0; j < columns; ++j) {
      if (j != lc) d.x.push_back(row[j]);
    }
  }
  if (!columns) throw InputError(path.string() + ": no data rows");
  d.example_shape = {columns - 1};
  d.classes = static_cast<std::size_t>(max_label) + 1;
  d.validate();
  return d;
}

// --- synthetic ------------------------------------------------------------------

std::pair<Dataset, Dataset> make_clusters(const ClusterSpec& spec, std::size_t n_train,
                                          std::size_t n_test) {
  if (!spec.dim || spec.classes < 2) throw ConfigError("clusters need dim > 0 and >= 2 classes");
  if (!(spec.separation > 0) || !(spec.noise > 0)) {
    throw ConfigError("cluster separation and noise must be positive");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> centres(spec.classes * spec.dim);
  for (double& c : centres) c = spec.separation * unit(rng);

  auto sample = [&](std::size_t n) {
    Dataset d;
    d.example_shape = {spec.dim};
    d.classes = spec.classes;
    d.x.resize(n * spec.dim);
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = i % spec.classes;
      d.labels[i] = static_cast<int>(k);
      for (std::size_t j = 0; j < spec.dim; ++j) {
        d.x[i * spec.dim + j] = centres[k * spec.dim + j] + spec.noise * unit(rng);
      }
    }
    return d;
  };
  Dataset train = sample(n_train);
  Dataset test = sample(n_test);
  return {std::move(train), std::move(test)};
}

std::vector<double> read_numbers(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 4 && bytes[0] == '\0' && bytes[1] == '\0') {
    return parse_idx(bytes, path.string()).values;
  }
  std::vector<double> out;
  std::size_t line_no = 1;
  std::size_t i = 0;
  while (i < bytes.size()) {
    const char c = bytes[i];
    if (c == '\n') ++line_no;
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == ',') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < bytes.size() && !std::strchr(" \t\n\r,", bytes[j])) ++j;
    out.push_back(parse_number(std::string_view(bytes).substr(i, j - i),
                               path.string() + ":" + std::to_string(line_no)));
    i = j;
  }
  if (out.empty()) throw InputError(path.string() + ": no numbers");
  for (double v : out) {
    if (!std::isfinite(v)) throw InputError(path.string() + ": non-finite value");
  }
  return out;
}

}  // namespace mft
