#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mft/tensor.hpp"

namespace mft {

struct Dataset {
  Shape example_shape;
  std::vector<double> x;  // examples back to back
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t example_size() const { return shape_size(example_shape); }
  // Gathers the listed examples into one [n x example_shape] tensor.
  Tensor batch(std::span<const std::size_t> index, std::vector<int>& labels_out) const;
  void validate() const;
};

// IDX: 2 zero bytes, a type code, a rank byte, big-endian u32 dims, then
// big-endian elements. Unsigned-byte images are scaled to [0, 1].
struct IdxArray {
  std::uint8_t type = 0x08;
  Shape dims;
  std::vector<double> values;
};
IdxArray read_idx(const std::filesystem::path& path);
IdxArray parse_idx(std::string_view bytes, const std::string& origin = "<memory>");
std::string encode_idx(const IdxArray& array);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// CSV with an optional header row; one column holds integer labels.
struct CsvOptions {
  bool header = true;
  int label_column = 0;  // negative counts from the end
};
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

// Gaussian class clusters: per-class centres drawn from N(0, separation^2),
// examples are centre + N(0, noise^2) per coordinate.
struct ClusterSpec {
  std::size_t dim = 784;
  std::size_t classes = 10;
  double separation = 0.1;
  double noise = 1.0;
  std::uint64_t seed = 1;
};
// Train and test splits share the same centres.
std::pair<Dataset, Dataset> make_clusters(const ClusterSpec& spec, std::size_t n_train,
                                          std::size_t n_test);

// Free-form tensor file for inspection tools: IDX, or whitespace/comma
// separated numbers.
std::vector<double> read_numbers(const std::filesystem::path& path);

}  // namespace mft
