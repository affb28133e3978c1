#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace slowcal {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// N examples, each a feature row and an integer label in [0, classes).
struct LabeledDataset {
  FeatureMatrix features;
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dimension() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws ConfigError on an empty set, an out-of-range label or a
  /// non-finite feature.
  void validate() const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

/// Per-machine index lists over [0, N).
struct Partition {
  std::vector<std::vector<std::size_t>> shards;

  std::size_t machines() const { return shards.size(); }
};

/// For each class c draw (p_c1..p_cM) ~ Dirichlet(alpha) and send each
/// class-c example to machine m with probability p_cm. Machines left empty
/// take one example from the currently largest machine (when N >= M).
Partition dirichlet_partition(std::span<const int> labels, std::size_t classes, std::size_t machines,
                              double alpha, std::uint64_t seed);

struct ClusterSpec {
  std::size_t machines = 8;
  std::size_t dimension = 10;
  std::size_t classes = 4;
  std::size_t examples_per_machine = 200;
  double spread = 0.2;
  double skew = 0.5;  // Dirichlet concentration for the per-machine class mix
  double scale = 1.0; // class means are scale * e_c
  std::uint64_t seed = 1;
};

/// Gaussian clusters around the vertices of a scaled simplex, split across
/// machines with Dirichlet class proportions.
std::vector<LabeledDataset> synth_clusters(const ClusterSpec& spec);

struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  FeatureMatrix pixels;  // N x (rows*cols), scaled to [0, 1]
};

/// IDX3 unsigned-byte image file: magic 2051, N, rows, cols (big endian).
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
/// IDX1 unsigned-byte label file: magic 2049, N.
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize_idx_images(const IdxImages& images);
std::vector<std::uint8_t> serialize_idx_labels(std::span<const int> labels);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

struct MnistData {
  LabeledDataset train;
  LabeledDataset test;
};

/// Loads the four canonical files (train-images-idx3-ubyte, ...) from `dir`.
MnistData load_mnist(const std::filesystem::path& dir);

}  // namespace slowcal
