#include "slowcal/data.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <limits>

#include "slowcal/errors.hpp"
#include "slowcal/rng.hpp"

namespace slowcal {

void LabeledDataset::validate() const {
  if (labels.empty()) throw ConfigError("dataset is empty");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ConfigError(fmt::format("dataset has {} feature rows but {} labels", features.rows(), labels.size()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ConfigError(fmt::format("label {} outside [0, {})", y, classes));
    }
  }
  if (!features.allFinite()) throw ConfigError("dataset has non-finite features");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.classes = classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t n = 0; n < indices.size(); ++n) {
    out.features.row(static_cast<Eigen::Index>(n)) = features.row(static_cast<Eigen::Index>(indices[n]));
    out.labels.push_back(labels.at(indices[n]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partitioning

Partition dirichlet_partition(std::span<const int> labels, std::size_t classes, std::size_t machines,
                              double alpha, std::uint64_t seed) {
  if (machines < 1) throw ConfigError("dirichlet partition: M must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("dirichlet partition: alpha must be positive");

  Partition out;
  out.shards.resize(machines);

  // Class proportions p_c ~ Dirichlet(alpha), via normalized Gamma variates in log space.
  std::vector<std::vector<double>> cumulative(classes, std::vector<double>(machines));
  for (std::size_t c = 0; c < classes; ++c) {
    RandomStream stream(seed, StreamPurpose::partition, static_cast<std::uint32_t>(c), 0);
    std::vector<double> logs(machines);
    for (auto& v : logs) v = stream.log_gamma_variate(alpha);
    const double top = *std::max_element(logs.begin(), logs.end());
    double total = 0.0;
    for (auto& v : logs) {
      v = std::exp(v - top);
      total += v;
    }
    double running = 0.0;
    for (std::size_t m = 0; m < machines; ++m) {
      running += logs[m] / total;
      cumulative[c][m] = running;
    }
    cumulative[c].back() = 1.0;
  }

  RandomStream assign(seed, StreamPurpose::partition, 0, 1);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ConfigError(fmt::format("dirichlet partition: label {} outside [0, {})", y, classes));
    }
    const double u = assign.uniform();
    const auto& cdf = cumulative[static_cast<std::size_t>(y)];
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto m = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), machines - 1);
    out.shards[m].push_back(n);
  }

  // Repair: every machine needs at least one example.
  if (labels.size() >= machines) {
    for (std::size_t m = 0; m < machines; ++m) {
      if (!out.shards[m].empty()) continue;
      auto largest = std::max_element(out.shards.begin(), out.shards.end(),
                                      [](const auto& a, const auto& b) { return a.size() < b.size(); });
      out.shards[m].push_back(largest->back());
      largest->pop_back();
    }
  }
  return out;
}

std::vector<LabeledDataset> synth_clusters(const ClusterSpec& spec) {
  if (spec.classes < 2) throw ConfigError("synth clusters: C must be >= 2");
  if (spec.dimension < spec.classes) {
    throw ConfigError("synth clusters: need d >= C so class means sit on simplex vertices");
  }
  if (spec.machines < 1 || spec.examples_per_machine < 1) {
    throw ConfigError("synth clusters: M and examples per machine must be >= 1");
  }
  const std::size_t total = spec.machines * spec.examples_per_machine;
  const auto d = static_cast<Eigen::Index>(spec.dimension);

  LabeledDataset pool;
  pool.classes = spec.classes;
  pool.features.resize(static_cast<Eigen::Index>(total), d);
  pool.labels.resize(total);
  RandomStream noise(spec.seed, StreamPurpose::dataset);
  for (std::size_t n = 0; n < total; ++n) {
    const auto y = static_cast<int>(n % spec.classes);
    pool.labels[n] = y;
    auto row = pool.features.row(static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < d; ++j) row[j] = spec.spread * noise.normal();
    row[y] += spec.scale;
  }

  const Partition part = dirichlet_partition(pool.labels, spec.classes, spec.machines, spec.skew, spec.seed);
  std::vector<LabeledDataset> shards;
  shards.reserve(spec.machines);
  for (const auto& idx : part.shards) shards.push_back(pool.subset(idx));
  return shards;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

// Headers can claim sizes whose product overflows 64 bits, so compare wide.
void require_length(std::span<const std::uint8_t> bytes, unsigned __int128 needed, const char* what) {
  if (bytes.size() < needed) {
    throw LengthError(fmt::format("IDX {}: truncated input, need {} bytes but have {}", what, needed,
                                  bytes.size()));
  }
}

void require_magic(std::uint32_t actual, std::uint32_t expected, const char* what) {
  if (actual != expected) {
    throw FormatError(fmt::format("IDX {}: bad magic number, expected {} but got {}", what, expected, actual));
  }
}

}  // namespace

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  require_length(bytes, 4, "images");
  require_magic(read_be32(bytes, 0), kImageMagic, "images");
  require_length(bytes, 16, "images");
  const std::size_t n = read_be32(bytes, 4);
  IdxImages out;
  out.rows = read_be32(bytes, 8);
  out.cols = read_be32(bytes, 12);
  const std::size_t pixels = out.rows * out.cols;
  require_length(bytes, 16 + static_cast<unsigned __int128>(n) * pixels, "images");
  out.pixels.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
  const std::uint8_t* data = bytes.data() + 16;
  for (std::size_t i = 0; i < n * pixels; ++i) {
    out.pixels.data()[i] = static_cast<double>(data[i]) / 255.0;
  }
  return out;
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  require_length(bytes, 4, "labels");
  require_magic(read_be32(bytes, 0), kLabelMagic, "labels");
  require_length(bytes, 8, "labels");
  const std::size_t n = read_be32(bytes, 4);
  require_length(bytes, 8 + n, "labels");
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n)};
}

std::vector<std::uint8_t> serialize_idx_images(const IdxImages& images) {
  std::vector<std::uint8_t> out;
  const auto n = static_cast<std::size_t>(images.pixels.rows());
  out.reserve(16 + n * images.rows * images.cols);
  write_be32(out, kImageMagic);
  write_be32(out, static_cast<std::uint32_t>(n));
  write_be32(out, static_cast<std::uint32_t>(images.rows));
  write_be32(out, static_cast<std::uint32_t>(images.cols));
  for (Eigen::Index i = 0; i < images.pixels.size(); ++i) {
    const double v = std::clamp(images.pixels.data()[i], 0.0, 1.0);
    out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  return out;
}

std::vector<std::uint8_t> serialize_idx_labels(std::span<const int> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) out.push_back(static_cast<std::uint8_t>(y));
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

MnistData load_mnist(const std::filesystem::path& dir) {
  auto load = [&](const char* images, const char* labels) {
    LabeledDataset set;
    set.features = parse_idx_images(read_file_bytes(dir / images)).pixels;
    set.labels = parse_idx_labels(read_file_bytes(dir / labels));
    set.classes = 10;
    if (static_cast<std::size_t>(set.features.rows()) != set.labels.size()) {
      throw FormatError(fmt::format("{} and {} disagree on the example count", images, labels));
    }
    set.validate();
    return set;
  };
  return {load("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
          load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")};
}

}  // namespace slowcal
