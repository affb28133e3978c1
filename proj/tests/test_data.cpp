#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "slowcal/data.hpp"
#include "slowcal/errors.hpp"

using namespace slowcal;

namespace {

std::vector<int> balanced_labels(std::size_t n, std::size_t classes) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  return labels;
}

void check_bijection(const Partition& p, std::size_t n) {
  std::vector<std::size_t> all;
  for (const auto& s : p.shards) all.insert(all.end(), s.begin(), s.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(n);
  std::iota(expected.begin(), expected.end(), std::size_t{0});
  CHECK(all == expected);
}

}  // namespace

TEST_CASE("dirichlet partition basics") {
  const auto labels = balanced_labels(1000, 10);
  const auto one = dirichlet_partition(labels, 10, 1, 0.1, 3);
  REQUIRE(one.machines() == 1);
  CHECK(one.shards[0].size() == 1000);

  const auto a = dirichlet_partition(labels, 10, 16, 0.1, 3);
  const auto b = dirichlet_partition(labels, 10, 16, 0.1, 3);
  CHECK(a.shards == b.shards);
  CHECK(a.shards != dirichlet_partition(labels, 10, 16, 0.1, 4).shards);
  check_bijection(a, 1000);
  for (const auto& s : a.shards) CHECK(!s.empty());

  // fewer examples than machines: some machines stay empty, nothing is lost
  const auto tiny = dirichlet_partition(balanced_labels(3, 2), 2, 5, 0.1, 1);
  check_bijection(tiny, 3);
}

TEST_CASE("dirichlet partition: large concentration reproduces the global class mix") {
  const std::size_t n = 100000, m = 10, c = 10;
  const auto labels = balanced_labels(n, c);
  const auto p = dirichlet_partition(labels, c, m, 1e6, 7);
  // Distance between the machine's class histogram and the global one,
  // relative to the global histogram's norm.
  for (const auto& shard : p.shards) {
    double diff = 0.0, norm = 0.0;
    std::vector<double> hist(c, 0.0);
    for (auto i : shard) hist[static_cast<std::size_t>(labels[i])] += 1.0;
    for (double h : hist) {
      diff += std::pow(h / static_cast<double>(shard.size()) - 0.1, 2);
      norm += 0.1 * 0.1;
    }
    CHECK(std::sqrt(diff / norm) <= 0.05);
  }
}

TEST_CASE("dirichlet partition: alpha = 0.1 concentrates machines on few classes") {
  // 60000 balanced labels over 10 classes stand in for the MNIST train labels.
  const auto labels = balanced_labels(60000, 10);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = dirichlet_partition(labels, 10, 16, 0.1, seed);
    int concentrated = 0;
    for (const auto& shard : p.shards) {
      std::vector<double> hist(10, 0.0);
      for (auto i : shard) hist[static_cast<std::size_t>(labels[i])] += 1.0;
      std::sort(hist.rbegin(), hist.rend());
      if ((hist[0] + hist[1]) >= 0.8 * static_cast<double>(shard.size())) ++concentrated;
    }
    CHECK(concentrated >= 8);
  }
}

TEST_CASE("synthetic clusters") {
  ClusterSpec spec;
  const auto a = synth_clusters(spec);
  const auto b = synth_clusters(spec);
  REQUIRE(a.size() == spec.machines);
  std::size_t total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].features == b[i].features);
    CHECK(a[i].labels == b[i].labels);
    CHECK_NOTHROW(a[i].validate());
    total += a[i].size();
  }
  CHECK(total == spec.machines * spec.examples_per_machine);

  // huge concentration: every machine sees roughly the same class mix
  spec.skew = 1e6;
  spec.examples_per_machine = 2000;
  for (const auto& shard : synth_clusters(spec)) {
    std::vector<double> hist(spec.classes, 0.0);
    for (int y : shard.labels) hist[static_cast<std::size_t>(y)] += 1.0;
    for (double h : hist) CHECK(h / static_cast<double>(shard.size()) == doctest::Approx(0.25).epsilon(0.2));
  }

  spec.classes = 1;
  CHECK_THROWS_AS(synth_clusters(spec), ConfigError);
}

TEST_CASE("labeled dataset validation and subsets") {
  LabeledDataset d;
  d.classes = 2;
  d.features.resize(3, 2);
  d.features << 1, 2, 3, 4, 5, 6;
  d.labels = {0, 1, 1};
  CHECK_NOTHROW(d.validate());
  const std::vector<std::size_t> idx = {2, 0};
  const auto s = d.subset(idx);
  CHECK(s.labels == std::vector<int>{1, 0});
  CHECK(s.features(0, 1) == 6);
  d.labels[1] = 2;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.labels[1] = 1;
  d.features(1, 1) = std::nan("");
  CHECK_THROWS_AS(d.validate(), ConfigError);
  LabeledDataset empty;
  empty.classes = 2;
  CHECK_THROWS_AS(empty.validate(), ConfigError);
}

TEST_CASE("IDX round trip and error reporting") {
  std::vector<std::uint8_t> images = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3};
  for (int i = 0; i < 12; ++i) images.push_back(static_cast<std::uint8_t>(i * 21));
  const auto parsed = parse_idx_images(images);
  CHECK(parsed.rows == 2);
  CHECK(parsed.cols == 3);
  CHECK(parsed.pixels.rows() == 2);
  CHECK(parsed.pixels(1, 5) == doctest::Approx(231.0 / 255.0));
  CHECK(serialize_idx_images(parsed) == images);

  const std::vector<std::uint8_t> labels = {0, 0, 8, 1, 0, 0, 0, 4, 7, 0, 9, 3};
  const auto lab = parse_idx_labels(labels);
  CHECK(lab == std::vector<int>{7, 0, 9, 3});
  CHECK(serialize_idx_labels(lab) == labels);

  CHECK_THROWS_AS(parse_idx_images(std::vector<std::uint8_t>{1, 2, 3}), LengthError);
  CHECK_THROWS_AS(parse_idx_labels(std::vector<std::uint8_t>{1, 2, 3}), LengthError);
  auto truncated = images;
  truncated.pop_back();
  CHECK_THROWS_WITH_AS(parse_idx_images(truncated), doctest::Contains("need 28 bytes but have 27"), LengthError);
  CHECK_THROWS_WITH_AS(parse_idx_images(labels), doctest::Contains("expected 2051 but got 2049"), FormatError);
  CHECK_THROWS_WITH_AS(parse_idx_labels(images), doctest::Contains("expected 2049 but got 2051"), FormatError);

  // a header claiming an absurd size must not overflow the length check
  std::vector<std::uint8_t> huge = {0, 0, 8, 3, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff};
  CHECK_THROWS_AS(parse_idx_images(huge), LengthError);
}

TEST_CASE("MNIST directory loading") {
  const auto dir = std::filesystem::temp_directory_path() / "slowcal_test_idx";
  std::filesystem::create_directories(dir);
  IdxImages img;
  img.rows = 2;
  img.cols = 2;
  img.pixels = FeatureMatrix::Constant(3, 4, 1.0);
  const std::vector<int> labels = {1, 2, 9};
  auto write = [&](const char* name, const std::vector<std::uint8_t>& bytes) {
    std::ofstream(dir / name, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                      static_cast<std::streamsize>(bytes.size()));
  };
  write("train-images-idx3-ubyte", serialize_idx_images(img));
  write("train-labels-idx1-ubyte", serialize_idx_labels(labels));
  write("t10k-images-idx3-ubyte", serialize_idx_images(img));
  write("t10k-labels-idx1-ubyte", serialize_idx_labels(labels));
  const auto data = load_mnist(dir);
  CHECK(data.train.size() == 3);
  CHECK(data.train.classes == 10);
  CHECK(data.test.labels == labels);

  std::filesystem::remove(dir / "t10k-labels-idx1-ubyte");
  CHECK_THROWS(load_mnist(dir));
  std::filesystem::remove_all(dir);
}
