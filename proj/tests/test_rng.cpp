#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "slowcal/rng.hpp"

using namespace slowcal;

TEST_CASE("philox4x32-10 known-answer vectors") {
  for (const auto& v : oracles::philox_vectors()) {
    CHECK(philox4x32(v.ctr, v.key) == v.out);
  }
}

TEST_CASE("streams are pure functions of their identity") {
  RandomStream a(42, StreamPurpose::gradient_noise, 1, 2, 3);
  RandomStream b(42, StreamPurpose::gradient_noise, 1, 2, 3);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RandomStream c(42, StreamPurpose::gradient_noise, 1, 2, 4);
  RandomStream d(42, StreamPurpose::example_index, 1, 2, 3);
  RandomStream e(43, StreamPurpose::gradient_noise, 1, 2, 3);
  RandomStream f(42, StreamPurpose::gradient_noise, 1, 2, 3);
  const auto first = f.next_u64();
  CHECK(c.next_u64() != first);
  CHECK(d.next_u64() != first);
  CHECK(e.next_u64() != first);
}

TEST_CASE("sample keys map to distinct streams") {
  std::set<std::uint64_t> seen;
  for (std::uint32_t m = 0; m < 4; ++m) {
    for (std::uint32_t r = 0; r < 4; ++r) {
      for (std::uint32_t k = 0; k < 4; ++k) {
        RandomStream s(SampleKey{9, m, r, k}, StreamPurpose::gradient_noise);
        seen.insert(s.next_u64());
      }
    }
  }
  CHECK(seen.size() == 64);
}

TEST_CASE("uniform and normal moments") {
  RandomStream s(1, StreamPurpose::problem);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = s.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(std::fabs(su / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
  CHECK(std::fabs(sn / n) < 4 / std::sqrt(n));
  CHECK(std::fabs(sn2 / n - 1.0) < 4 * std::sqrt(2.0 / n));
}

TEST_CASE("uniform_index is unbiased over a non power of two range") {
  RandomStream s(5, StreamPurpose::example_index);
  std::array<int, 7> counts{};
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[s.uniform_index(7)];
  for (int c : counts) CHECK(std::fabs(c - n / 7.0) < 4 * std::sqrt(n / 7.0));
  CHECK(s.uniform_index(1) == 0);
}

TEST_CASE("gamma variates have the right mean, including tiny shapes") {
  for (double shape : {0.1, 1.0, 3.5}) {
    RandomStream s(11, StreamPurpose::partition, static_cast<std::uint32_t>(shape * 10));
    const int n = 100000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
      const double g = std::exp(s.log_gamma_variate(shape));
      sum += g;
      sum2 += g * g;
    }
    // Gamma(k, 1): mean k, variance k
    CHECK(std::fabs(sum / n - shape) < 4 * std::sqrt(shape / n));
  }
  RandomStream tiny(3, StreamPurpose::partition);
  for (int i = 0; i < 1000; ++i) CHECK(std::isfinite(tiny.log_gamma_variate(1e-3)));
}
