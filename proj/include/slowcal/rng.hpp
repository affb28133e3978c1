#pragma once

#include <array>
#include <cstdint>

namespace slowcal {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// What a stream is used for. Folded into the key so that streams for
/// different purposes never overlap even with equal ids.
enum class StreamPurpose : std::uint32_t {
  gradient_noise = 1,
  example_index = 2,
  partition = 3,
  problem = 4,
  dataset = 5,
};

/// Identity of the sample z_t^i: a pure function of (seed, machine, round, step).
struct SampleKey {
  std::uint64_t seed = 0;
  std::uint32_t machine = 0;
  std::uint32_t round = 0;
  std::uint32_t step = 0;
};

/// A counter-based random stream. Every value it yields is a function of
/// (seed, purpose, ids, position) only, so draws never depend on thread
/// identity or scheduling order.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, StreamPurpose purpose, std::uint32_t id0 = 0,
               std::uint32_t id1 = 0, std::uint32_t id2 = 0);
  RandomStream(const SampleKey& key, StreamPurpose purpose)
      : RandomStream(key.seed, purpose, key.step, key.round, key.machine) {}

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform integer on [0, n); n > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  /// log of a Gamma(shape, 1) variate; stays finite for tiny shapes where the
  /// variate itself underflows.
  double log_gamma_variate(double shape);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace slowcal
