#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace symcons {

/// Seeded random stream whose output is fully specified by this file
/// (the std:: distributions are implementation-defined, so they are not used).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  /// Normal(0, stddev) redrawn until |x| <= 2 * stddev.
  double truncated_normal(double stddev);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 mixing of (seed, stream) into an independent child seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace symcons
