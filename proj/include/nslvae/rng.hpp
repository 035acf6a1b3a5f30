#pragma once

#include <cstdint>
#include <vector>

namespace nslvae {

// Portable deterministic generator (xoshiro256**, seeded through splitmix64).
// Distributions are implemented here rather than taken from <random> so that
// the produced streams do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer on [0, bound).
  std::uint64_t below(std::uint64_t bound);
  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Derived seeds for one training run. A master seed fans out into independent
// streams with a fixed splitting rule.
struct RunSeeds {
  std::uint64_t init;
  std::uint64_t shuffle;
  std::uint64_t noise;
};

RunSeeds derive_run_seeds(std::uint64_t master_seed);

}  // namespace nslvae
