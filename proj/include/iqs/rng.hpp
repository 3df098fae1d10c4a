#pragma once

#include <cstdint>
#include <random>

namespace iqs {

// Stateless mixing step used to derive substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Substream lanes: arrivals must stay on their own lane so two policies fed the
// same (seed, replication) see identical arrival sequences regardless of how
// many tie-break draws each policy consumes.
enum class RngLane : std::uint64_t { Arrivals = 1, Policy = 2, Aux = 3 };

// One reproducible stream addressed by (master seed, replication, lane).
class RngStream {
 public:
  RngStream(std::uint64_t master, std::uint64_t replication, RngLane lane)
      : RngStream(master, replication, static_cast<std::uint64_t>(lane)) {}

  RngStream(std::uint64_t master, std::uint64_t replication, std::uint64_t lane) {
    std::uint64_t s = master;
    splitmix64(s);
    s ^= 0xD1342543DE82EF95ull * (replication + 1);
    splitmix64(s);
    s ^= 0xAF251AF3B0F025B5ull * (lane + 1);
    engine_.seed(splitmix64(s));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Unbiased integer in [0, bound). Own rejection loop so sequences do not
  // depend on the standard library's distribution internals.
  int uniform_int(int bound) {
    const std::uint64_t n = static_cast<std::uint64_t>(bound);
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t r = engine_();
    while (r > limit) r = engine_();
    return static_cast<int>(r % n);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace iqs
