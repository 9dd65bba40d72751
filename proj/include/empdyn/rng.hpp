#pragma once

#include <cmath>
#include <cstdint>

namespace empdyn {

// Counter-based 64-bit generator with independent streams.
// Output depends only on (seed, stream, counter), so per-subject streams can
// be drawn in any order and results are identical on every platform.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(derive_key(seed, stream)) {}

  std::uint64_t next_u64() { return mix(key_ + counter_++ * 0x9E3779B97F4A7C15ull); }

  // uniform on (0,1]
  double next_uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // uniform integer on {lo, ..., hi}
  int next_int(int lo, int hi) {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;  // [0,1)
    int v = lo + static_cast<int>(u * static_cast<double>(hi - lo + 1));
    return v > hi ? hi : v;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    return mix(mix(seed + 0x632BE59BD9B4E019ull) ^ mix(stream + 0x9E3779B97F4A7C15ull));
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace empdyn
