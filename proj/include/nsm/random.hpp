#pragma once

#include <cstdint>
#include <random>

namespace nsm {

// mt19937_64 with a portable mapping to doubles, so seeded runs reproduce
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return engine_(); }

  // Index drawn from unnormalized nonnegative weights.
  template <class Weights>
  std::size_t categorical(const Weights& w) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = uniform() * total;
    std::size_t last = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] <= 0.0) continue;
      last = i;
      if (u < w[i]) return i;
      u -= w[i];
    }
    return last;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nsm
