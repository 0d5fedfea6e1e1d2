#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace photobook {

/// Seeded generator whose output is identical on every standard library:
/// mt19937_64 is fully specified, and the bounded draws below avoid the
/// implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  std::uint64_t below(std::uint64_t bound);  // uniform in [0, bound)
  double unit();                             // uniform in [0, 1)
  double normal();                           // standard normal (Box-Muller)

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Stable 64-bit FNV-1a mix of a base seed and a key.
std::uint64_t derive_seed(std::uint64_t base, std::string_view key);

}  // namespace photobook
