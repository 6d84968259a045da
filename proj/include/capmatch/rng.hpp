#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace capmatch {

// splitmix64 generator. std:: distributions are implementation-defined, so
// everything that must reproduce bit-for-bit goes through this class.
//
// All experiment randomness flows from one 64-bit master seed via named
// streams (data / init / pools / negatives / ...), so each subsystem is
// independently reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static Rng stream(std::uint64_t master_seed, std::string_view name);

  std::uint64_t next_u64();

  // [0, 1)
  double uniform();
  double uniform(double lo, double hi);

  // Box-Muller; the spare value is cached.
  double normal(double mean = 0.0, double stddev = 1.0);

  // [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), returned sorted ascending.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace capmatch
