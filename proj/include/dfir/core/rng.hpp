#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

namespace dfir {

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from a root seed and a path of indices,
// e.g. derive_seed(corpus_seed, {image_index}) or derive_seed(seed, {epoch, step}).
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);

// Portable generator: the draws depend only on the engine bits, never on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                          // [0, 1)
  double uniform(double lo, double hi);      // [lo, hi)
  double normal();                           // standard normal
  double normal(double mean, double stddev);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dfir
