#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "styleswin/tensor.hpp"

namespace styleswin {

/// Seeded generator whose complete state is the engine state, so it can be
/// checkpointed and replayed bit-exactly. Normal draws use Box-Muller without
/// a cached spare.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream for a named purpose, derived from a run seed.
  static Rng stream(std::uint64_t seed, std::string_view purpose);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  std::string state() const;
  void set_state(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0);
Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi);

/// Zero-mean normal truncated by rejection to [-2 stddev, 2 stddev].
Tensor truncated_normal(const Shape& shape, Rng& rng, double stddev = 0.02);

/// Glorot (Xavier) normal: stddev = gain * sqrt(2 / (fan_in + fan_out)).
Tensor glorot_normal(const Shape& shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng,
                     double gain = 0.02);

}  // namespace styleswin
