#include "styleswin/random.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace styleswin {

Rng Rng::stream(std::uint64_t seed, std::string_view purpose) {
  // FNV-1a over the purpose tag, mixed with the seed through splitmix64.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : purpose) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (h | 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return Rng(z);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw ContractError("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = span == 0 ? 0 : (~std::uint64_t{0} / span) * span;
  std::uint64_t r;
  do {
    r = engine_();
  } while (limit != 0 && r >= limit);
  return lo + static_cast<std::int64_t>(span == 0 ? r : r % span);
}

double Rng::normal() {
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw ContractError("malformed rng state");
}

Tensor randn(const Shape& shape, Rng& rng, double stddev) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::from(shape, std::move(v));
}

Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(shape, std::move(v));
}

Tensor truncated_normal(const Shape& shape, Rng& rng, double stddev) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 2.0);
    x = stddev * z;
  }
  return Tensor::from(shape, std::move(v));
}

Tensor glorot_normal(const Shape& shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng,
                     double gain) {
  const double stddev =
      gain * std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return randn(shape, rng, stddev);
}

}  // namespace styleswin
