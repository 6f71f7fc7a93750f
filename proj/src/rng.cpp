// SPDX-License-Identifier: Apache-2.0
#include "ld3m/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

namespace ld3m {

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed + 0x9e3779b97f4a7c15ULL) ^ (stream * 0xd1b54a32d192ed03ULL + 1));
}

Rng Rng::split(std::uint64_t stream) const {
  Rng child;
  child.key_ = derive_seed(key_, stream);
  return child;
}

std::uint64_t Rng::next_u64() {
  // SplitMix64 evaluated at an explicit counter.
  return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // Box-Muller without caching the second variate, so the state stays (key, counter).
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

Array Rng::normal_array(const Shape& shape) {
  Array a(shape);
  for (auto& v : a.data()) v = normal();
  return a;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[below(i)]);
  return p;
}

}  // namespace ld3m
