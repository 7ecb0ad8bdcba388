#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

#include "toah/array.hpp"

namespace testing {

inline toah::Array2<double> random_map(std::size_t nx, std::size_t ny, std::uint64_t seed,
                                       double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  toah::Array2<double> m(nx, ny);
  for (auto& v : m.flat()) v = u(rng);
  return m;
}

inline toah::Array3<double> random_volume(std::size_t nx, std::size_t ny, std::size_t nz,
                                          std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  toah::Array3<double> m(nx, ny, nz);
  for (auto& v : m.flat()) v = u(rng);
  return m;
}

inline toah::Array3<toah::Complex> random_complex(std::size_t nx, std::size_t ny, std::size_t nz,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  toah::Array3<toah::Complex> m(nx, ny, nz);
  for (auto& v : m.flat()) v = {n(rng), n(rng)};
  return m;
}

inline double rel_diff(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0 ? 0 : std::abs(a - b) / s;
}

}  // namespace testing
