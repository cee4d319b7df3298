// Copyright 2026 The nvfp4emu Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Brute-force reference implementations used only by tests. They share no
// code path with the library: every rounding here is an exhaustive argmin
// over the value set of the target format.

#ifndef NVFP4EMU_TESTS_ORACLES_HPP
#define NVFP4EMU_TESTS_ORACLES_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

// All 16 E2M1 codes written out by hand.
inline constexpr double kFp4Table[16] = {0.0,  0.5,  1.0,  1.5,  2.0,  3.0,  4.0,  6.0,
                                         -0.0, -0.5, -1.0, -1.5, -2.0, -3.0, -4.0, -6.0};

// Nearest of the 8 magnitudes, ties to the even code, sign copied from x.
inline std::uint8_t fp4_rne(double x) {
  const double a = std::fabs(x);
  int best = 0;
  double best_d = INFINITY;
  for (int c = 0; c < 8; ++c) {
    const double d = std::fabs(kFp4Table[c] - a);
    if (d < best_d || (d == best_d && (c % 2) == 0)) {
      best = c;
      best_d = d;
    }
  }
  return static_cast<std::uint8_t>((std::signbit(x) ? 8 : 0) | best);
}

// Value of an E4M3 code from its fields, computed by pow.
inline double e4m3_value(int bits) {
  const int e = (bits >> 3) & 0xF;
  const int m = bits & 7;
  const double mag = e == 0 ? std::pow(2.0, -6) * (m / 8.0) : std::pow(2.0, e - 7) * (1.0 + m / 8.0);
  return (bits & 0x80) ? -mag : mag;
}

// Nearest finite E4M3 magnitude (codes 0x00..0x7E), ties to even mantissa.
inline std::uint8_t e4m3_rne(double x) {
  const double a = std::fabs(x);
  int best = 0;
  double best_d = INFINITY;
  for (int c = 0; c <= 0x7E; ++c) {
    const double d = std::fabs(e4m3_value(c) - a);
    if (d < best_d || (d == best_d && (c % 2) == 0)) {
      best = c;
      best_d = d;
    }
  }
  return static_cast<std::uint8_t>((std::signbit(x) ? 0x80 : 0) | best);
}

// Largest power of two <= x by scanning exponents.
inline double e8m0_floor(double x) {
  double best = std::pow(2.0, -127);
  for (int k = -127; k <= 127; ++k) {
    if (std::pow(2.0, k) <= x) best = std::pow(2.0, k);
  }
  return best;
}

// C = A B in double, A [m, k], B [k, n], row-major.
inline std::vector<double> matmul(const std::vector<float>& a, const std::vector<float>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += double(a[i * k + p]) * double(b[p * n + j]);
  return c;
}

inline double rel_frobenius(const std::vector<double>& ref, const std::vector<float>& got) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += (ref[i] - got[i]) * (ref[i] - got[i]);
    den += ref[i] * ref[i];
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

// Test data generators.
inline std::vector<float> gaussian(std::size_t n, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, sigma);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(d(gen));
  return v;
}

inline std::vector<float> uniform(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(d(gen));
  return v;
}

// Student-t with 2 degrees of freedom: heavy tails, occasional outliers.
inline std::vector<float> heavy_tailed(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::student_t_distribution<double> d(2.0);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(d(gen));
  return v;
}

}  // namespace oracle

#endif  // NVFP4EMU_TESTS_ORACLES_HPP
