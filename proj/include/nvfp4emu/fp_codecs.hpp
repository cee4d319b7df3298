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

// Bit-exact software codecs for the narrow formats used by block-scaled FP4:
//
//   FP4 E2M1   s.ee.m        magnitudes {0, 0.5, 1, 1.5, 2, 3, 4, 6}
//   FP8 E4M3   s.eeee.mmm    bias 7, max 448, S.1111.111 = NaN, no Inf
//   FP8 E8M0   eeeeeeee      2^(e - 127), 0xFF = NaN
//
// All narrow values are dyadic rationals, so every conversion here is exact
// in double precision apart from the rounding step itself. Rounding never
// consults the floating-point environment.

#ifndef NVFP4EMU_FP_CODECS_HPP
#define NVFP4EMU_FP_CODECS_HPP

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include "nvfp4emu/error.hpp"

namespace nvfp4emu {

struct Fp4Code {
  std::uint8_t bits = 0;  // low nibble only

  constexpr bool sign() const noexcept { return (bits & 0x8) != 0; }
  constexpr std::uint8_t magnitude_index() const noexcept { return bits & 0x7; }
  friend constexpr bool operator==(Fp4Code, Fp4Code) = default;
};

struct Fp8E4M3 {
  std::uint8_t bits = 0;

  constexpr bool is_nan() const noexcept { return (bits & 0x7F) == 0x7F; }
  friend constexpr bool operator==(Fp8E4M3, Fp8E4M3) = default;
};

struct Fp8E8M0 {
  std::uint8_t bits = 127;

  constexpr bool is_nan() const noexcept { return bits == 0xFF; }
  friend constexpr bool operator==(Fp8E8M0, Fp8E8M0) = default;
};

inline constexpr double kFp4Max = 6.0;
inline constexpr double kE4M3Max = 448.0;
inline constexpr std::uint8_t kE4M3MaxBits = 0x7E;
inline constexpr std::uint8_t kE4M3NanBits = 0x7F;
inline constexpr std::uint8_t kE8M0NanBits = 0xFF;

// Indexed by the low three bits of an Fp4Code.
inline constexpr std::array<double, 8> kFp4Magnitudes = {0.0, 0.5, 1.0, 1.5,
                                                         2.0, 3.0, 4.0, 6.0};

namespace detail {

// Round half to even, independent of the current fenv rounding mode.
inline double round_half_even(double v) noexcept {
  const double r = std::floor(v);
  const double diff = v - r;
  if (diff > 0.5) return r + 1.0;
  if (diff < 0.5) return r;
  return std::fmod(r, 2.0) == 0.0 ? r : r + 1.0;
}

// Magnitude index of the nearest FP4 value, ties to the even code. Each
// comparison is one decision boundary; >= marks a tie that resolves upward
// because the upper neighbour has the even mantissa. NaN yields 0.
inline std::uint8_t fp4_rne_magnitude(double a) noexcept {
  return static_cast<std::uint8_t>((a > 0.25) + (a >= 0.75) + (a > 1.25) +
                                   (a >= 1.75) + (a > 2.5) + (a >= 3.5) +
                                   (a > 5.0));
}

inline Fp4Code encode_fp4_rne_unchecked(double x) noexcept {
  const auto sign = static_cast<std::uint8_t>(std::signbit(x) ? 0x8 : 0x0);
  return Fp4Code{static_cast<std::uint8_t>(sign | fp4_rne_magnitude(std::fabs(x)))};
}

inline Fp4Code encode_fp4_stochastic_unchecked(double x, double u) noexcept {
  const bool negative = std::signbit(x);
  const double a = std::fabs(x);
  const auto sign = static_cast<std::uint8_t>(negative ? 0x8 : 0x0);
  if (a >= kFp4Max) return Fp4Code{static_cast<std::uint8_t>(sign | 0x7)};

  std::uint8_t lo = 0;
  while (kFp4Magnitudes[lo + 1] <= a) ++lo;
  const double lo_mag = kFp4Magnitudes[lo];
  if (lo_mag == a) return Fp4Code{static_cast<std::uint8_t>(sign | lo)};

  const double hi_mag = kFp4Magnitudes[lo + 1];
  const double gap = hi_mag - lo_mag;
  // On the real line the upper neighbour of a negative x is the smaller
  // magnitude, so the probability of moving away from zero is the same
  // fraction in both cases.
  const bool take_larger_magnitude = negative ? !(u < (hi_mag - a) / gap)
                                              : (u < (a - lo_mag) / gap);
  const auto idx = static_cast<std::uint8_t>(take_larger_magnitude ? lo + 1 : lo);
  return Fp4Code{static_cast<std::uint8_t>(sign | idx)};
}

inline constexpr std::array<double, 256> make_e4m3_table() {
  std::array<double, 256> t{};
  for (int bits = 0; bits < 256; ++bits) {
    const int e = (bits >> 3) & 0xF;
    const int m = bits & 0x7;
    double v = 0.0;
    if ((bits & 0x7F) == 0x7F) {
      v = std::numeric_limits<double>::quiet_NaN();
    } else if (e == 0) {
      v = m / 512.0;  // m * 2^-9
    } else {
      // (8 + m) * 2^(e - 10)
      v = 8.0 + m;
      for (int k = e; k < 10; ++k) v /= 2.0;
      for (int k = 10; k < e; ++k) v *= 2.0;
    }
    t[static_cast<std::size_t>(bits)] = (bits & 0x80) ? -v : v;
  }
  return t;
}

inline constexpr std::array<double, 256> kE4M3Table = make_e4m3_table();

}  // namespace detail

// ---------------------------------------------------------------------------
// FP4 E2M1

constexpr double decode_fp4(Fp4Code c) noexcept {
  const double m = kFp4Magnitudes[c.bits & 0x7];
  return (c.bits & 0x8) ? -m : m;
}

// Nearest FP4 value with ties to even mantissa; |x| > 6 saturates to +-6.
// The sign of x is kept, so small negative inputs map to the -0 code.
inline Fp4Code encode_fp4_rne(double x) {
  if (std::isnan(x)) throw Error(Errc::invalid_input, "encode_fp4_rne: NaN");
  return detail::encode_fp4_rne_unchecked(x);
}

// Rounds to one of the two FP4 neighbours of x. The upper neighbour (on the
// real line) is chosen iff u < (x - lo) / (hi - lo), which makes the result
// unbiased for u ~ U[0, 1). Representable inputs ignore u.
inline Fp4Code encode_fp4_stochastic(double x, double u) {
  if (std::isnan(x)) throw Error(Errc::invalid_input, "encode_fp4_stochastic: NaN");
  return detail::encode_fp4_stochastic_unchecked(x, u);
}

// ---------------------------------------------------------------------------
// FP8 E4M3

inline double decode_fp8_e4m3(Fp8E4M3 c) noexcept {
  return detail::kE4M3Table[c.bits];
}

// Round-to-nearest-even onto E4M3, saturating to +-448. NaN maps to the NaN
// code rather than throwing, matching hardware converts.
inline Fp8E4M3 encode_fp8_e4m3(double x) noexcept {
  if (std::isnan(x)) return Fp8E4M3{kE4M3NanBits};
  const auto sign = static_cast<std::uint8_t>(std::signbit(x) ? 0x80 : 0x00);
  const double a = std::fabs(x);
  if (a >= kE4M3Max) return Fp8E4M3{static_cast<std::uint8_t>(sign | kE4M3MaxBits)};

  int mag = 0;
  if (a < 0x1p-6) {
    // Subnormal quantum is 2^-9; a result of 8 is the smallest normal code.
    mag = static_cast<int>(detail::round_half_even(a * 0x1p9));
  } else {
    int e = 0;
    std::frexp(a, &e);
    const int unbiased = e - 1;
    const int q = static_cast<int>(detail::round_half_even(std::ldexp(a, 3 - unbiased)));
    // q == 16 carries into the exponent field.
    mag = ((unbiased + 7) << 3) + q - 8;
  }
  if (mag > kE4M3MaxBits) mag = kE4M3MaxBits;
  return Fp8E4M3{static_cast<std::uint8_t>(sign | mag)};
}

// ---------------------------------------------------------------------------
// FP8 E8M0

inline double decode_fp8_e8m0(Fp8E8M0 c) noexcept {
  if (c.is_nan()) return std::numeric_limits<double>::quiet_NaN();
  return std::ldexp(1.0, static_cast<int>(c.bits) - 127);
}

// 2^floor(log2(x)), clamped to [2^-127, 2^127].
inline Fp8E8M0 encode_fp8_e8m0(double x) {
  if (std::isnan(x)) return Fp8E8M0{kE8M0NanBits};
  if (!(x > 0.0)) throw Error(Errc::invalid_input, "encode_fp8_e8m0: x <= 0");
  if (std::isinf(x)) return Fp8E8M0{254};
  int e = 0;
  std::frexp(x, &e);
  int biased = e - 1 + 127;
  if (biased < 0) biased = 0;
  if (biased > 254) biased = 254;
  return Fp8E8M0{static_cast<std::uint8_t>(biased)};
}

// ---------------------------------------------------------------------------
// bf16, used for file payloads and optional matmul output rounding.

inline float bf16_to_float(std::uint16_t b) noexcept {
  return std::bit_cast<float>(static_cast<std::uint32_t>(b) << 16);
}

inline std::uint16_t float_to_bf16_rne(float f) noexcept {
  const auto u = std::bit_cast<std::uint32_t>(f);
  if (std::isnan(f)) return static_cast<std::uint16_t>((u >> 16) | 0x0040);
  const std::uint32_t rounding_bias = 0x7FFF + ((u >> 16) & 1);
  return static_cast<std::uint16_t>((u + rounding_bias) >> 16);
}

inline float round_to_bf16(float f) noexcept {
  return bf16_to_float(float_to_bf16_rne(f));
}

}  // namespace nvfp4emu

#endif  // NVFP4EMU_FP_CODECS_HPP
