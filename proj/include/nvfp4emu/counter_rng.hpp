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

// Counter-based uniforms for stochastic rounding. A sample is a pure function
// of (seed, stream, index), so block-parallel quantization gives the same
// bits regardless of how blocks are scheduled.

#ifndef NVFP4EMU_COUNTER_RNG_HPP
#define NVFP4EMU_COUNTER_RNG_HPP

#include <cstdint>

namespace nvfp4emu {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return mix64(seed ^ mix64(tag));
}

// Identifies one independent sequence of uniforms, e.g. one (block, candidate)
// pair of a stochastic quantization.
struct SampleStream {
  std::uint64_t key = 0;

  static constexpr SampleStream make(std::uint64_t seed, std::uint64_t block,
                                     std::uint64_t candidate) noexcept {
    return SampleStream{mix64(mix64(seed) ^ mix64(block * 8 + candidate + 1))};
  }

  // Uniform in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t index) const noexcept {
    return static_cast<double>(mix64(key + index * 0xD1B54A32D192ED03ull) >> 11) *
           0x1p-53;
  }
};

}  // namespace nvfp4emu

#endif  // NVFP4EMU_COUNTER_RNG_HPP
