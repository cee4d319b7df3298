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

#ifndef NVFP4EMU_TRANSFORMS_HPP
#define NVFP4EMU_TRANSFORMS_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "nvfp4emu/adaptive46.hpp"
#include "nvfp4emu/block_quant.hpp"

namespace nvfp4emu {

// ---------------------------------------------------------------------------
// Random Hadamard transform

struct RhtSpec {
  std::size_t size = kNvfp4BlockSize;
  std::uint64_t seed = 0;
  std::vector<std::int8_t> signs;

  // Sign diagonal drawn once from a 64-bit Mersenne Twister seeded with seed.
  static RhtSpec make(std::size_t size = kNvfp4BlockSize, std::uint64_t seed = 0) {
    if (size == 0 || !std::has_single_bit(size)) {
      throw Error(Errc::invalid_input, "RHT size must be a power of two");
    }
    RhtSpec s;
    s.size = size;
    s.seed = seed;
    s.signs.resize(size);
    std::mt19937_64 gen(seed);
    for (auto& v : s.signs) v = (gen() >> 63) ? std::int8_t{-1} : std::int8_t{1};
    return s;
  }

  void validate() const {
    if (size == 0 || !std::has_single_bit(size)) {
      throw Error(Errc::invalid_input, "RHT size must be a power of two");
    }
    if (signs.size() != size) throw Error(Errc::invalid_input, "RHT sign vector length");
    for (auto s : signs) {
      if (s != 1 && s != -1) throw Error(Errc::invalid_input, "RHT signs must be +-1");
    }
  }
};

namespace detail {

// In-place unnormalized Walsh-Hadamard transform in Sylvester order:
// y_i = sum_j (-1)^popcount(i & j) x_j.
inline void fwht(std::span<double> v) noexcept {
  for (std::size_t h = 1; h < v.size(); h *= 2) {
    for (std::size_t i = 0; i < v.size(); i += 2 * h) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = v[j], b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
}

inline Tensor rht_impl(const Tensor& x, const RhtSpec& spec, bool inverse) {
  spec.validate();
  if (x.rank() == 0 || x.last_dim() % spec.size != 0) {
    throw Error(Errc::shape_mismatch, "RHT: last dimension not divisible by transform size");
  }
  Tensor out(x.shape());
  const double norm = 1.0 / std::sqrt(static_cast<double>(spec.size));
  std::vector<double> buf(spec.size);
  const auto in = x.data();
  auto dst = out.data();
  for (std::size_t g = 0; g < x.numel(); g += spec.size) {
    for (std::size_t i = 0; i < spec.size; ++i) {
      buf[i] = inverse ? in[g + i] : in[g + i] * static_cast<double>(spec.signs[i]);
    }
    fwht(buf);
    for (std::size_t i = 0; i < spec.size; ++i) {
      const double v = buf[i] * norm;
      dst[g + i] = static_cast<float>(inverse ? v * spec.signs[i] : v);
    }
  }
  return out;
}

}  // namespace detail

// Each group of spec.size values along the last dimension becomes
// (1 / sqrt(size)) * H * diag(signs) * x. Orthonormal.
inline Tensor apply_rht(const Tensor& x, const RhtSpec& spec) {
  return detail::rht_impl(x, spec, false);
}

// diag(signs) * H^T * y / sqrt(size); H is symmetric.
inline Tensor inverse_rht(const Tensor& y, const RhtSpec& spec) {
  return detail::rht_impl(y, spec, true);
}

// ---------------------------------------------------------------------------
// 2D weight quantization

inline constexpr std::size_t kTileSize = 16;

namespace detail {

struct TileCandidate {
  std::array<std::uint8_t, kTileSize * kTileSize> codes{};
  std::uint8_t scale_bits = 0;
  double err_mse = 0.0;
  double err_l1 = 0.0;
  double err_max = 0.0;

  double error(SelectionRule rule) const noexcept {
    switch (rule) {
      case SelectionRule::mse: return err_mse;
      case SelectionRule::l1: return err_l1;
      case SelectionRule::absmax: return err_max;
    }
    return err_mse;
  }
};

// Errors are summed in sorted order so a tile and its transpose produce
// bit-identical metrics.
inline TileCandidate cast_tile(std::span<const float> vals, double amax, double alpha, double m,
                               const Rounding& rounding, std::uint64_t tile_index) {
  TileCandidate t;
  const Fp8E4M3 s = block_scale_from_max(amax, alpha, m);
  t.scale_bits = s.bits;
  const double scale = decode_fp8_e4m3(s);
  const double denom = alpha * scale;
  const SampleStream stream =
      SampleStream::make(rounding.seed, tile_index, static_cast<std::uint64_t>(m));
  std::array<double, kTileSize * kTileSize> errs{};
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double x = vals[i];
    const Fp4Code c = rounding.mode == RoundingMode::stochastic
                          ? encode_fp4_stochastic_unchecked(x / denom, stream.uniform(i))
                          : encode_fp4_rne_unchecked(x / denom);
    t.codes[i] = c.bits;
    errs[i] = std::fabs(dequantized(c, scale, alpha) - x);
  }
  std::sort(errs.begin(), errs.begin() + static_cast<std::ptrdiff_t>(vals.size()));
  double sq = 0.0, l1 = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    sq += errs[i] * errs[i];
    l1 += errs[i];
  }
  t.err_mse = vals.empty() ? 0.0 : sq / static_cast<double>(vals.size());
  t.err_l1 = l1;
  t.err_max = vals.empty() ? 0.0 : errs[vals.size() - 1];
  return t;
}

}  // namespace detail

// One E4M3 scale per 16x16 tile of W. The scale is replicated into each of
// the 16 row-blocks the tile covers, so the result is a standard NVFP4
// container and W^T quantizes to the exact transpose. Ragged edge tiles are
// treated as zero-padded with the pads excluded from the error metrics.
inline QuantizedTensor quantize_weights_2d(const Tensor& w, const QuantConfig& cfg,
                                           unsigned threads = 1) {
  cfg.validate();
  if (cfg.format != Format::nvfp4 || cfg.simulated()) {
    throw Error(Errc::invalid_config, "2D weight quantization needs plain NVFP4");
  }
  if (w.rank() != 2) throw Error(Errc::shape_mismatch, "quantize_weights_2d: W must be 2-D");
  check_quantizable(w, "quantize_weights_2d");

  const std::size_t rows = w.shape()[0], cols = w.shape()[1];
  const std::size_t tile_rows = (rows + kTileSize - 1) / kTileSize;
  const std::size_t tile_cols = (cols + kTileSize - 1) / kTileSize;
  const float alpha_f = tensor_scale_for(w, cfg);
  const double alpha = alpha_f;

  QuantizedTensor q;
  q.shape = w.shape();
  q.format = Format::nvfp4;
  q.tensor_scale = alpha_f;
  q.block_scales.assign(q.expected_block_count(), 0);
  std::vector<std::uint8_t> codes(w.numel(), 0);
  const std::size_t bpr = q.blocks_per_row();

  parallel_for(tile_rows * tile_cols, threads, [&](std::size_t t0, std::size_t t1) {
    std::array<float, kTileSize * kTileSize> vals{};
    for (std::size_t t = t0; t < t1; ++t) {
      const std::size_t tr = t / tile_cols, tc = t % tile_cols;
      const std::size_t r0 = tr * kTileSize, c0 = tc * kTileSize;
      const std::size_t nr = std::min(kTileSize, rows - r0);
      const std::size_t nc = std::min(kTileSize, cols - c0);
      std::size_t n = 0;
      for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t j = 0; j < nc; ++j) vals[n++] = w.at(r0 + i, c0 + j);
      const std::span<const float> tile(vals.data(), n);
      const double amax = max_abs(tile);

      detail::TileCandidate chosen;
      if (cfg.scale_mode == ScaleMode::adaptive46) {
        detail::TileCandidate six = detail::cast_tile(tile, amax, alpha, 6.0, cfg.rounding, t);
        detail::TileCandidate four = detail::cast_tile(tile, amax, alpha, 4.0, cfg.rounding, t);
        chosen = four.error(cfg.rule) < six.error(cfg.rule) ? four : six;
      } else {
        const double m = cfg.scale_mode == ScaleMode::fixed4 ? 4.0 : 6.0;
        chosen = detail::cast_tile(tile, amax, alpha, m, cfg.rounding, t);
      }

      std::size_t k = 0;
      for (std::size_t i = 0; i < nr; ++i) {
        q.block_scales[(r0 + i) * bpr + tc] = chosen.scale_bits;
        for (std::size_t j = 0; j < nc; ++j) codes[(r0 + i) * cols + c0 + j] = chosen.codes[k++];
      }
    }
  });
  q.packed_codes = pack_codes(codes);
  return q;
}

}  // namespace nvfp4emu

#endif  // NVFP4EMU_TRANSFORMS_HPP
