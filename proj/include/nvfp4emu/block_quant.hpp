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

// Baseline block-scaled FP4 quantization.
//
// NVFP4 stores a tensor X as
//
//   alpha     = max|X| / (6 * cap)                  one float per tensor
//   delta_i   = e4m3(max|X_block_i| / (alpha * M))  one E4M3 code per 16 values
//   code_j    = fp4(X_j / (alpha * delta_i))        one E2M1 code per value
//
// and reconstructs D_j = fp4_value(code_j) * delta_i * alpha. M is the FP4
// value the block maximum is mapped to (6 normally, 4 for the alternative
// candidate). Values are divided by the *decoded* delta, so the block maximum
// may land slightly above M and saturate.
//
// MXFP4 uses 32-value blocks with a power-of-two E8M0 scale and no tensor
// scale.

#ifndef NVFP4EMU_BLOCK_QUANT_HPP
#define NVFP4EMU_BLOCK_QUANT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nvfp4emu/counter_rng.hpp"
#include "nvfp4emu/error.hpp"
#include "nvfp4emu/fp_codecs.hpp"
#include "nvfp4emu/parallel.hpp"
#include "nvfp4emu/tensor.hpp"

namespace nvfp4emu {

enum class Format : std::uint8_t { nvfp4 = 0, mxfp4 = 1 };
enum class ScaleMode { fixed6, fixed4, adaptive46 };
enum class SelectionRule { mse, l1, absmax };
enum class RoundingMode { nearest_even, stochastic };

inline constexpr std::size_t kNvfp4BlockSize = 16;
inline constexpr std::size_t kMxfp4BlockSize = 32;
inline constexpr std::size_t kMaxBlockSize = kMxfp4BlockSize;
inline constexpr double kDefaultFp8Cap = 448.0;
inline constexpr double kAdaptiveFp8Cap = 256.0;
// E2M1 has emax = 2; the microscaling shared exponent is floor(log2 amax) - 2.
inline constexpr double kMxScaleDivisor = 4.0;

inline constexpr std::size_t block_size_of(Format f) noexcept {
  return f == Format::mxfp4 ? kMxfp4BlockSize : kNvfp4BlockSize;
}

struct Rounding {
  RoundingMode mode = RoundingMode::nearest_even;
  std::uint64_t seed = 0;

  static constexpr Rounding nearest() noexcept { return {}; }
  static constexpr Rounding stochastic(std::uint64_t seed) noexcept {
    return {RoundingMode::stochastic, seed};
  }
};

struct QuantConfig {
  Format format = Format::nvfp4;
  ScaleMode scale_mode = ScaleMode::fixed6;
  SelectionRule rule = SelectionRule::mse;
  Rounding rounding{};
  double fp8_cap = kDefaultFp8Cap;
  // Simulation switches: keep block scales or FP4 values in full precision,
  // or only cast values whose scaled magnitude is <= threshold.
  bool sim_hp_scales = false;
  bool sim_hp_values = false;
  std::optional<double> threshold;
  // Overrides the computed tensor scale (NVFP4 only).
  std::optional<float> forced_tensor_scale;

  static QuantConfig fixed6() { return {}; }
  static QuantConfig fixed4() {
    QuantConfig c;
    c.scale_mode = ScaleMode::fixed4;
    return c;
  }
  static QuantConfig adaptive(SelectionRule rule = SelectionRule::mse) {
    QuantConfig c;
    c.scale_mode = ScaleMode::adaptive46;
    c.rule = rule;
    c.fp8_cap = kAdaptiveFp8Cap;
    return c;
  }
  static QuantConfig mxfp4() {
    QuantConfig c;
    c.format = Format::mxfp4;
    return c;
  }

  std::size_t block_size() const noexcept { return block_size_of(format); }
  bool simulated() const noexcept {
    return sim_hp_scales || sim_hp_values || threshold.has_value();
  }

  void validate() const {
    if (fp8_cap != kDefaultFp8Cap && fp8_cap != kAdaptiveFp8Cap) {
      throw Error(Errc::invalid_config, "fp8_cap must be 448 or 256");
    }
    if (scale_mode == ScaleMode::adaptive46) {
      if (format != Format::nvfp4) {
        throw Error(Errc::invalid_config,
                    "adaptive 4/6 scaling needs E4M3 block scales; E8M0 cannot "
                    "express a 1.5x scale step");
      }
      if (fp8_cap != kAdaptiveFp8Cap) {
        throw Error(Errc::invalid_config, "adaptive 4/6 scaling requires fp8_cap == 256");
      }
    }
    if (format == Format::mxfp4) {
      if (scale_mode != ScaleMode::fixed6) {
        throw Error(Errc::invalid_config, "MXFP4 supports only the default block scaling");
      }
      if (forced_tensor_scale) {
        throw Error(Errc::invalid_config, "MXFP4 has no tensor scale");
      }
      if (simulated()) {
        throw Error(Errc::invalid_config, "simulation modes are NVFP4-only");
      }
    }
    const int sim_switches = int(sim_hp_scales) + int(sim_hp_values) + int(threshold.has_value());
    if (sim_switches > 1) {
      throw Error(Errc::invalid_config, "at most one simulation switch may be set");
    }
    if (sim_switches == 1 && scale_mode == ScaleMode::adaptive46) {
      throw Error(Errc::invalid_config, "simulation modes apply to fixed scaling only");
    }
    if (threshold && !(*threshold >= 0.0 && *threshold <= kFp4Max)) {
      throw Error(Errc::invalid_input, "threshold must lie in [0, 6]");
    }
    if (forced_tensor_scale &&
        !(std::isfinite(*forced_tensor_scale) && *forced_tensor_scale > 0.0f)) {
      throw Error(Errc::invalid_input, "forced tensor scale must be positive and finite");
    }
  }
};

// One block's quantization under a single candidate scale.
struct BlockQuantResult {
  std::array<Fp4Code, kMaxBlockSize> codes{};
  std::uint8_t size = 0;        // number of real (non-pad) values
  std::uint8_t scale_bits = 0;  // E4M3 code, or E8M0 code for MXFP4
  double scale = 0.0;           // decoded scale
  int chosen_m = 6;
  double err_mse = 0.0;
  double err_l1 = 0.0;  // sum of absolute errors
  double err_max = 0.0;

  std::span<const Fp4Code> value_codes() const noexcept { return {codes.data(), size}; }

  double error(SelectionRule rule) const noexcept {
    switch (rule) {
      case SelectionRule::mse: return err_mse;
      case SelectionRule::l1: return err_l1;
      case SelectionRule::absmax: return err_max;
    }
    return err_mse;
  }
};

// ---------------------------------------------------------------------------
// Scales

inline double max_abs(std::span<const float> xs) noexcept {
  float m = 0.0f;
  for (float v : xs) m = std::max(m, std::fabs(v));
  return m;
}

// alpha = max|X| / (m_fp4 * fp8_cap), rounded to float; 1 for an all-zero X.
inline float compute_tensor_scale(std::span<const float> x, double m_fp4, double fp8_cap) {
  if (x.empty()) throw Error(Errc::invalid_input, "compute_tensor_scale: empty tensor");
  require_finite(x, "compute_tensor_scale");
  const double amax = max_abs(x);
  if (amax == 0.0) return 1.0f;
  return static_cast<float>(amax / (m_fp4 * fp8_cap));
}

namespace detail {

inline constexpr Fp8E4M3 kSmallestE4M3{0x01};  // 2^-9

// Zero blocks, and blocks whose scale underflows E4M3, get the smallest
// positive scale so that the division below is always defined.
inline Fp8E4M3 block_scale_from_max(double amax, double alpha, double m) noexcept {
  if (amax == 0.0) return kSmallestE4M3;
  const Fp8E4M3 s = encode_fp8_e4m3(amax / (alpha * m));
  return decode_fp8_e4m3(s) == 0.0 ? kSmallestE4M3 : s;
}

inline Fp8E8M0 mx_scale_from_max(double amax) noexcept {
  if (amax == 0.0) return Fp8E8M0{0};
  return encode_fp8_e8m0(amax / kMxScaleDivisor);
}

inline double dequantized(Fp4Code c, double scale, double alpha) noexcept {
  return decode_fp4(c) * scale * alpha;
}

// Casts one block given its decoded scale and fills codes and error metrics.
inline void cast_block(std::span<const float> block, double alpha, double scale,
                       const Rounding& rounding, SampleStream stream,
                       BlockQuantResult& out) noexcept {
  const double denom = alpha * scale;
  double sq = 0.0, l1 = 0.0, mx = 0.0;
  const bool stochastic = rounding.mode == RoundingMode::stochastic;
  for (std::size_t i = 0; i < block.size(); ++i) {
    const double x = block[i];
    const double scaled = x / denom;
    const Fp4Code c = stochastic ? encode_fp4_stochastic_unchecked(scaled, stream.uniform(i))
                                 : encode_fp4_rne_unchecked(scaled);
    out.codes[i] = c;
    const double err = std::fabs(dequantized(c, scale, alpha) - x);
    sq += err * err;
    l1 += err;
    mx = std::max(mx, err);
  }
  const auto n = static_cast<double>(block.size());
  out.size = static_cast<std::uint8_t>(block.size());
  out.err_mse = block.empty() ? 0.0 : sq / n;
  out.err_l1 = l1;
  out.err_max = mx;
}

inline void check_block(std::span<const float> block, std::size_t limit, const char* who) {
  if (block.size() > limit) {
    throw Error(Errc::invalid_input, std::string(who) + ": block longer than " +
                                         std::to_string(limit));
  }
  require_finite(block, who);
}

inline void check_alpha_m(double alpha, double m, const char* who) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw Error(Errc::invalid_input, std::string(who) + ": alpha must be positive");
  }
  if (m != 4.0 && m != 6.0) {
    throw Error(Errc::invalid_input, std::string(who) + ": M must be 4 or 6");
  }
}

inline BlockQuantResult quantize_block_unchecked(std::span<const float> block, double alpha,
                                                 double m, const Rounding& rounding,
                                                 std::uint64_t block_index) noexcept {
  BlockQuantResult r;
  const Fp8E4M3 s = block_scale_from_max(max_abs(block), alpha, m);
  r.scale_bits = s.bits;
  r.scale = decode_fp8_e4m3(s);
  r.chosen_m = static_cast<int>(m);
  cast_block(block, alpha, r.scale, rounding,
             SampleStream::make(rounding.seed, block_index, static_cast<std::uint64_t>(m)), r);
  return r;
}

inline BlockQuantResult quantize_block_mx_unchecked(std::span<const float> block,
                                                    const Rounding& rounding,
                                                    std::uint64_t block_index) noexcept {
  BlockQuantResult r;
  const Fp8E8M0 s = mx_scale_from_max(max_abs(block));
  r.scale_bits = s.bits;
  r.scale = decode_fp8_e8m0(s);
  r.chosen_m = 6;
  cast_block(block, 1.0, r.scale, rounding, SampleStream::make(rounding.seed, block_index, 6), r);
  return r;
}

}  // namespace detail

// E4M3 block scale mapping the block maximum to M.
inline Fp8E4M3 compute_block_scale(std::span<const float> block, double alpha, double m) {
  detail::check_alpha_m(alpha, m, "compute_block_scale");
  require_finite(block, "compute_block_scale");
  return detail::block_scale_from_max(max_abs(block), alpha, m);
}

// Quantizes up to 16 values with the block maximum mapped to M. Error metrics
// compare the reconstruction against the given values only, so a short block
// uses its own length as the MSE divisor. block_index keys the stochastic
// rounding stream.
inline BlockQuantResult quantize_block(std::span<const float> block, double alpha, double m,
                                       const Rounding& rounding = {},
                                       std::uint64_t block_index = 0) {
  detail::check_alpha_m(alpha, m, "quantize_block");
  detail::check_block(block, kNvfp4BlockSize, "quantize_block");
  return detail::quantize_block_unchecked(block, alpha, m, rounding, block_index);
}

// MXFP4 block of up to 32 values with a power-of-two scale.
inline BlockQuantResult quantize_block_mx(std::span<const float> block,
                                          const Rounding& rounding = {},
                                          std::uint64_t block_index = 0) {
  detail::check_block(block, kMxfp4BlockSize, "quantize_block_mx");
  return detail::quantize_block_mx_unchecked(block, rounding, block_index);
}

// ---------------------------------------------------------------------------
// Container

// Block-scaled FP4 tensor. Blocks run along the last dimension; the final
// block of a row may be short. Codes are stored for the unpadded elements in
// row-major order, two per byte, even index in the low nibble.
struct QuantizedTensor {
  Shape shape;
  Format format = Format::nvfp4;
  float tensor_scale = 1.0f;
  std::vector<std::uint8_t> block_scales;
  std::vector<std::uint8_t> packed_codes;

  std::size_t block_size() const noexcept { return block_size_of(format); }
  std::size_t numel() const noexcept { return shape_numel(shape); }
  std::size_t last_dim() const noexcept { return shape.empty() ? 1 : shape.back(); }
  std::size_t rows() const noexcept { return last_dim() == 0 ? 0 : numel() / last_dim(); }
  std::size_t blocks_per_row() const noexcept {
    return (last_dim() + block_size() - 1) / block_size();
  }
  std::size_t expected_block_count() const noexcept { return blocks_per_row() * rows(); }
  std::size_t expected_code_bytes() const noexcept { return (numel() + 1) / 2; }

  Fp4Code code(std::size_t i) const noexcept {
    const std::uint8_t byte = packed_codes[i / 2];
    return Fp4Code{static_cast<std::uint8_t>((i % 2 == 0) ? (byte & 0x0F) : (byte >> 4))};
  }

  double scale_value(std::size_t block) const noexcept {
    return format == Format::mxfp4 ? decode_fp8_e8m0(Fp8E8M0{block_scales[block]})
                                   : decode_fp8_e4m3(Fp8E4M3{block_scales[block]});
  }

  void validate() const {
    if (block_scales.size() != expected_block_count()) {
      throw Error(Errc::length_mismatch,
                  "expected " + std::to_string(expected_block_count()) + " block scales, have " +
                      std::to_string(block_scales.size()));
    }
    if (packed_codes.size() != expected_code_bytes()) {
      throw Error(Errc::length_mismatch,
                  "expected " + std::to_string(expected_code_bytes()) + " code bytes, have " +
                      std::to_string(packed_codes.size()));
    }
    if (format == Format::mxfp4 && tensor_scale != 1.0f) {
      throw Error(Errc::corrupt_data, "MXFP4 tensor scale must be 1");
    }
    if (!(std::isfinite(tensor_scale) && tensor_scale > 0.0f)) {
      throw Error(Errc::corrupt_data, "tensor scale must be positive and finite");
    }
  }

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

inline std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> unpacked) {
  std::vector<std::uint8_t> packed((unpacked.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < unpacked.size(); ++i) {
    const auto nibble = static_cast<std::uint8_t>(unpacked[i] & 0x0F);
    packed[i / 2] |= (i % 2 == 0) ? nibble : static_cast<std::uint8_t>(nibble << 4);
  }
  return packed;
}

namespace detail {

// Walks the blocks of x (row by row, block by block along the last dimension)
// and calls fn(block_index, values, codes_out) -> scale bits for each. Rows
// are distributed over threads; fn must only depend on its arguments.
template <typename BlockFn>
QuantizedTensor quantize_blocks(const Tensor& x, Format format, float alpha, unsigned threads,
                                BlockFn&& fn) {
  QuantizedTensor q;
  q.shape = x.shape();
  q.format = format;
  q.tensor_scale = alpha;
  const std::size_t len = x.last_dim();
  const std::size_t bs = q.block_size();
  const std::size_t bpr = q.blocks_per_row();
  q.block_scales.assign(q.expected_block_count(), 0);
  std::vector<std::uint8_t> codes(x.numel(), 0);
  const auto data = x.data();

  parallel_for(q.rows(), threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t b = 0; b < bpr; ++b) {
        const std::size_t begin = r * len + b * bs;
        const std::size_t n = std::min(bs, len - b * bs);
        const std::size_t block_index = r * bpr + b;
        q.block_scales[block_index] =
            fn(block_index, data.subspan(begin, n), codes.data() + begin);
      }
    }
  });
  q.packed_codes = pack_codes(codes);
  return q;
}

inline void store_codes(const BlockQuantResult& r, std::uint8_t* out) noexcept {
  for (std::size_t i = 0; i < r.size; ++i) out[i] = r.codes[i].bits;
}

}  // namespace detail

// Tensor scale that quantize_tensor uses for this config.
inline float tensor_scale_for(const Tensor& x, const QuantConfig& cfg) {
  if (cfg.format == Format::mxfp4) return 1.0f;
  if (cfg.forced_tensor_scale) return *cfg.forced_tensor_scale;
  return compute_tensor_scale(x.data(), kFp4Max, cfg.fp8_cap);
}

inline void check_quantizable(const Tensor& x, const char* who) {
  if (x.rank() == 0 || x.numel() == 0) {
    throw Error(Errc::invalid_input, std::string(who) + ": need a non-empty tensor of rank >= 1");
  }
  require_finite(x.data(), who);
}

// Fixed-M NVFP4 (M = 6 or 4) or MXFP4 quantization. on_block, when given,
// receives every BlockQuantResult keyed by block index.
template <typename OnBlock>
QuantizedTensor quantize_tensor_fixed(const Tensor& x, const QuantConfig& cfg, unsigned threads,
                                      OnBlock&& on_block) {
  cfg.validate();
  if (cfg.scale_mode == ScaleMode::adaptive46) {
    throw Error(Errc::invalid_config, "quantize_tensor_fixed: adaptive mode");
  }
  check_quantizable(x, "quantize_tensor");
  const float alpha = tensor_scale_for(x, cfg);
  const Rounding rounding = cfg.rounding;
  if (cfg.format == Format::mxfp4) {
    return detail::quantize_blocks(
        x, cfg.format, alpha, threads,
        [&](std::size_t bi, std::span<const float> v, std::uint8_t* out) {
          const BlockQuantResult r = detail::quantize_block_mx_unchecked(v, rounding, bi);
          detail::store_codes(r, out);
          on_block(bi, r);
          return r.scale_bits;
        });
  }
  const double m = cfg.scale_mode == ScaleMode::fixed4 ? 4.0 : 6.0;
  return detail::quantize_blocks(
      x, cfg.format, alpha, threads,
      [&](std::size_t bi, std::span<const float> v, std::uint8_t* out) {
        const BlockQuantResult r = detail::quantize_block_unchecked(v, alpha, m, rounding, bi);
        detail::store_codes(r, out);
        on_block(bi, r);
        return r.scale_bits;
      });
}

inline QuantizedTensor quantize_tensor_fixed(const Tensor& x, const QuantConfig& cfg,
                                             unsigned threads = 1) {
  return quantize_tensor_fixed(x, cfg, threads, [](std::size_t, const BlockQuantResult&) {});
}

// D_j = fp4(code_j) * scale(block) * alpha.
inline Tensor dequantize_tensor(const QuantizedTensor& q) {
  q.validate();
  Tensor out(q.shape);
  const std::size_t len = q.last_dim();
  const std::size_t bs = q.block_size();
  const std::size_t bpr = q.blocks_per_row();
  const double alpha = q.tensor_scale;
  for (std::size_t r = 0; r < q.rows(); ++r) {
    for (std::size_t b = 0; b < bpr; ++b) {
      const double s = q.scale_value(r * bpr + b);
      if (std::isnan(s)) throw Error(Errc::corrupt_data, "NaN block scale");
      const std::size_t begin = r * len + b * bs;
      const std::size_t end = begin + std::min(bs, len - b * bs);
      for (std::size_t i = begin; i < end; ++i) {
        out[i] = static_cast<float>(detail::dequantized(q.code(i), s, alpha));
      }
    }
  }
  return out;
}

}  // namespace nvfp4emu

#endif  // NVFP4EMU_BLOCK_QUANT_HPP
