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

// Adaptive 4-or-6 block scaling.
//
// FP4 has no value between 4 and 6, so mapping a block maximum to 6 leaves
// values near 5/6 of the maximum badly represented. Mapping the maximum to 4
// instead gives a more uniform grid near the top (3/4 of the maximum is
// exact) at the cost of dynamic range. Each block is quantized both ways and
// the candidate with strictly smaller error wins; ties keep M = 6.
//
// With M = 4 the block scale is 1.5x larger, so the tensor scale uses a cap
// of 256 instead of 448: 256 * 6 / 4 = 384 is still an exact E4M3 value.
//
// The choice is absorbed into the E4M3 scale value and is not stored, so
// the output is an ordinary NVFP4 container.

#ifndef NVFP4EMU_ADAPTIVE46_HPP
#define NVFP4EMU_ADAPTIVE46_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nvfp4emu/block_quant.hpp"

namespace nvfp4emu {

struct BlockCandidates {
  BlockQuantResult six;
  BlockQuantResult four;

  bool prefers_four(SelectionRule rule) const noexcept {
    return four.error(rule) < six.error(rule);
  }
  const BlockQuantResult& select(SelectionRule rule) const noexcept {
    return prefers_four(rule) ? four : six;
  }
};

namespace detail {

// Both candidates in one pass over the block. Produces exactly what two
// quantize_block calls (M = 6, M = 4) would.
inline BlockCandidates quantize_block_candidates_unchecked(std::span<const float> block,
                                                           double alpha,
                                                           const Rounding& rounding,
                                                           std::uint64_t block_index) noexcept {
  BlockCandidates c;
  const double amax = max_abs(block);
  const Fp8E4M3 s6 = block_scale_from_max(amax, alpha, 6.0);
  const Fp8E4M3 s4 = block_scale_from_max(amax, alpha, 4.0);
  c.six.scale_bits = s6.bits;
  c.six.scale = decode_fp8_e4m3(s6);
  c.six.chosen_m = 6;
  c.four.scale_bits = s4.bits;
  c.four.scale = decode_fp8_e4m3(s4);
  c.four.chosen_m = 4;

  const double denom6 = alpha * c.six.scale;
  const double denom4 = alpha * c.four.scale;
  const bool stochastic = rounding.mode == RoundingMode::stochastic;
  const SampleStream st6 = SampleStream::make(rounding.seed, block_index, 6);
  const SampleStream st4 = SampleStream::make(rounding.seed, block_index, 4);

  double sq6 = 0.0, l1_6 = 0.0, mx6 = 0.0;
  double sq4 = 0.0, l1_4 = 0.0, mx4 = 0.0;
  for (std::size_t i = 0; i < block.size(); ++i) {
    const double x = block[i];
    const Fp4Code c6 = stochastic ? encode_fp4_stochastic_unchecked(x / denom6, st6.uniform(i))
                                  : encode_fp4_rne_unchecked(x / denom6);
    const Fp4Code c4 = stochastic ? encode_fp4_stochastic_unchecked(x / denom4, st4.uniform(i))
                                  : encode_fp4_rne_unchecked(x / denom4);
    c.six.codes[i] = c6;
    c.four.codes[i] = c4;
    const double e6 = std::fabs(dequantized(c6, c.six.scale, alpha) - x);
    const double e4 = std::fabs(dequantized(c4, c.four.scale, alpha) - x);
    sq6 += e6 * e6;
    l1_6 += e6;
    mx6 = std::max(mx6, e6);
    sq4 += e4 * e4;
    l1_4 += e4;
    mx4 = std::max(mx4, e4);
  }
  const auto n = static_cast<double>(block.size());
  c.six.size = c.four.size = static_cast<std::uint8_t>(block.size());
  c.six.err_mse = block.empty() ? 0.0 : sq6 / n;
  c.four.err_mse = block.empty() ? 0.0 : sq4 / n;
  c.six.err_l1 = l1_6;
  c.four.err_l1 = l1_4;
  c.six.err_max = mx6;
  c.four.err_max = mx4;
  return c;
}

}  // namespace detail

inline BlockCandidates quantize_block_candidates(std::span<const float> block, double alpha,
                                                 const Rounding& rounding = {},
                                                 std::uint64_t block_index = 0) {
  detail::check_alpha_m(alpha, 6.0, "quantize_block_candidates");
  detail::check_block(block, kNvfp4BlockSize, "quantize_block_candidates");
  return detail::quantize_block_candidates_unchecked(block, alpha, rounding, block_index);
}

// Returns the M = 4 candidate iff its error under `rule` is strictly smaller.
// Under stochastic rounding each candidate draws from its own stream keyed by
// (seed, block_index, M) and the realized errors are compared.
inline BlockQuantResult quantize_block_adaptive(std::span<const float> block, double alpha,
                                                SelectionRule rule,
                                                const Rounding& rounding = {},
                                                std::uint64_t block_index = 0) {
  return quantize_block_candidates(block, alpha, rounding, block_index).select(rule);
}

inline void check_adaptive(const QuantConfig& cfg) {
  cfg.validate();
  if (cfg.scale_mode != ScaleMode::adaptive46) {
    throw Error(Errc::invalid_config, "quantize_tensor_adaptive: scale_mode is not adaptive46");
  }
}

template <typename OnBlock>
QuantizedTensor quantize_tensor_adaptive(const Tensor& x, const QuantConfig& cfg,
                                         unsigned threads, OnBlock&& on_block) {
  check_adaptive(cfg);
  check_quantizable(x, "quantize_tensor_adaptive");
  const float alpha = tensor_scale_for(x, cfg);
  const Rounding rounding = cfg.rounding;
  const SelectionRule rule = cfg.rule;
  return detail::quantize_blocks(
      x, Format::nvfp4, alpha, threads,
      [&](std::size_t bi, std::span<const float> v, std::uint8_t* out) {
        const BlockCandidates c =
            detail::quantize_block_candidates_unchecked(v, alpha, rounding, bi);
        const BlockQuantResult& r = c.select(rule);
        detail::store_codes(r, out);
        on_block(bi, c);
        return r.scale_bits;
      });
}

inline QuantizedTensor quantize_tensor_adaptive(const Tensor& x, const QuantConfig& cfg,
                                                unsigned threads = 1) {
  return quantize_tensor_adaptive(x, cfg, threads,
                                  [](std::size_t, const BlockCandidates&) {});
}

// ---------------------------------------------------------------------------
// Selection statistics

inline constexpr std::array<SelectionRule, 3> kAllRules = {
    SelectionRule::mse, SelectionRule::l1, SelectionRule::absmax};

inline const char* rule_name(SelectionRule r) noexcept {
  switch (r) {
    case SelectionRule::mse: return "mse";
    case SelectionRule::l1: return "l1";
    case SelectionRule::absmax: return "absmax";
  }
  return "?";
}

struct SelectionStats {
  std::size_t blocks = 0;
  SelectionRule rule = SelectionRule::mse;
  double fraction_four = 0.0;                    // under `rule`
  std::array<std::size_t, 3> chose_four{};       // indexed like kAllRules
  std::size_t disagree_mse_l1 = 0;
  std::size_t disagree_mse_absmax = 0;
  std::size_t disagree_l1_absmax = 0;
  std::array<double, 3> mse_by_rule{};           // tensor reconstruction MSE
  double mse_fixed6 = 0.0;                       // at the same tensor scale
  double mse_fixed4 = 0.0;
  float tensor_scale = 1.0f;
};

// Per-block 4-vs-6 decisions under every rule, at the tensor scale `cfg`
// would use. Only the tensor scale, rounding and rule are read from cfg.
inline SelectionStats selection_stats(const Tensor& x, const QuantConfig& cfg,
                                      unsigned threads = 1) {
  cfg.validate();
  if (cfg.format != Format::nvfp4) {
    throw Error(Errc::invalid_config, "selection_stats: NVFP4 only");
  }
  check_quantizable(x, "selection_stats");

  struct Record {
    std::array<bool, 3> four{};
    std::array<double, 3> sq{};  // sum of squared errors of the selected candidate
    double sq6 = 0.0;
    double sq4 = 0.0;
  };
  const float alpha = tensor_scale_for(x, cfg);
  const std::size_t len = x.last_dim();
  const std::size_t bpr = (len + kNvfp4BlockSize - 1) / kNvfp4BlockSize;
  const std::size_t rows = x.rows();
  std::vector<Record> recs(rows * bpr);
  const auto data = x.data();
  const Rounding rounding = cfg.rounding;

  parallel_for(rows, threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t b = 0; b < bpr; ++b) {
        const std::size_t n = std::min(kNvfp4BlockSize, len - b * kNvfp4BlockSize);
        const std::size_t bi = r * bpr + b;
        const BlockCandidates c = detail::quantize_block_candidates_unchecked(
            data.subspan(r * len + b * kNvfp4BlockSize, n), alpha, rounding, bi);
        Record& rec = recs[bi];
        const auto nd = static_cast<double>(n);
        rec.sq6 = c.six.err_mse * nd;
        rec.sq4 = c.four.err_mse * nd;
        for (std::size_t k = 0; k < kAllRules.size(); ++k) {
          rec.four[k] = c.prefers_four(kAllRules[k]);
          rec.sq[k] = rec.four[k] ? rec.sq4 : rec.sq6;
        }
      }
    }
  });

  SelectionStats s;
  s.blocks = recs.size();
  s.rule = cfg.rule;
  s.tensor_scale = alpha;
  std::array<double, 3> sum_sq{};
  double sum6 = 0.0, sum4 = 0.0;
  for (const Record& rec : recs) {
    for (std::size_t k = 0; k < 3; ++k) {
      s.chose_four[k] += rec.four[k];
      sum_sq[k] += rec.sq[k];
    }
    s.disagree_mse_l1 += rec.four[0] != rec.four[1];
    s.disagree_mse_absmax += rec.four[0] != rec.four[2];
    s.disagree_l1_absmax += rec.four[1] != rec.four[2];
    sum6 += rec.sq6;
    sum4 += rec.sq4;
  }
  const auto numel = static_cast<double>(x.numel());
  for (std::size_t k = 0; k < 3; ++k) s.mse_by_rule[k] = sum_sq[k] / numel;
  s.mse_fixed6 = sum6 / numel;
  s.mse_fixed4 = sum4 / numel;
  const auto rule_idx = static_cast<std::size_t>(cfg.rule);
  s.fraction_four =
      s.blocks == 0 ? 0.0 : static_cast<double>(s.chose_four[rule_idx]) / static_cast<double>(s.blocks);
  return s;
}

}  // namespace nvfp4emu

#endif  // NVFP4EMU_ADAPTIVE46_HPP
