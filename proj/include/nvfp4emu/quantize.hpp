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

#ifndef NVFP4EMU_QUANTIZE_HPP
#define NVFP4EMU_QUANTIZE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "nvfp4emu/adaptive46.hpp"
#include "nvfp4emu/block_quant.hpp"

namespace nvfp4emu {

// Quantizes x into a block-scaled container according to cfg.
inline QuantizedTensor quantize_tensor(const Tensor& x, const QuantConfig& cfg,
                                       unsigned threads = 1) {
  cfg.validate();
  if (cfg.simulated()) {
    throw Error(Errc::invalid_config,
                "simulation switches produce a dequantized tensor; use quantize_tensor_simulated");
  }
  if (cfg.scale_mode == ScaleMode::adaptive46) return quantize_tensor_adaptive(x, cfg, threads);
  return quantize_tensor_fixed(x, cfg, threads);
}

inline Tensor fake_quantize(const Tensor& x, const QuantConfig& cfg, unsigned threads = 1) {
  return dequantize_tensor(quantize_tensor(x, cfg, threads));
}

// Dequantized NVFP4 reconstruction with one error source switched off:
//
//   sim_hp_scales  block scales stay unrounded (max / (alpha * M))
//   sim_hp_values  scaled values skip the FP4 cast
//   threshold t    only values with min(|scaled|, 6) <= t are cast; the rest
//                  pass through unchanged, so t = 0 reproduces x and t = 6
//                  reproduces the full quantization
//
// With no switch set the result equals fake_quantize(x, cfg).
inline Tensor quantize_tensor_simulated(const Tensor& x, const QuantConfig& cfg,
                                        unsigned threads = 1) {
  cfg.validate();
  if (cfg.format != Format::nvfp4 || cfg.scale_mode == ScaleMode::adaptive46) {
    throw Error(Errc::invalid_config, "simulation needs fixed-M NVFP4");
  }
  check_quantizable(x, "quantize_tensor_simulated");

  const float alpha_f = tensor_scale_for(x, cfg);
  const double alpha = alpha_f;
  const double m = cfg.scale_mode == ScaleMode::fixed4 ? 4.0 : 6.0;
  const std::size_t len = x.last_dim();
  const std::size_t bpr = (len + kNvfp4BlockSize - 1) / kNvfp4BlockSize;
  const bool stochastic = cfg.rounding.mode == RoundingMode::stochastic;
  const auto in = x.data();
  Tensor out(x.shape());
  auto dst = out.data();

  parallel_for(x.rows(), threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t b = 0; b < bpr; ++b) {
        const std::size_t begin = r * len + b * kNvfp4BlockSize;
        const std::size_t n = std::min(kNvfp4BlockSize, len - b * kNvfp4BlockSize);
        const auto block = in.subspan(begin, n);
        const std::size_t bi = r * bpr + b;
        const double amax = max_abs(block);

        double scale = 0.0;
        if (cfg.sim_hp_scales) {
          if (amax == 0.0) {
            std::fill_n(dst.begin() + static_cast<std::ptrdiff_t>(begin), n, 0.0f);
            continue;
          }
          scale = amax / (alpha * m);
        } else {
          scale = decode_fp8_e4m3(detail::block_scale_from_max(amax, alpha, m));
        }
        const double denom = alpha * scale;
        const SampleStream stream =
            SampleStream::make(cfg.rounding.seed, bi, static_cast<std::uint64_t>(m));

        for (std::size_t i = 0; i < n; ++i) {
          const double v = block[i];
          const double scaled = v / denom;
          if (cfg.sim_hp_values) {
            dst[begin + i] = static_cast<float>(scaled * scale * alpha);
            continue;
          }
          if (cfg.threshold && std::min(std::fabs(scaled), kFp4Max) > *cfg.threshold) {
            dst[begin + i] = block[i];
            continue;
          }
          const Fp4Code c = stochastic
                                ? detail::encode_fp4_stochastic_unchecked(scaled, stream.uniform(i))
                                : detail::encode_fp4_rne_unchecked(scaled);
          dst[begin + i] = static_cast<float>(detail::dequantized(c, scale, alpha));
        }
      }
    }
  });
  return out;
}

}  // namespace nvfp4emu

#endif  // NVFP4EMU_QUANTIZE_HPP
