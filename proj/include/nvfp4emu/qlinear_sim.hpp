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

// Emulated FP4 linear layer. For a dense layer y = x W^T with x [B, in] and
// W [out, in]:
//
//   FPROP  y  = Q(x) Q2d(W)^T            RNE, 1D blocks on x, 16x16 tiles on W
//   DGRAD  dx = SR(dy) Q2d(W)            W^T reuses the same tiles
//   WGRAD  dW = SR(H dy^T) SR(H x^T)^T   RHT along the batch (contraction) dim
//
// Every product is computed as dequantize-then-multiply with float
// accumulation in a fixed k order. Gradients treat quantization as identity.

#ifndef NVFP4EMU_QLINEAR_SIM_HPP
#define NVFP4EMU_QLINEAR_SIM_HPP

#include <cstddef>
#include <string>

#include "nvfp4emu/quantize.hpp"
#include "nvfp4emu/transforms.hpp"

namespace nvfp4emu {

struct MatmulOptions {
  unsigned threads = 1;
  bool bf16_output = false;
};

namespace detail {

inline void check_operands(const QuantizedTensor& a, const QuantizedTensor& b) {
  if (a.format != b.format) {
    throw Error(Errc::format_mismatch, "matmul operands use different block formats");
  }
  if (a.shape.size() != 2 || b.shape.size() != 2) {
    throw Error(Errc::shape_mismatch, "matmul operands must be 2-D");
  }
}

// C = A B^T for A [m, k] and Bt [n, k], float accumulation over ascending k.
inline Tensor matmul_abt_f32(const Tensor& a, const Tensor& bt, const MatmulOptions& opt) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = bt.shape()[0];
  Tensor c(Shape{m, n});
  const float* pa = a.data().data();
  const float* pb = bt.data().data();
  float* pc = c.data().data();
  parallel_for(m, opt.threads, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      const float* row = pa + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const float* col = pb + j * k;
        float acc = 0.0f;
        for (std::size_t p = 0; p < k; ++p) {
          const float prod = row[p] * col[p];
          acc += prod;
        }
        pc[i * n + j] = opt.bf16_output ? round_to_bf16(acc) : acc;
      }
    }
  });
  return c;
}

}  // namespace detail

// A [m, k] times B [k, n].
inline Tensor emulated_fp4_matmul(const QuantizedTensor& a, const QuantizedTensor& b,
                                  const MatmulOptions& opt = {}) {
  detail::check_operands(a, b);
  if (a.shape[1] != b.shape[0]) {
    throw Error(Errc::shape_mismatch, "matmul: inner dimensions " + shape_string(a.shape) +
                                          " x " + shape_string(b.shape));
  }
  return detail::matmul_abt_f32(dequantize_tensor(a), transpose2d(dequantize_tensor(b)), opt);
}

// A [m, k] times B^T for B [n, k]; both operands blocked along k, the layout
// block-scaled tensor cores consume.
inline Tensor emulated_fp4_matmul_nt(const QuantizedTensor& a, const QuantizedTensor& b,
                                     const MatmulOptions& opt = {}) {
  detail::check_operands(a, b);
  if (a.shape[1] != b.shape[1]) {
    throw Error(Errc::shape_mismatch, "matmul_nt: contraction dims " + shape_string(a.shape) +
                                          " vs " + shape_string(b.shape));
  }
  return detail::matmul_abt_f32(dequantize_tensor(a), dequantize_tensor(b), opt);
}

// Stream tags separating the stochastic draws of each operand.
inline constexpr std::uint64_t kDgradOutputGradTag = 1;
inline constexpr std::uint64_t kWgradOutputGradTag = 2;
inline constexpr std::uint64_t kWgradInputTag = 3;
inline constexpr std::uint64_t kWgradRhtTag = 4;

namespace detail {

inline QuantConfig with_rounding(QuantConfig cfg, Rounding r) {
  cfg.rounding = r;
  return cfg;
}

inline void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw Error(Errc::shape_mismatch, std::string(what) + " must be 2-D");
}

}  // namespace detail

// y [B, out] = x [B, in] W[out, in]^T
inline Tensor linear_forward(const Tensor& x, const Tensor& w, const QuantConfig& cfg,
                             const MatmulOptions& opt = {}) {
  detail::require_rank2(x, "x");
  detail::require_rank2(w, "W");
  if (x.shape()[1] != w.shape()[1]) throw Error(Errc::shape_mismatch, "linear_forward: in dims");
  const QuantConfig rne = detail::with_rounding(cfg, Rounding::nearest());
  return emulated_fp4_matmul_nt(quantize_tensor(x, rne, opt.threads),
                                quantize_weights_2d(w, rne, opt.threads), opt);
}

// dx [B, in] = dy [B, out] W [out, in]
inline Tensor linear_dgrad(const Tensor& dy, const Tensor& w, const QuantConfig& cfg,
                           const MatmulOptions& opt = {}) {
  detail::require_rank2(dy, "dy");
  detail::require_rank2(w, "W");
  if (dy.shape()[1] != w.shape()[0]) throw Error(Errc::shape_mismatch, "linear_dgrad: out dims");
  const std::uint64_t seed = cfg.rounding.seed;
  const QuantConfig sr =
      detail::with_rounding(cfg, Rounding::stochastic(derive_seed(seed, kDgradOutputGradTag)));
  const QuantConfig rne = detail::with_rounding(cfg, Rounding::nearest());
  return emulated_fp4_matmul_nt(quantize_tensor(dy, sr, opt.threads),
                                quantize_weights_2d(transpose2d(w), rne, opt.threads), opt);
}

// dW [out, in] = dy [B, out]^T x [B, in]. B must be a multiple of 16.
inline Tensor linear_wgrad(const Tensor& dy, const Tensor& x, const QuantConfig& cfg,
                           const MatmulOptions& opt = {}) {
  detail::require_rank2(dy, "dy");
  detail::require_rank2(x, "x");
  if (dy.shape()[0] != x.shape()[0]) throw Error(Errc::shape_mismatch, "linear_wgrad: batch dims");
  const std::uint64_t seed = cfg.rounding.seed;
  const RhtSpec rht = RhtSpec::make(kNvfp4BlockSize, derive_seed(seed, kWgradRhtTag));
  const QuantConfig sr_dy =
      detail::with_rounding(cfg, Rounding::stochastic(derive_seed(seed, kWgradOutputGradTag)));
  const QuantConfig sr_x =
      detail::with_rounding(cfg, Rounding::stochastic(derive_seed(seed, kWgradInputTag)));
  const QuantizedTensor dyq = quantize_tensor(apply_rht(transpose2d(dy), rht), sr_dy, opt.threads);
  const QuantizedTensor xq = quantize_tensor(apply_rht(transpose2d(x), rht), sr_x, opt.threads);
  return emulated_fp4_matmul_nt(dyq, xq, opt);
}

}  // namespace nvfp4emu

#endif  // NVFP4EMU_QLINEAR_SIM_HPP
