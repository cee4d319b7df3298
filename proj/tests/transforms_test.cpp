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

#include "nvfp4emu/transforms.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "nvfp4emu/quantize.hpp"
#include "oracles.hpp"

namespace nvfp4emu {
namespace {

double norm2(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

TEST(Rht, TwoPointExample) {
  RhtSpec spec = RhtSpec::make(2, 0);
  spec.signs = {1, 1};
  const Tensor y = apply_rht(Tensor({1, 2}, {1.0f, 1.0f}), spec);
  EXPECT_FLOAT_EQ(y[0], static_cast<float>(std::sqrt(2.0)));
  EXPECT_FLOAT_EQ(y[1], 0.0f);
}

TEST(Rht, MatchesExplicitMatrix) {
  const RhtSpec spec = RhtSpec::make(16, 42);
  const auto v = oracle::gaussian(16, 1);
  const Tensor y = apply_rht(Tensor({16}, v), spec);
  for (std::size_t i = 0; i < 16; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      const double h = (std::popcount(i & j) % 2) ? -1.0 : 1.0;
      acc += h * spec.signs[j] * v[j];
    }
    EXPECT_NEAR(y[i], acc / 4.0, 1e-5);
  }
}

TEST(Rht, PreservesNormAndInverts) {
  for (std::uint64_t seed : {0u, 1u, 77u}) {
    const RhtSpec spec = RhtSpec::make(16, seed);
    for (std::size_t g = 0; g < 50; ++g) {
      const Tensor x({16}, oracle::gaussian(16, seed * 1000 + g, 3.0));
      const Tensor y = apply_rht(x, spec);
      const double nx = norm2(x.data());
      EXPECT_NEAR(norm2(y.data()), nx, 1e-5 * nx);
      const Tensor back = inverse_rht(y, spec);
      for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(back[i], x[i], 1e-6 * std::max(1.0, nx));
    }
  }
}

TEST(Rht, SignsAreDeterministicAndMixed) {
  const RhtSpec a = RhtSpec::make(16, 5);
  EXPECT_EQ(a.signs, RhtSpec::make(16, 5).signs);
  EXPECT_NE(a.signs, RhtSpec::make(16, 6).signs);
}

TEST(Rht, Errors) {
  const RhtSpec spec = RhtSpec::make(16, 0);
  EXPECT_THROW(apply_rht(Tensor({2, 24}), spec), Error);
  EXPECT_THROW(RhtSpec::make(12, 0), Error);
  RhtSpec bad = spec;
  bad.signs[3] = 0;
  EXPECT_THROW(apply_rht(Tensor({1, 16}), bad), Error);
  try {
    apply_rht(Tensor({3, 8}), spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape_mismatch);
  }
}

TEST(Weights2d, ConstantTile) {
  const Tensor w({16, 16}, std::vector<float>(256, 1.0f));
  const QuantizedTensor q = quantize_weights_2d(w, QuantConfig::fixed6());
  // alpha = 1 / 2688, so the tile scale is 448 and every code is 6.
  for (std::uint8_t s : q.block_scales) EXPECT_EQ(s, q.block_scales[0]);
  EXPECT_EQ(q.scale_value(0), 448.0);
  for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(decode_fp4(q.code(i)), 6.0);
  EXPECT_EQ(dequantize_tensor(q), w);
}

TEST(Weights2d, OneScalePerTile) {
  const Tensor w({40, 50}, oracle::gaussian(40 * 50, 3));
  const QuantizedTensor q = quantize_weights_2d(w, QuantConfig::fixed6());
  ASSERT_EQ(q.block_scales.size(), 40u * 4u);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t b = 0; b < 4; ++b)
      EXPECT_EQ(q.block_scales[r * 4 + b], q.block_scales[(r / 16 * 16) * 4 + b]);
}

TEST(Weights2d, TransposeQuantizesToTranspose) {
  for (const QuantConfig& cfg : {QuantConfig::fixed6(), QuantConfig::adaptive(SelectionRule::mse),
                                 QuantConfig::adaptive(SelectionRule::l1),
                                 QuantConfig::adaptive(SelectionRule::absmax)}) {
    const Tensor w({48, 80}, oracle::heavy_tailed(48 * 80, 9));
    const Tensor a = dequantize_tensor(quantize_weights_2d(w, cfg));
    const Tensor b = dequantize_tensor(quantize_weights_2d(transpose2d(w), cfg));
    EXPECT_EQ(transpose2d(a), b);
  }
}

TEST(Weights2d, BroadcastWorkedBlockPicksFour) {
  std::vector<float> v(256);
  const float row[4] = {10, 20, 30, 40};
  for (std::size_t i = 0; i < 256; ++i) v[i] = row[i % 4];
  QuantConfig cfg = QuantConfig::adaptive();
  cfg.forced_tensor_scale = 1.0f;
  const QuantizedTensor q = quantize_weights_2d(Tensor({16, 16}, v), cfg);
  EXPECT_EQ(q.scale_value(0), 10.0);
  EXPECT_EQ(dequantize_tensor(q).storage(), v);
}

TEST(Weights2d, CoarserThanRowBlocks) {
  const Tensor w({128, 128}, oracle::gaussian(128 * 128, 10));
  const double e2 = mse(w.data(), dequantize_tensor(quantize_weights_2d(w, QuantConfig::fixed6())).data());
  const double e1 = mse(w.data(), fake_quantize(w, QuantConfig::fixed6()).data());
  EXPECT_GE(e2, e1);
}

TEST(Weights2d, RejectsNonMatrixAndMxfp) {
  EXPECT_THROW(quantize_weights_2d(Tensor({16}), QuantConfig::fixed6()), Error);
  EXPECT_THROW(quantize_weights_2d(Tensor({16, 16}), QuantConfig::mxfp4()), Error);
}

TEST(Weights2d, ThreadInvariant) {
  const Tensor w({64, 96}, oracle::gaussian(64 * 96, 4));
  QuantConfig cfg = QuantConfig::adaptive();
  cfg.rounding = Rounding::stochastic(3);
  EXPECT_EQ(quantize_weights_2d(w, cfg, 1), quantize_weights_2d(w, cfg, 4));
}

}  // namespace
}  // namespace nvfp4emu
