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

#include "nvfp4emu/tensor_io.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <vector>

#include "nvfp4emu/quantize.hpp"
#include "oracles.hpp"

namespace nvfp4emu {
namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::invalid_input;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / (std::string("nvfp4emu_io_") + name);
}

TEST(DenseIo, RoundTripF32) {
  const Tensor x({3, 5, 7}, oracle::gaussian(105, 1));
  EXPECT_EQ(decode_tensor(encode_tensor(x)), x);
  const auto path = temp_file("f32.bin");
  write_tensor(path, x);
  EXPECT_EQ(read_tensor(path), x);
  std::filesystem::remove(path);
}

TEST(DenseIo, LayoutBytes) {
  const auto bytes = encode_tensor(Tensor({2}, {1.0f, -2.0f}));
  ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 8 + 8);
  EXPECT_EQ(std::memcmp(bytes.data(), "FQT1", 4), 0);
  EXPECT_EQ(bytes[4], 0);
  EXPECT_EQ(bytes[5], 1);
  EXPECT_EQ(bytes[6], 2);
  for (int i = 7; i < 14; ++i) EXPECT_EQ(bytes[i], 0);
  EXPECT_EQ(bytes[17], 0x3F);  // 1.0f = 0x3F800000 little-endian
  EXPECT_EQ(bytes[16], 0x80);
}

TEST(DenseIo, RoundTripBf16) {
  const Tensor x({4, 9}, oracle::gaussian(36, 2));
  const Tensor back = decode_tensor(encode_tensor(x, Dtype::bf16));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(back[i], round_to_bf16(x[i]));
  EXPECT_EQ(encode_tensor(x, Dtype::bf16).size(), 6u + 16 + 36 * 2);
}

TEST(DenseIo, Errors) {
  auto bytes = encode_tensor(Tensor({3, 4}, oracle::gaussian(12, 3)));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_tensor(bad); }), Errc::bad_magic);
  bad = bytes;
  bad[4] = 2;
  EXPECT_EQ(code_of([&] { decode_tensor(bad); }), Errc::bad_dtype);
  bad = bytes;
  bad.resize(bad.size() - 4);  // 11 floats for a 3x4 shape
  EXPECT_EQ(code_of([&] { decode_tensor(bad); }), Errc::truncated);
  bad = bytes;
  bad.push_back(0);
  EXPECT_EQ(code_of([&] { decode_tensor(bad); }), Errc::length_mismatch);
  bad = bytes;
  bad[6] = 0xFF;  // enormous first dim
  bad[13] = 0x7F;
  EXPECT_EQ(code_of([&] { decode_tensor(bad); }), Errc::truncated);
  EXPECT_EQ(code_of([&] { decode_tensor(std::vector<std::uint8_t>{'F', 'Q'}); }), Errc::truncated);
  EXPECT_EQ(code_of([&] { read_tensor("/nonexistent/dir/x.bin"); }), Errc::io_error);
}

TEST(QuantIo, RoundTripAllFormats) {
  const Tensor x({5, 37}, oracle::heavy_tailed(5 * 37, 4));
  for (const QuantConfig& cfg : {QuantConfig::fixed6(), QuantConfig::fixed4(), QuantConfig::adaptive(),
                                 QuantConfig::mxfp4()}) {
    const QuantizedTensor q = quantize_tensor(x, cfg);
    const auto bytes = encode_quantized(q);
    const QuantizedTensor back = decode_quantized(bytes);
    EXPECT_EQ(back, q);
    EXPECT_EQ(encode_quantized(back), bytes);
    EXPECT_EQ(dequantize_tensor(back), dequantize_tensor(q));
  }
}

TEST(QuantIo, AdaptiveWorkedBlockLayout) {
  std::vector<float> v(16, 0.0f);
  v[0] = 10, v[1] = 20, v[2] = 30, v[3] = 40;
  QuantConfig cfg = QuantConfig::adaptive();
  cfg.forced_tensor_scale = 1.0f;
  const QuantizedTensor q = quantize_tensor(Tensor({1, 16}, v), cfg);
  const auto bytes = encode_quantized(q);
  ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 16 + 4 + 1 + 8);
  EXPECT_EQ(std::memcmp(bytes.data(), "NVF4", 4), 0);
  EXPECT_EQ(bytes[4], 0);
  float alpha = 0.0f;
  std::memcpy(&alpha, bytes.data() + 22, 4);
  EXPECT_EQ(alpha, 1.0f);
  EXPECT_EQ(decode_fp8_e4m3(Fp8E4M3{bytes[26]}), 10.0);
  // codes 1, 2, 3, 4 -> FP4 codes 2, 4, 5, 6 packed low nibble first
  EXPECT_EQ(bytes[27], 0x42);
  EXPECT_EQ(bytes[28], 0x65);
  for (std::size_t i = 29; i < bytes.size(); ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(QuantIo, MxfpStoresUnitTensorScale) {
  const QuantizedTensor q = quantize_tensor(Tensor({2, 40}, oracle::gaussian(80, 5)), QuantConfig::mxfp4());
  const auto bytes = encode_quantized(q);
  EXPECT_EQ(bytes[4], 1);
  float alpha = 0.0f;
  std::memcpy(&alpha, bytes.data() + 6 + 16, 4);
  EXPECT_EQ(alpha, 1.0f);
  EXPECT_EQ(bytes.size(), 26u + 4 + 40);
}

TEST(QuantIo, Errors) {
  const QuantizedTensor q = quantize_tensor(Tensor({3, 5}, oracle::gaussian(15, 6)), QuantConfig::fixed6());
  const auto bytes = encode_quantized(q);
  auto bad = bytes;
  bad[3] = '5';
  EXPECT_EQ(code_of([&] { decode_quantized(bad); }), Errc::bad_magic);
  bad = bytes;
  bad[4] = 7;
  EXPECT_EQ(code_of([&] { decode_quantized(bad); }), Errc::bad_dtype);
  bad = bytes;
  bad.pop_back();
  EXPECT_EQ(code_of([&] { decode_quantized(bad); }), Errc::truncated);
  bad = bytes;
  bad.push_back(0);
  EXPECT_EQ(code_of([&] { decode_quantized(bad); }), Errc::length_mismatch);
  bad = bytes;
  bad.back() |= 0xF0;  // 15 codes: the tail high nibble must be zero
  EXPECT_EQ(code_of([&] { decode_quantized(bad); }), Errc::corrupt_data);

  QuantizedTensor mx = quantize_tensor(Tensor({1, 32}, oracle::gaussian(32, 7)), QuantConfig::mxfp4());
  mx.tensor_scale = 2.0f;
  EXPECT_EQ(code_of([&] { encode_quantized(mx); }), Errc::corrupt_data);
  QuantizedTensor short_scales = q;
  short_scales.block_scales.pop_back();
  EXPECT_EQ(code_of([&] { encode_quantized(short_scales); }), Errc::length_mismatch);
}

TEST(QuantIo, FileRoundTrip) {
  const QuantizedTensor q = quantize_tensor(Tensor({8, 16}, oracle::gaussian(128, 8)), QuantConfig::adaptive());
  const auto path = temp_file("q.nvf4");
  write_quantized(path, q);
  EXPECT_EQ(read_quantized(path), q);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace nvfp4emu
