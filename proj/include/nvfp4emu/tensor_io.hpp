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

// Binary containers. Everything is little-endian.
//
// Dense tensor ("FQT1"):
//   [0,4)   magic "FQT1"
//   [4]     dtype: 0 = float32, 1 = bf16
//   [5]     rank R
//   ...     R x u64 dims
//   ...     row-major payload, 4 or 2 bytes per element
//
// Quantized tensor ("NVF4"):
//   [0,4)   magic "NVF4"
//   [4]     format: 0 = NVFP4 (16-value blocks, E4M3 scales)
//                   1 = MXFP4 (32-value blocks, E8M0 scales)
//   [5]     rank R
//   ...     R x u64 dims
//   ...     f32 tensor scale (exactly 1.0 for MXFP4)
//   ...     one scale byte per block, ceil(last_dim / block) * rows blocks,
//           rows in order, blocks left to right
//   ...     ceil(numel / 2) code bytes; element 2i in the low nibble of
//           byte i, element 2i+1 in the high nibble; an odd tail's high
//           nibble is zero
//
// No trailing bytes are allowed in either container.

#ifndef NVFP4EMU_TENSOR_IO_HPP
#define NVFP4EMU_TENSOR_IO_HPP

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nvfp4emu/block_quant.hpp"

namespace nvfp4emu {

enum class Dtype : std::uint8_t { f32 = 0, bf16 = 1 };

inline constexpr std::array<char, 4> kTensorMagic = {'F', 'Q', 'T', '1'};
inline constexpr std::array<char, 4> kQuantMagic = {'N', 'V', 'F', '4'};

namespace detail {

class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void magic(const std::array<char, 4>& m) {
    for (char c : m) buf_.push_back(static_cast<std::uint8_t>(c));
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

  std::size_t remaining() const noexcept { return b_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw Error(Errc::truncated, std::string("while reading ") + what);
  }
  bool magic(const std::array<char, 4>& m) {
    need(4, "magic");
    const bool ok = std::memcmp(b_.data() + pos_, m.data(), 4) == 0;
    pos_ += 4;
    return ok;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::io_error, "failed reading " + path.string());
  return data;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::io_error, "failed writing " + path.string());
}

// Reads rank and dims, and rejects shapes whose payload (nibbles_per_element
// per value) cannot fit in the rest of the buffer before anything is
// allocated.
inline Shape read_shape(ByteReader& r, std::uint64_t nibbles_per_element) {
  const std::uint8_t rank = r.u8("rank");
  Shape shape(rank);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / 8;
  std::uint64_t numel = 1;
  for (auto& d : shape) {
    const std::uint64_t v = r.u64("dims");
    if (v != 0 && numel > limit / v) throw Error(Errc::truncated, "dimension product overflows");
    numel *= v;
    d = static_cast<std::size_t>(v);
  }
  if ((numel * nibbles_per_element + 1) / 2 > r.remaining()) {
    throw Error(Errc::truncated, "payload shorter than the declared shape");
  }
  return shape;
}

inline void write_shape(ByteWriter& w, const Shape& shape) {
  if (shape.size() > 255) throw Error(Errc::invalid_input, "rank above 255");
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) w.u64(d);
}

inline void expect_end(const ByteReader& r) {
  if (r.remaining() != 0) {
    throw Error(Errc::length_mismatch, std::to_string(r.remaining()) + " trailing bytes");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dense tensors

inline std::vector<std::uint8_t> encode_tensor(const Tensor& x, Dtype dtype = Dtype::f32) {
  detail::ByteWriter w;
  w.magic(kTensorMagic);
  w.u8(static_cast<std::uint8_t>(dtype));
  detail::write_shape(w, x.shape());
  for (float v : x.data()) {
    if (dtype == Dtype::bf16) {
      w.u16(float_to_bf16_rne(v));
    } else {
      w.f32(v);
    }
  }
  return w.take();
}

inline Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (!r.magic(kTensorMagic)) throw Error(Errc::bad_magic, "expected FQT1");
  const std::uint8_t dtype = r.u8("dtype");
  if (dtype > 1) throw Error(Errc::bad_dtype, "dtype byte " + std::to_string(dtype));
  const std::size_t width = dtype == 0 ? 4 : 2;
  Shape shape = detail::read_shape(r, 2 * width);
  const std::size_t n = shape_numel(shape);
  r.need(n * width, "payload");
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = dtype == 0 ? r.f32("payload") : bf16_to_float(r.u16("payload"));
  }
  detail::expect_end(r);
  return Tensor(std::move(shape), std::move(data));
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& x,
                         Dtype dtype = Dtype::f32) {
  detail::write_file(path, encode_tensor(x, dtype));
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Quantized containers

inline std::vector<std::uint8_t> encode_quantized(const QuantizedTensor& q) {
  q.validate();
  if (!q.packed_codes.empty() && q.numel() % 2 == 1 && (q.packed_codes.back() & 0xF0) != 0) {
    throw Error(Errc::corrupt_data, "odd tail nibble must be zero");
  }
  detail::ByteWriter w;
  w.magic(kQuantMagic);
  w.u8(static_cast<std::uint8_t>(q.format));
  detail::write_shape(w, q.shape);
  w.f32(q.tensor_scale);
  w.bytes(q.block_scales);
  w.bytes(q.packed_codes);
  return w.take();
}

inline QuantizedTensor decode_quantized(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (!r.magic(kQuantMagic)) throw Error(Errc::bad_magic, "expected NVF4");
  const std::uint8_t format = r.u8("format");
  if (format > 1) throw Error(Errc::bad_dtype, "format byte " + std::to_string(format));
  QuantizedTensor q;
  q.format = static_cast<Format>(format);
  q.shape = detail::read_shape(r, 1);
  q.tensor_scale = r.f32("tensor scale");
  const auto scales = r.take(q.expected_block_count(), "block scales");
  q.block_scales.assign(scales.begin(), scales.end());
  const auto codes = r.take(q.expected_code_bytes(), "codes");
  q.packed_codes.assign(codes.begin(), codes.end());
  detail::expect_end(r);
  if (q.numel() % 2 == 1 && (q.packed_codes.back() & 0xF0) != 0) {
    throw Error(Errc::corrupt_data, "odd tail nibble must be zero");
  }
  q.validate();
  return q;
}

inline void write_quantized(const std::filesystem::path& path, const QuantizedTensor& q) {
  detail::write_file(path, encode_quantized(q));
}

inline QuantizedTensor read_quantized(const std::filesystem::path& path) {
  return decode_quantized(detail::read_file(path));
}

}  // namespace nvfp4emu

#endif  // NVFP4EMU_TENSOR_IO_HPP
