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

#ifndef NVFP4EMU_ERROR_HPP
#define NVFP4EMU_ERROR_HPP

#include <stdexcept>
#include <string>

namespace nvfp4emu {

enum class Errc {
  invalid_input,    // NaN/Inf data, out-of-range arguments
  invalid_config,   // QuantConfig combination that cannot be honored
  shape_mismatch,
  format_mismatch,  // NVFP4 operand mixed with MXFP4 operand
  io_error,
  bad_magic,
  truncated,
  bad_dtype,
  length_mismatch,  // scale/code arrays inconsistent with the shape
  corrupt_data,     // e.g. a NaN scale code inside a container
};

inline const char* errc_name(Errc e) noexcept {
  switch (e) {
    case Errc::invalid_input: return "invalid input";
    case Errc::invalid_config: return "invalid config";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::format_mismatch: return "format mismatch";
    case Errc::io_error: return "i/o error";
    case Errc::bad_magic: return "bad magic";
    case Errc::truncated: return "truncated payload";
    case Errc::bad_dtype: return "bad dtype";
    case Errc::length_mismatch: return "length mismatch";
    case Errc::corrupt_data: return "corrupt data";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace nvfp4emu

#endif  // NVFP4EMU_ERROR_HPP
