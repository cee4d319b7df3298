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

#ifndef NVFP4EMU_NVFP4EMU_HPP
#define NVFP4EMU_NVFP4EMU_HPP

#include "nvfp4emu/adaptive46.hpp"
#include "nvfp4emu/analysis.hpp"
#include "nvfp4emu/block_quant.hpp"
#include "nvfp4emu/error.hpp"
#include "nvfp4emu/fp_codecs.hpp"
#include "nvfp4emu/qlinear_sim.hpp"
#include "nvfp4emu/quantize.hpp"
#include "nvfp4emu/tensor.hpp"
#include "nvfp4emu/tensor_io.hpp"
#include "nvfp4emu/transforms.hpp"

#endif  // NVFP4EMU_NVFP4EMU_HPP
