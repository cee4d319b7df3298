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

// Diagnostics on where FP4 block quantization loses accuracy. All figures
// are tensor reconstruction MSEs; they indicate the direction of an effect,
// not downstream model quality.

#ifndef NVFP4EMU_ANALYSIS_HPP
#define NVFP4EMU_ANALYSIS_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "nvfp4emu/quantize.hpp"

namespace nvfp4emu {

struct CurvePoint {
  double v = 0.0;
  double relative_error = 0.0;
};

// |fp4(v) - v| / m for a value v already scaled so the block maximum is m.
inline double fp4_relative_error(double m, double v) {
  return std::fabs(decode_fp4(encode_fp4_rne(v)) - v) / m;
}

// n_points values spaced uniformly over [0, m].
inline std::vector<CurvePoint> error_curve(double m, std::size_t n_points) {
  if (m != 4.0 && m != 6.0) throw Error(Errc::invalid_input, "error_curve: M must be 4 or 6");
  if (n_points < 2) throw Error(Errc::invalid_input, "error_curve: need at least 2 points");
  std::vector<CurvePoint> pts(n_points);
  const auto last = static_cast<double>(n_points - 1);
  for (std::size_t j = 0; j < n_points; ++j) {
    const double v = m * static_cast<double>(j) / last;
    pts[j] = {v, fp4_relative_error(m, v)};
  }
  return pts;
}

struct AblationReport {
  double mse_full = 0.0;
  double mse_hp_scales = 0.0;
  double mse_hp_values = 0.0;
  double mean_square = 0.0;  // mean(x^2), for scale-free comparisons
};

namespace detail {

inline QuantConfig without_simulation(QuantConfig cfg) {
  cfg.sim_hp_scales = false;
  cfg.sim_hp_values = false;
  cfg.threshold.reset();
  return cfg;
}

}  // namespace detail

// Full NVFP4 against the two single-source variants, all with the same
// tensor scale and rounding streams.
inline AblationReport ablation_report(const Tensor& x, const QuantConfig& cfg = QuantConfig::fixed6(),
                                      unsigned threads = 1) {
  const QuantConfig base = detail::without_simulation(cfg);
  QuantConfig hp_scales = base;
  hp_scales.sim_hp_scales = true;
  QuantConfig hp_values = base;
  hp_values.sim_hp_values = true;

  AblationReport r;
  r.mse_full = mse(x.data(), quantize_tensor_simulated(x, base, threads).data());
  r.mse_hp_scales = mse(x.data(), quantize_tensor_simulated(x, hp_scales, threads).data());
  r.mse_hp_values = mse(x.data(), quantize_tensor_simulated(x, hp_values, threads).data());
  r.mean_square = mean_square(x.data());
  return r;
}

struct ThresholdPoint {
  double x = 0.0;
  double mse = 0.0;
};

// {0, 0.5, ..., 6}
inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 12; ++i) t.push_back(0.5 * i);
  return t;
}

inline std::vector<ThresholdPoint> threshold_sweep(const Tensor& x, std::span<const double> thresholds,
                                                   const QuantConfig& cfg = QuantConfig::fixed6(),
                                                   unsigned threads = 1) {
  std::vector<ThresholdPoint> out;
  out.reserve(thresholds.size());
  QuantConfig c = detail::without_simulation(cfg);
  for (double t : thresholds) {
    c.threshold = t;
    out.push_back({t, mse(x.data(), quantize_tensor_simulated(x, c, threads).data())});
  }
  return out;
}

struct FormatComparison {
  double mxfp4 = 0.0;
  double nvfp4_fixed6 = 0.0;         // cap 448
  double nvfp4_fixed4 = 0.0;         // cap 448
  double nvfp4_fixed6_cap256 = 0.0;  // same tensor scale as the adaptive run
  double nvfp4_adaptive46 = 0.0;     // MSE rule
};

// forced_tensor_scale, when set, replaces the computed tensor scale of every
// NVFP4 variant.
inline FormatComparison compare_formats(const Tensor& x,
                                        std::optional<float> forced_tensor_scale = std::nullopt,
                                        unsigned threads = 1) {
  auto run = [&](QuantConfig c) {
    if (c.format == Format::nvfp4) c.forced_tensor_scale = forced_tensor_scale;
    return mse(x.data(), fake_quantize(x, c, threads).data());
  };
  QuantConfig fixed6_256 = QuantConfig::fixed6();
  fixed6_256.fp8_cap = kAdaptiveFp8Cap;

  FormatComparison r;
  r.mxfp4 = run(QuantConfig::mxfp4());
  r.nvfp4_fixed6 = run(QuantConfig::fixed6());
  r.nvfp4_fixed4 = run(QuantConfig::fixed4());
  r.nvfp4_fixed6_cap256 = run(fixed6_256);
  r.nvfp4_adaptive46 = run(QuantConfig::adaptive(SelectionRule::mse));
  return r;
}

}  // namespace nvfp4emu

#endif  // NVFP4EMU_ANALYSIS_HPP
