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

// nvfp4emu command-line tool. Run `nvfp4emu --help` or `nvfp4emu <cmd> --help`.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nvfp4emu/nvfp4emu.hpp"

namespace {

using nlohmann::json;
using namespace nvfp4emu;

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kDataFormat = 3, kInvalidConfig = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(Errc e) {
  switch (e) {
    case Errc::io_error: return kIo;
    case Errc::invalid_config: return kInvalidConfig;
    default: return kDataFormat;
  }
}

// Shortest decimal that round-trips.
std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Flags shared by quantize, analyze and bench

struct QuantFlags {
  std::string format = "nvfp4";
  std::string mode = "6";
  std::string rule = "mse";
  std::string round = "rne";
  std::uint64_t seed = 0;
  std::optional<float> tensor_scale;
  unsigned threads = 1;
};

SelectionRule parse_rule(const std::string& s) {
  if (s == "l1") return SelectionRule::l1;
  if (s == "absmax") return SelectionRule::absmax;
  return SelectionRule::mse;
}

QuantConfig make_config(const QuantFlags& f) {
  QuantConfig c;
  if (f.mode == "adaptive") {
    c = QuantConfig::adaptive(parse_rule(f.rule));
  } else if (f.mode == "4") {
    c = QuantConfig::fixed4();
  }
  if (f.format == "mxfp4") {
    if (c.scale_mode != ScaleMode::fixed6) {
      throw Error(Errc::invalid_config, "MXFP4 supports only --mode 6 (power-of-two scales)");
    }
    c = QuantConfig::mxfp4();
    if (f.tensor_scale) throw Error(Errc::invalid_config, "MXFP4 has no tensor scale");
  }
  c.rule = parse_rule(f.rule);
  c.rounding = f.round == "sr" ? Rounding::stochastic(f.seed) : Rounding::nearest();
  c.rounding.seed = f.seed;
  c.forced_tensor_scale = f.tensor_scale;
  c.validate();
  return c;
}

void add_quant_flags(CLI::App* cmd, QuantFlags& f, bool with_format) {
  if (with_format) {
    cmd->add_option("--format", f.format, "Block format")
        ->check(CLI::IsMember({"nvfp4", "mxfp4"}))
        ->capture_default_str();
  }
  cmd->add_option("--mode", f.mode, "Block scale target: 6, 4 or adaptive (4/6 per block)")
      ->check(CLI::IsMember({"6", "4", "adaptive"}))
      ->capture_default_str();
  cmd->add_option("--rule", f.rule, "Adaptive selection error")
      ->check(CLI::IsMember({"mse", "l1", "absmax"}))
      ->capture_default_str();
  cmd->add_option("--round", f.round, "FP4 rounding: round-to-nearest-even or stochastic")
      ->check(CLI::IsMember({"rne", "sr"}))
      ->capture_default_str();
  cmd->add_option("--seed", f.seed, "Seed for stochastic rounding")->capture_default_str();
  cmd->add_option("--threads", f.threads, "Worker threads")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
}

void add_tensor_scale_flag(CLI::App* cmd, QuantFlags& f) {
  cmd->add_option("--tensor-scale", f.tensor_scale,
                  "Use this FP32 tensor scale instead of max|X| / (6 * cap) (NVFP4 only)")
      ->check(CLI::PositiveNumber);
}

const char* mode_name(const QuantConfig& c) {
  switch (c.scale_mode) {
    case ScaleMode::fixed6: return "6";
    case ScaleMode::fixed4: return "4";
    case ScaleMode::adaptive46: return "adaptive";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// quantize / dequantize

struct QuantizeArgs {
  std::string input, output;
  QuantFlags q;
  bool json_summary = false;
};

int run_quantize(const QuantizeArgs& a) {
  const QuantConfig cfg = make_config(a.q);
  const Tensor x = read_tensor(a.input);
  std::size_t fours = 0;
  QuantizedTensor q;
  if (cfg.scale_mode == ScaleMode::adaptive46) {
    std::vector<std::uint8_t> chose(x.rows() * ((x.last_dim() + 15) / 16), 0);
    q = quantize_tensor_adaptive(x, cfg, a.q.threads, [&](std::size_t bi, const BlockCandidates& c) {
      chose[bi] = c.prefers_four(cfg.rule);
    });
    fours = static_cast<std::size_t>(std::count(chose.begin(), chose.end(), 1));
  } else {
    q = quantize_tensor(x, cfg, a.q.threads);
    if (cfg.scale_mode == ScaleMode::fixed4) fours = q.block_scales.size();
  }
  write_quantized(a.output, q);

  const double err = mse(x.data(), dequantize_tensor(q).data());
  const double frac = static_cast<double>(fours) / static_cast<double>(q.block_scales.size());
  if (a.json_summary) {
    json j = {{"schema", 1},
              {"command", "quantize"},
              {"format", a.q.format},
              {"mode", mode_name(cfg)},
              {"rule", rule_name(cfg.rule)},
              {"shape", x.shape()},
              {"alpha", q.tensor_scale},
              {"blocks", q.block_scales.size()},
              {"fraction_4", frac},
              {"mse", err}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "format      " << a.q.format << "\n"
              << "mode        " << mode_name(cfg)
              << (cfg.scale_mode == ScaleMode::adaptive46 ? std::string(" (") + rule_name(cfg.rule) + ")" : "")
              << "\n"
              << "shape       " << shape_string(x.shape()) << "\n"
              << "alpha       " << num(q.tensor_scale) << "\n"
              << "blocks      " << q.block_scales.size() << "\n"
              << "fraction_4  " << num(frac) << "\n"
              << "mse         " << num(err) << "\n";
  }
  return kOk;
}

struct DequantizeArgs {
  std::string input, output, dtype = "f32";
};

int run_dequantize(const DequantizeArgs& a) {
  const QuantizedTensor q = read_quantized(a.input);
  write_tensor(a.output, dequantize_tensor(q), a.dtype == "bf16" ? Dtype::bf16 : Dtype::f32);
  return kOk;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string input;
  bool curve = false, ablation = false, sweep = false, compare = false, selection = false;
  std::size_t points = 601;
  std::string out_format = "table";
  std::string out;
  std::optional<float> tensor_scale;
  unsigned threads = 1;
};

struct Report {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;
};

std::string cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return num(v.get<double>());
  return v.dump();
}

void write_csv(std::ostream& os, const Report& r) {
  for (std::size_t i = 0; i < r.columns.size(); ++i) os << (i ? "," : "") << r.columns[i];
  os << "\n";
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << cell(row[i]);
    os << "\n";
  }
}

void write_table(std::ostream& os, const Report& r) {
  std::vector<std::size_t> width(r.columns.size());
  for (std::size_t i = 0; i < r.columns.size(); ++i) width[i] = r.columns[i].size();
  for (const auto& row : r.rows)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], cell(row[i]).size());
  os << "== " << r.name << "\n";
  auto line = [&](auto get) {
    for (std::size_t i = 0; i < r.columns.size(); ++i) {
      os << (i ? "  " : "") << std::left << std::setw(static_cast<int>(width[i])) << get(i);
    }
    os << "\n";
  };
  line([&](std::size_t i) { return r.columns[i]; });
  for (const auto& row : r.rows) line([&](std::size_t i) { return cell(row[i]); });
  os << "\n";
}

json to_json(const Report& r) {
  json arr = json::array();
  for (const auto& row : r.rows) {
    json o = json::object();
    for (std::size_t i = 0; i < row.size(); ++i) o[r.columns[i]] = row[i];
    arr.push_back(o);
  }
  return arr;
}

std::vector<Report> build_reports(const AnalyzeArgs& a, const std::optional<Tensor>& x) {
  std::vector<Report> out;
  if (a.curve) {
    Report r{"curve", {"m", "v", "relative_error"}, {}};
    for (double m : {6.0, 4.0})
      for (const auto& p : error_curve(m, a.points)) r.rows.push_back({m, p.v, p.relative_error});
    out.push_back(std::move(r));
  }
  if (a.ablation) {
    QuantConfig cfg = QuantConfig::fixed6();
    cfg.forced_tensor_scale = a.tensor_scale;
    const AblationReport ab = ablation_report(*x, cfg, a.threads);
    out.push_back({"ablation",
                   {"variant", "mse"},
                   {{"full", ab.mse_full},
                    {"hp_scales", ab.mse_hp_scales},
                    {"hp_values", ab.mse_hp_values},
                    {"mean_square", ab.mean_square}}});
  }
  if (a.sweep) {
    QuantConfig cfg = QuantConfig::fixed6();
    cfg.forced_tensor_scale = a.tensor_scale;
    Report r{"threshold_sweep", {"x", "mse"}, {}};
    for (const auto& p : threshold_sweep(*x, default_thresholds(), cfg, a.threads))
      r.rows.push_back({p.x, p.mse});
    out.push_back(std::move(r));
  }
  if (a.compare) {
    const FormatComparison c = compare_formats(*x, a.tensor_scale, a.threads);
    out.push_back({"compare",
                   {"format", "mse"},
                   {{"mxfp4", c.mxfp4},
                    {"nvfp4_fixed6", c.nvfp4_fixed6},
                    {"nvfp4_fixed4", c.nvfp4_fixed4},
                    {"nvfp4_fixed6_cap256", c.nvfp4_fixed6_cap256},
                    {"nvfp4_adaptive46", c.nvfp4_adaptive46}}});
  }
  if (a.selection) {
    QuantConfig cfg = QuantConfig::adaptive();
    cfg.forced_tensor_scale = a.tensor_scale;
    const SelectionStats s = selection_stats(*x, cfg, a.threads);
    Report r{"selection", {"rule", "fraction_4", "mse"}, {}};
    for (std::size_t k = 0; k < kAllRules.size(); ++k) {
      r.rows.push_back({rule_name(kAllRules[k]),
                        static_cast<double>(s.chose_four[k]) / static_cast<double>(s.blocks),
                        s.mse_by_rule[k]});
    }
    r.rows.push_back({"fixed6", 0.0, s.mse_fixed6});
    r.rows.push_back({"fixed4", 1.0, s.mse_fixed4});
    out.push_back(std::move(r));
  }
  return out;
}

int run_analyze(const AnalyzeArgs& a) {
  const int n_reports = a.curve + a.ablation + a.sweep + a.compare + a.selection;
  if (n_reports == 0) throw UsageError("choose at least one report flag");
  if (a.out_format == "csv" && n_reports != 1) throw UsageError("CSV output holds exactly one report");
  const bool needs_input = a.ablation || a.sweep || a.compare || a.selection;
  if (needs_input && a.input.empty()) throw UsageError("this report needs an input tensor");

  std::optional<Tensor> x;
  if (!a.input.empty()) x = read_tensor(a.input);
  const std::vector<Report> reports = build_reports(a, x);

  std::ostringstream os;
  if (a.out_format == "csv") {
    write_csv(os, reports.front());
  } else if (a.out_format == "json") {
    json j = {{"schema", 1}, {"command", "analyze"}};
    if (x) j["shape"] = x->shape();
    for (const auto& r : reports) j[r.name] = to_json(r);
    os << j.dump(2) << "\n";
  } else {
    for (const auto& r : reports) write_table(os, r);
  }

  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(a.out, std::ios::binary | std::ios::trunc);
    f << os.str();
    if (!f) throw Error(Errc::io_error, "cannot write " + a.out);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string size = "64x64x64";
  QuantFlags q;
  std::string out_format = "table";
};

std::array<std::size_t, 3> parse_size(const std::string& s) {
  std::array<std::size_t, 3> d{};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t end = i < 2 ? s.find('x', pos) : s.size();
    if (end == std::string::npos) throw UsageError("--size must look like MxNxK");
    const char* b = s.data() + pos;
    const char* e = s.data() + end;
    const auto res = std::from_chars(b, e, d[i]);
    if (res.ec != std::errc() || res.ptr != e || d[i] == 0) {
      throw UsageError("--size must look like MxNxK with positive integers");
    }
    pos = end + 1;
  }
  return d;
}

Tensor random_tensor(Shape shape, std::mt19937_64& gen) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(nd(gen));
  return Tensor(std::move(shape), std::move(v));
}

// FNV-1a over the float bit patterns.
std::string checksum(const Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float v : t.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

template <typename Fn>
double seconds_per_call(Fn&& fn) {
  using clock = std::chrono::steady_clock;
  int calls = 0;
  const auto t0 = clock::now();
  double elapsed = 0.0;
  do {
    fn();
    ++calls;
    elapsed = std::chrono::duration<double>(clock::now() - t0).count();
  } while (elapsed < 0.05);
  return elapsed / calls;
}

int run_bench(const BenchArgs& a) {
  const auto [m, n, k] = parse_size(a.size);
  QuantFlags qf = a.q;
  qf.format = "nvfp4";
  const QuantConfig cfg = make_config(qf);
  const MatmulOptions opt{a.q.threads, false};

  std::mt19937_64 gen(a.q.seed);
  const Tensor x = random_tensor({m, k}, gen);   // activations / left operand
  const Tensor w = random_tensor({n, k}, gen);   // weights, B^T of the matmul
  const Tensor dy = random_tensor({m, n}, gen);  // output gradient

  const QuantizedTensor qa = quantize_tensor(x, cfg, a.q.threads);
  const QuantizedTensor qb = quantize_tensor(w, cfg, a.q.threads);
  const Tensor c = emulated_fp4_matmul_nt(qa, qb, opt);
  const Tensor da = dequantize_tensor(qa), db = dequantize_tensor(qb);
  double num2 = 0.0, den2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double ref = 0.0;
      for (std::size_t p = 0; p < k; ++p) ref += static_cast<double>(da.at(i, p)) * db.at(j, p);
      const double d = ref - c.at(i, j);
      num2 += d * d;
      den2 += ref * ref;
    }
  }
  const double oracle_err = den2 == 0.0 ? std::sqrt(num2) : std::sqrt(num2 / den2);
  const double quant_mse = mse(x.data(), da.data());

  const Tensor y = linear_forward(x, w, cfg, opt);
  const Tensor dx = linear_dgrad(dy, w, cfg, opt);
  const bool wgrad_ok = m % kNvfp4BlockSize == 0;
  std::optional<Tensor> dw;
  if (wgrad_ok) dw = linear_wgrad(dy, x, cfg, opt);

  const double t6 = seconds_per_call([&] { (void)quantize_tensor(x, QuantConfig::fixed6(), a.q.threads); });
  const double t46 = seconds_per_call([&] { (void)quantize_tensor(x, QuantConfig::adaptive(cfg.rule), a.q.threads); });
  const double tmm = seconds_per_call([&] { (void)emulated_fp4_matmul_nt(qa, qb, opt); });

  json results = {{"matmul_oracle_rel_error", oracle_err},
                  {"matmul_checksum", checksum(c)},
                  {"quantize_mse", quant_mse},
                  {"forward_checksum", checksum(y)},
                  {"dgrad_checksum", checksum(dx)},
                  {"wgrad_checksum", dw ? json(checksum(*dw)) : json(nullptr)}};
  json timing = {{"fixed6_quantize_s", t6},
                 {"adaptive46_quantize_s", t46},
                 {"adaptive_over_fixed6", t46 / t6},
                 {"matmul_s", tmm}};

  if (a.out_format == "json") {
    json j = {{"schema", 1},
              {"command", "bench"},
              {"size", {{"m", m}, {"n", n}, {"k", k}}},
              {"seed", a.q.seed},
              {"mode", mode_name(cfg)},
              {"threads", a.q.threads},
              {"results", results},
              {"timing", timing}};
    std::cout << j.dump(2) << "\n";
    return kOk;
  }
  std::cout << "size                    " << m << "x" << n << "x" << k << "\n"
            << "seed                    " << a.q.seed << "\n"
            << "mode                    " << mode_name(cfg) << "\n"
            << "matmul_oracle_rel_error " << num(oracle_err) << "\n"
            << "matmul_checksum         " << checksum(c) << "\n"
            << "quantize_mse            " << num(quant_mse) << "\n"
            << "forward_checksum        " << checksum(y) << "\n"
            << "dgrad_checksum          " << checksum(dx) << "\n"
            << "wgrad_checksum          " << (dw ? checksum(*dw) : std::string("skipped (M % 16 != 0)")) << "\n"
            << "fixed6_quantize_s       " << num(t6) << "\n"
            << "adaptive46_quantize_s   " << num(t46) << "\n"
            << "adaptive_over_fixed6    " << num(t46 / t6) << "\n"
            << "matmul_s                " << num(tmm) << "\n";
  return kOk;
}

constexpr const char* kAnalyzeFooter = R"(CSV columns (--out-format csv, exactly one report flag):
  --curve            m,v,relative_error      (M = 6 rows, then M = 4 rows)
  --ablation         variant,mse             variants: full, hp_scales, hp_values, mean_square
  --threshold-sweep  x,mse                   x = 0, 0.5, ..., 6; first data row is 0,0
  --compare          format,mse              mxfp4, nvfp4_fixed6, nvfp4_fixed4,
                                             nvfp4_fixed6_cap256, nvfp4_adaptive46
  --selection        rule,fraction_4,mse     mse, l1, absmax, fixed6, fixed4
JSON output is one object {"schema": 1, "command": "analyze", "shape": [...],
<report>: [{column: value, ...}, ...]} with the same column names.)";

constexpr const char* kMainFooter = R"(Exit status: 0 ok, 1 usage, 2 I/O, 3 data format, 4 invalid configuration.)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bit-exact NVFP4 / MXFP4 quantization emulator", "nvfp4emu"};
  app.require_subcommand(1);
  app.footer(kMainFooter);

  QuantizeArgs qa;
  auto* quant = app.add_subcommand("quantize", "Quantize an FQT1 tensor into an NVF4 container");
  quant->add_option("input", qa.input, "Input tensor (FQT1)")->required();
  quant->add_option("output", qa.output, "Output container (NVF4)")->required();
  add_quant_flags(quant, qa.q, true);
  add_tensor_scale_flag(quant, qa.q);
  quant->add_flag("--json", qa.json_summary, "Print the summary as JSON");

  DequantizeArgs da;
  auto* deq = app.add_subcommand("dequantize", "Expand an NVF4 container into an FQT1 tensor");
  deq->add_option("input", da.input, "Input container (NVF4)")->required();
  deq->add_option("output", da.output, "Output tensor (FQT1)")->required();
  deq->add_option("--dtype", da.dtype, "Output element type")
      ->check(CLI::IsMember({"f32", "bf16"}))
      ->capture_default_str();

  AnalyzeArgs aa;
  auto* ana = app.add_subcommand("analyze", "Error diagnostics on a tensor");
  ana->add_option("input", aa.input, "Input tensor (FQT1); optional for --curve alone");
  ana->add_flag("--curve", aa.curve, "FP4 relative error over [0, M] for M = 6 and M = 4");
  ana->add_option("--points", aa.points, "Points per curve")->check(CLI::Range(2, 1000000))->capture_default_str();
  ana->add_flag("--ablation", aa.ablation, "Full NVFP4 vs unrounded scales vs unrounded values");
  ana->add_flag("--threshold-sweep", aa.sweep, "MSE when only scaled values <= x are quantized");
  ana->add_flag("--compare", aa.compare, "MSE of MXFP4 and the NVFP4 variants");
  ana->add_flag("--selection", aa.selection, "Adaptive 4/6 choices under each rule");
  ana->add_option("--out-format", aa.out_format, "Report format")
      ->check(CLI::IsMember({"table", "csv", "json"}))
      ->capture_default_str();
  ana->add_option("--out", aa.out, "Write the report here instead of stdout");
  ana->add_option("--tensor-scale", aa.tensor_scale, "Force the NVFP4 tensor scale")
      ->check(CLI::PositiveNumber);
  ana->add_option("--threads", aa.threads, "Worker threads")->check(CLI::Range(1u, 1024u))->capture_default_str();
  ana->footer(kAnalyzeFooter);

  BenchArgs ba;
  ba.q.mode = "adaptive";
  auto* bench = app.add_subcommand("bench", "Emulated FP4 linear layer on random data");
  bench->add_option("--size", ba.size, "Problem size MxNxK: x [M,K], W [N,K]")->capture_default_str();
  add_quant_flags(bench, ba.q, false);
  bench->add_option("--out-format", ba.out_format, "Report format")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();
  bench->footer("JSON keeps wall-clock figures under \"timing\"; everything under \"results\" is\n"
                "deterministic for a given size, seed and mode.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*quant) return run_quantize(qa);
    if (*deq) return run_dequantize(da);
    if (*ana) return run_analyze(aa);
    if (*bench) return run_bench(ba);
  } catch (const UsageError& e) {
    std::cerr << "nvfp4emu: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "nvfp4emu: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "nvfp4emu: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
