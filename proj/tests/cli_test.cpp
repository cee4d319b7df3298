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

// Runs the built nvfp4emu binary end to end.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nvfp4emu/nvfp4emu.hpp"

namespace nvfp4emu {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int status = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(NVFP4EMU_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  CliRun r;
  if (p == nullptr) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

// Value printed after `key` on a "key   value" summary line.
std::string field(const std::string& out, const std::string& key) {
  const auto pos = out.find(key + " ");
  if (pos == std::string::npos) return "";
  const auto start = out.find_first_not_of(' ', pos + key.size());
  return out.substr(start, out.find('\n', start) - start);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nvfp4emu_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const char* name) const { return (dir_ / name).string(); }

  std::string write_block1() const {
    const std::string p = path("block1.fqt");
    write_tensor(p, Tensor({1, 4}, {10, 20, 30, 40}));
    return p;
  }

  fs::path dir_;
};

TEST_F(CliTest, AdaptiveWorkedBlockSummary) {
  const std::string in = write_block1();
  const CliRun r = run("quantize " + in + " " + path("q.nvf4") + " --mode adaptive --rule mse --tensor-scale 1");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(field(r.out, "mse"), "0");
  EXPECT_EQ(field(r.out, "fraction_4"), "1");
  EXPECT_EQ(field(r.out, "blocks"), "1");
  EXPECT_EQ(field(r.out, "alpha"), "1");
}

TEST_F(CliTest, FixedSixWorkedBlockSummary) {
  const std::string in = write_block1();
  const CliRun r = run("quantize " + in + " " + path("q.nvf4") + " --mode 6 --tensor-scale 1");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NEAR(std::stod(field(r.out, "mse")), 4.33, 0.005);
  EXPECT_EQ(field(r.out, "fraction_4"), "0");
}

TEST_F(CliTest, JsonSummary) {
  const std::string in = write_block1();
  const CliRun r = run("quantize " + in + " " + path("q.nvf4") + " --mode 4 --json");
  ASSERT_EQ(r.status, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["schema"], 1);
  EXPECT_EQ(j["fraction_4"], 1.0);
}

TEST_F(CliTest, ExitCodes) {
  const std::string in = write_block1();
  EXPECT_EQ(run("quantize " + in + " " + path("q") + " --format mxfp4 --mode adaptive").status, 4);
  EXPECT_EQ(run("quantize " + in + " " + path("q") + " --format mxfp4 --tensor-scale 2").status, 4);
  EXPECT_EQ(run("quantize " + path("missing.fqt") + " " + path("q")).status, 2);
  EXPECT_EQ(run("quantize " + in + " " + path("no/such/dir/q")).status, 2);
  EXPECT_EQ(run("quantize " + in).status, 1);
  EXPECT_EQ(run("quantize " + in + " " + path("q") + " --mode 5").status, 1);
  EXPECT_EQ(run("frobnicate").status, 1);
  EXPECT_EQ(run("bench --size 4x4").status, 1);
  EXPECT_EQ(run("analyze " + in).status, 1);
  EXPECT_EQ(run("analyze " + in + " --curve --compare --out-format csv").status, 1);
  EXPECT_EQ(run("--help").status, 0);

  {
    std::ofstream f(path("bad.fqt"), std::ios::binary);
    f << "XXXXjunk";
  }
  EXPECT_EQ(run("quantize " + path("bad.fqt") + " " + path("q")).status, 3);
  EXPECT_EQ(run("dequantize " + in + " " + path("d")).status, 3);  // FQT1 where NVF4 is expected
}

TEST_F(CliTest, FilePipelineMatchesLibrary) {
  const std::vector<float> v = [] {
    std::vector<float> out(8 * 40);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(std::sin(0.37 * i) * (1 + i % 7));
    return out;
  }();
  const Tensor x({8, 40}, v);
  write_tensor(path("x.fqt"), x);
  for (const char* flags : {"--mode 6", "--mode 4", "--mode adaptive --rule l1", "--format mxfp4",
                            "--mode adaptive --round sr --seed 5"}) {
    ASSERT_EQ(run("quantize " + path("x.fqt") + " " + path("q.nvf4") + " " + flags).status, 0) << flags;
    ASSERT_EQ(run("dequantize " + path("q.nvf4") + " " + path("d.fqt")).status, 0);
    const std::string f = flags;
    QuantConfig cfg = f.find("mxfp4") != std::string::npos ? QuantConfig::mxfp4()
                      : f.find("adaptive") != std::string::npos
                          ? QuantConfig::adaptive(f.find("l1") != std::string::npos ? SelectionRule::l1 : SelectionRule::mse)
                          : f.find("--mode 4") != std::string::npos ? QuantConfig::fixed4()
                                                                     : QuantConfig::fixed6();
    if (f.find("sr") != std::string::npos) cfg.rounding = Rounding::stochastic(5);
    EXPECT_EQ(read_quantized(path("q.nvf4")), quantize_tensor(x, cfg)) << flags;
    EXPECT_EQ(read_tensor(path("d.fqt")), fake_quantize(x, cfg)) << flags;
  }
}

TEST_F(CliTest, ThresholdSweepCsv) {
  write_tensor(path("x.fqt"), Tensor({4, 32}, std::vector<float>(128, 1.25f)));
  const CliRun r = run("analyze " + path("x.fqt") + " --threshold-sweep --out-format csv");
  ASSERT_EQ(r.status, 0);
  std::istringstream is(r.out);
  std::string header, first;
  std::getline(is, header);
  std::getline(is, first);
  EXPECT_EQ(header, "x,mse");
  EXPECT_EQ(first, "0,0");
  int rows = 1;
  for (std::string line; std::getline(is, line);) ++rows;
  EXPECT_EQ(rows, 13);
}

TEST_F(CliTest, AnalyzeJsonAndOutFile) {
  write_tensor(path("x.fqt"), Tensor({2, 16}, std::vector<float>(32, 3.0f)));
  ASSERT_EQ(run("analyze " + path("x.fqt") + " --ablation --compare --curve --points 5 --out-format json --out " +
                path("r.json"))
                .status,
            0);
  std::ifstream f(path("r.json"));
  const auto j = nlohmann::json::parse(f);
  EXPECT_EQ(j["schema"], 1);
  EXPECT_EQ(j["curve"].size(), 10u);
  EXPECT_EQ(j["ablation"][0]["variant"], "full");
  EXPECT_EQ(j["compare"].size(), 5u);
  EXPECT_EQ(run("analyze --curve --out-format csv").status, 0);
}

TEST_F(CliTest, BenchIsDeterministic) {
  const CliRun a = run("bench --size 64x64x64 --seed 7 --out-format json");
  const CliRun b = run("bench --size 64x64x64 --seed 7 --out-format json");
  ASSERT_EQ(a.status, 0);
  ASSERT_EQ(b.status, 0);
  auto ja = nlohmann::json::parse(a.out), jb = nlohmann::json::parse(b.out);
  EXPECT_LE(ja["results"]["matmul_oracle_rel_error"].get<double>(), 1e-5);
  EXPECT_FALSE(ja["results"]["wgrad_checksum"].is_null());
  EXPECT_GT(ja["timing"]["adaptive_over_fixed6"].get<double>(), 0.0);
  ja.erase("timing");
  jb.erase("timing");
  EXPECT_EQ(ja, jb);
  const CliRun c = run("bench --size 64x64x64 --seed 8 --out-format json");
  auto jc = nlohmann::json::parse(c.out);
  EXPECT_NE(jc["results"]["matmul_checksum"], ja["results"]["matmul_checksum"]);
}

}  // namespace
}  // namespace nvfp4emu
