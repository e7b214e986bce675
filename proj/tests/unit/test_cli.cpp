// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, std::string* out = nullptr) {
  const fs::path capture = fs::temp_directory_path() / "hfsim_cli_test_out.txt";
  const std::string cmd = std::string(HFSIM_CLI) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(capture);
    std::stringstream ss;
    ss << in.rdbuf();
    *out = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hfsim_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Cli, PerfValues) {
  std::string out;
  EXPECT_EQ(run("perf --ring -n 8", &out), 0);
  EXPECT_EQ(out, "1.875 (15/8)\n");
  EXPECT_EQ(run("perf --multiplier --h2d memcpy", &out), 0);
  EXPECT_EQ(out, "30\n");
  EXPECT_EQ(run("perf --peak --mem-bw 320e9", &out), 0);
  EXPECT_EQ(out, "1.33333e+10\n");
}

TEST(Cli, PlanPrintsSwitchCount) {
  std::string out;
  EXPECT_EQ(run("plan --endpoints 800 --radix 40", &out), 0);
  EXPECT_EQ(out.rfind("60 switches", 0), 0u);
  EXPECT_EQ(run("plan --endpoints 1600 --radix 40 --layers 3", &out), 0);
  EXPECT_EQ(out.rfind("200 switches", 0), 0u);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("plan --radix 0"), 2);
  EXPECT_EQ(run("plan --endpoints 900 --radix 40"), 3);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("allreduce"), 2);
  EXPECT_EQ(run("allreduce --config /no/such/file.json"), 2);
  EXPECT_EQ(run("perf --ring --peak"), 2);
  const fs::path dir = scratch("exit");
  fs::create_directories(dir);
  const std::string blob = (dir / "c.bin").string();
  EXPECT_EQ(run("checkpoint save --out " + blob + " --count 3"), 0);
  EXPECT_EQ(run("checkpoint load --in " + blob + " --id missing"), 3);
  std::ofstream(dir / "bad.bin") << "HFCK";
  EXPECT_EQ(run("checkpoint inspect --in " + (dir / "bad.bin").string()), 3);
}

TEST(Cli, AllreduceWritesOutputs) {
  const fs::path dir = scratch("allreduce");
  EXPECT_EQ(run("allreduce --config " + std::string(HFSIM_CONFIGS) + "/demo_2node.json --out " + dir.string()), 0);
  for (const char* f : {"summary.json", "timeline.csv", "ledger.csv", "trace.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
}

TEST(Cli, CheckpointLoadExtractsRawBytes) {
  const fs::path dir = scratch("ckpt");
  fs::create_directories(dir);
  const std::string blob = (dir / "c.bin").string();
  ASSERT_EQ(run("checkpoint save --out " + blob + " --count 4 --seed 2"), 0);
  std::string listing;
  ASSERT_EQ(run("checkpoint inspect --in " + blob, &listing), 0);
  EXPECT_NE(listing.find("tensor003"), std::string::npos);
  ASSERT_EQ(run("checkpoint load --in " + blob + " --id tensor001 --out " + (dir / "t1.raw").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "t1.raw"));
}
