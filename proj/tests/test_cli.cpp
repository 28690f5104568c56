#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(ALGNET_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("algnet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(Cli, UnknownFlagFails) {
  EXPECT_NE(run("train --data x --bogus 1"), 0);
  EXPECT_NE(run("frobnicate"), 0);
  EXPECT_NE(run(""), 0);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, SynthDataIsDeterministic) {
  const auto a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("synth-data --patients 50 --seed 1 --out " + a.string()), 0);
  ASSERT_EQ(run("synth-data --patients 50 --seed 1 --out " + b.string()), 0);
  for (const char* f : {"records.jsonl", "ddi.txt", "vocab.json"}) {
    EXPECT_FALSE(slurp(a / f).empty()) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  ASSERT_EQ(run("synth-data --patients 50 --seed 2 --out " + b.string()), 0);
  EXPECT_NE(slurp(a / "records.jsonl"), slurp(b / "records.jsonl"));
}

TEST_F(Cli, ZeroEpochsIsAConfigError) {
  ASSERT_EQ(run("synth-data --patients 20 --out " + dir_.string()), 0);
  EXPECT_NE(run("train --data " + dir_.string() + " --epochs 0 --out " + (dir_ / "run").string()), 0);
  EXPECT_FALSE(fs::exists(dir_ / "run" / "checkpoint.bin"));
  EXPECT_NE(run("train --data " + dir_.string() + " --variant NOPE --out " + (dir_ / "run").string()), 0);
}

TEST_F(Cli, ConfigFileThenFlags) {
  ASSERT_EQ(run("synth-data --patients 24 --n-med 8 --out " + dir_.string()), 0);
  std::ofstream(dir_ / "cfg.json") << R"({"epochs": 2, "dim": 4, "heads": 2, "lr": 0.01, "seed": 5})";
  const auto out = dir_ / "run";
  ASSERT_EQ(run("train --quiet --data " + dir_.string() + " --config " + (dir_ / "cfg.json").string() +
                " --epochs 1 --out " + out.string()),
            0);
  for (const char* f : {"checkpoint.bin", "log.csv", "metrics.json", "runlog.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  const std::string runlog = slurp(out / "runlog.json");
  EXPECT_NE(runlog.find("\"epochs\": 1,"), std::string::npos);
  EXPECT_NE(runlog.find("\"dim\": 4"), std::string::npos);
  EXPECT_NE(runlog.find("\"seed\": 5"), std::string::npos);

  const auto report = dir_ / "eval.json";
  ASSERT_EQ(run("evaluate --checkpoint " + (out / "checkpoint.bin").string() + " --data " + dir_.string() +
                " --out " + report.string()),
            0);
  EXPECT_EQ(slurp(report), slurp(out / "metrics.json"));
}

TEST_F(Cli, GradcheckPasses) { EXPECT_EQ(run("gradcheck --seed 7"), 0); }

}  // namespace
