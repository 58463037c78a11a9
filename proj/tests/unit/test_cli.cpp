#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const fs::path& work() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "afa_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args, const std::string& stdin_text = "") {
  std::string cmd = std::string(AFA_CLI_PATH) + " " + args + " > " + (work() / "out.txt").string() + " 2> " +
                    (work() / "err.txt").string();
  if (!stdin_text.empty()) {
    std::ofstream(work() / "in.txt") << stdin_text;
    cmd += " < " + (work() / "in.txt").string();
  } else {
    cmd += " < /dev/null";
  }
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read(const std::string& name) {
  std::ifstream in(work() / name);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string p(const std::string& name) { return (work() / name).string(); }

}  // namespace

TEST(Cli, ParseErrorsExitTwo) {
  EXPECT_EQ(run("--no-such-flag"), 2);
  EXPECT_EQ(run("gen-data --dataset cube"), 2);  // --out missing
  EXPECT_EQ(run("gen-data --dataset mnist --out " + p("x.csv")), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, EndToEndSweep) {
  ASSERT_EQ(run("gen-data --dataset cube --n 800 --seed 3 --out " + p("cube.csv")), 0) << read("err.txt");
  ASSERT_EQ(run("train-predictor --data " + p("cube.csv") + " --epochs 3 --out " + p("model.json")), 0)
      << read("err.txt");
  std::ofstream(p("cfg.json")) << R"({"dataset": {"kind": "cube", "n": 800, "max_test": 20},
    "predictor": {"kind": "masked_linear", "linear": {"epochs": 3}},
    "policies": [{"kind": "aaco", "aaco": {"candidate_budget": 50, "initial_feature": 6}}],
    "alphas": [0.05]})";
  ASSERT_EQ(run("run-afa --config " + p("cfg.json") + " --out " + p("rep")), 0) << read("err.txt");
  EXPECT_TRUE(fs::exists(work() / "rep" / "report.csv"));
  EXPECT_TRUE(fs::exists(work() / "rep" / "plot_aaco.dat"));
  ASSERT_EQ(run("report --dir " + p("rep")), 0) << read("err.txt");
  EXPECT_NE(read("out.txt").find("aaco"), std::string::npos);
  ASSERT_EQ(run("interactive --model " + p("model.json") + " --train " + p("cube.csv") + " --initial 6", "predict\n"),
            0)
      << read("err.txt");
  EXPECT_NE(read("out.txt").find("next feature: x6"), std::string::npos) << read("out.txt");
}

TEST(Cli, ConfigErrorsExitTwo) {
  std::ofstream(p("bad.json")) << R"({"policies": [{"kind": "aaco"}], "alphas": []})";
  EXPECT_EQ(run("run-afa --config " + p("bad.json")), 2);
  EXPECT_NE(read("err.txt").find("config error"), std::string::npos);
  std::ofstream(p("broken.json")) << "{";
  EXPECT_EQ(run("run-afa --config " + p("broken.json")), 2);
}

TEST(Cli, RuntimeErrorsExitThree) {
  EXPECT_EQ(run("train-predictor --data " + p("does_not_exist.csv") + " --out " + p("m.json")), 3)
      << read("err.txt");
  EXPECT_EQ(run("report --dir " + p("no_report_here")), 3);
}
