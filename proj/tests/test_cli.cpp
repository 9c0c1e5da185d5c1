#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("sidewalk_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
  }
  static void TearDownTestSuite() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  static Result run(const std::string& args) {
    const auto out = dir_ / "stdout.txt";
    const std::string cmd = std::string(SIDEWALK_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
  }

  static std::string p(const std::string& name) { return (dir_ / name).string(); }

  static inline fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("train-vae --data x").code, 1);
  EXPECT_EQ(run("arch --preset tiny").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, DataErrorsExitWithTwo) {
  EXPECT_EQ(run("train-vae --data " + p("missing") + " --out " + p("m.bin")).code, 2);
  std::ofstream(p("junk.bin")) << "not a bundle";
  EXPECT_EQ(run("infer --bundle " + p("junk.bin") + " --frames " + p("missing")).code, 2);
}

TEST_F(Cli, ArchPrintsCanonicalTotal) {
  const auto r = run("arch --preset canonical");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Total params:\t237,776,419"), std::string::npos);
}

TEST_F(Cli, EndToEndOnTinyCorpus) {
  const std::string corpus = p("corpus"), bundle = p("model.bin");
  ASSERT_EQ(run("synth --out " + corpus +
                " --train 12 --test-normal 3 --test-nonhazard 3 --test-hazard 3 --ocsvm-nonhazard 6 --seed 3")
                .code,
            0);
  const auto train = run("train-vae --data " + corpus + "/train --epochs 2 --batch 4 --seed 1 --out " + bundle);
  ASSERT_EQ(train.code, 0);
  EXPECT_EQ(train.out.rfind("# epoch\ttotal\trecon\tkl", 0), 0u);

  const auto cal = run("calibrate --bundle " + bundle + " --data " + corpus + "/train --samples 2");
  ASSERT_EQ(cal.code, 0);
  EXPECT_GT(std::stod(cal.out), 0.0);

  ASSERT_EQ(run("train-ocsvm --bundle " + bundle + " --data " + corpus + "/ocsvm").code, 0);

  const auto infer = run("infer --bundle " + bundle + " --frames " + corpus + "/test --samples-unknown");
  EXPECT_EQ(infer.code, 1);
  const auto alerts = run("infer --bundle " + bundle + " --frames " + corpus + "/test --seed 4");
  ASSERT_EQ(alerts.code, 0);
  std::size_t lines = 0;
  for (char ch : alerts.out) lines += ch == '\n';
  EXPECT_EQ(lines, 9u);
  EXPECT_EQ(run("infer --bundle " + bundle + " --frames " + corpus + "/test --seed 4").out, alerts.out);

  const auto eval = run("eval --bundle " + bundle + " --data " + corpus + "/test --mode hybrid --roc " + p("roc.csv"));
  ASSERT_EQ(eval.code, 0);
  EXPECT_NE(eval.out.find("auc "), std::string::npos);
  EXPECT_NE(eval.out.find("cm,"), std::string::npos);
  std::ifstream roc(p("roc.csv"));
  std::string header;
  std::getline(roc, header);
  EXPECT_EQ(header, "threshold,fpr,tpr");

  EXPECT_EQ(run("eval --bundle " + bundle + " --data " + corpus + "/test --mode both").code, 1);
  EXPECT_EQ(run("eval --bundle " + bundle + " --data " + corpus + "/test --threshold -5").code, 1);
}
