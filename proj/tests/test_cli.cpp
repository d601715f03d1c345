#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fsr/cli.hpp"
#include "fsr/io.hpp"
#include "fsr/trainer.hpp"
#include "test_util.hpp"

using namespace fsr;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kTinyConfig = R"(
[data]
source = "grf"
seed = 3

[grf]
n = 32
k_max = 8

[splits]
train = 4
valid = 2
test = 2

[encoder]
channels = 4
blocks = 1
ratio = 2

[hierarchy]
levels = 2
width = 8
blocks = 1
heads = 2

[train]
steps = 3
batch = 2
crop = 8
queries = 16
scales = [1, 2]
seed = 11
)";

class Workspace : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fsr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.toml") << kTinyConfig;
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // gen-data then train into <tag>/
  void pipeline(const std::string& tag) {
    ASSERT_EQ(run({"gen-data", "--config", path("tiny.toml"), "--out", path(tag + "/data")}).code, 0);
    const Result t = run({"train", "--config", path("tiny.toml"), "--data", path(tag + "/data"), "--out", path(tag + "/run")});
    ASSERT_EQ(t.code, 0) << t.err;
  }

  fs::path dir_;
};

}  // namespace

class HelpGolden : public ::testing::TestWithParam<std::string> {};

TEST_P(HelpGolden, MatchesFile) {
  const std::string cmd = GetParam();
  const Result r = cmd == "fsr" ? run({"--help"}) : run({cmd, "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, read_file(fs::path(FSR_GOLDEN_DIR) / (cmd + ".txt")));
}

INSTANTIATE_TEST_SUITE_P(Commands, HelpGolden,
                         ::testing::Values("fsr", "gen-data", "train", "eval", "infer", "bench-attn", "spectra",
                                           "grad-check", "prior-corr"),
                         [](const auto& info) {
                           std::string n = info.param;
                           for (char& c : n)
                             if (c == '-') c = '_';
                           return n;
                         });

TEST(Cli, EvalWithoutCheckpointIsUsageError) {
  const Result r = run({"eval", "--data", "somewhere"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("--ckpt"), std::string::npos);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, UnknownFlagAndCommandAreUsageErrors) {
  EXPECT_EQ(run({"bench-attn", "--bogus", "1"}).code, cli::kUsage);
  EXPECT_EQ(run({"no-such-command"}).code, cli::kUsage);
  EXPECT_EQ(run({}).code, cli::kUsage);
  EXPECT_EQ(run({"grad-check", "--op", "no_such_op"}).code, cli::kUsage);
  EXPECT_EQ(run({"grad-check", "--all", "--op", "add"}).code, cli::kUsage);
}

TEST(Cli, MissingFileIsRuntimeFailure) {
  const Result r = run({"eval", "--ckpt", "/nonexistent/model.ckpt", "--data", "/nonexistent"});
  EXPECT_EQ(r.code, cli::kFailure);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
}

TEST(Cli, ScaledExtentRoundsHalfUp) {
  EXPECT_EQ(cli::scaled_extent(10, 1.25), 13u);  // 12.5
  EXPECT_EQ(cli::scaled_extent(10, 1.0), 10u);
  EXPECT_EQ(cli::scaled_extent(16, 6.3), 101u);  // 100.8
  EXPECT_EQ(cli::scaled_extent(2, 0.25), 1u);    // 0.5
}

TEST(Cli, ParsesExtents) {
  EXPECT_EQ(cli::parse_extents("101x101"), (std::pair<std::size_t, std::size_t>{101, 101}));
  EXPECT_EQ(cli::parse_extents("3x17"), (std::pair<std::size_t, std::size_t>{3, 17}));
  for (const char* bad : {"", "101", "x5", "5x", "0x4", "4x4x4", "4 x4", "ax3"}) EXPECT_THROW(cli::parse_extents(bad), Error) << bad;
}

TEST(Cli, GradCheckTable) {
  const Result r = run({"grad-check", "--op", "add", "--op", "conv2d", "--seeds", "2"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.rfind("case,seeds,max_rel_error,tolerance,status\nadd,2,", 0), 0u);
  EXPECT_NE(r.out.find("conv2d,2,"), std::string::npos);
  const Result list = run({"grad-check", "--list"});
  EXPECT_NE(list.out.find("pipeline\n"), std::string::npos);
}

TEST(Cli, BenchWithoutTimingIsReproducible) {
  const std::vector<std::string> args{"bench-attn", "--sizes", "16,32", "--d", "8", "--heads", "2", "--reps", "1", "--no-timing"};
  const Result a = run(args), b = run(args);
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.rfind("variant,m,d,heads,params,flops,median_seconds\ngalerkin,16,", 0), 0u);
}

TEST_F(Workspace, GenDataHonorsSeed) {
  ASSERT_EQ(run({"gen-data", "--config", path("tiny.toml"), "--out", path("a")}).code, 0);
  ASSERT_EQ(run({"gen-data", "--config", path("tiny.toml"), "--out", path("b")}).code, 0);
  ASSERT_EQ(run({"gen-data", "--config", path("tiny.toml"), "--out", path("c"), "--seed", "4"}).code, 0);
  for (const char* split : {"train.sfb", "valid.sfb", "test.sfb"}) {
    EXPECT_EQ(read_file(path("a/") + split), read_file(path("b/") + split));
    EXPECT_NE(read_file(path("a/") + split), read_file(path("c/") + split));
  }
  EXPECT_EQ(read_sfb(path("a/train.sfb")).size(), 4u);
}

TEST_F(Workspace, PipelineIsByteReproducible) {
  pipeline("one");
  pipeline("two");
  for (const char* f : {"run/model.ckpt", "run/best.ckpt", "run/train_log.csv"})
    EXPECT_EQ(read_file(path(std::string("one/") + f)), read_file(path(std::string("two/") + f))) << f;
  for (const char* tag : {"one", "two"}) {
    const std::string t(tag);
    const Result e = run({"eval", "--ckpt", path(t + "/run/model.ckpt"), "--data", path(t + "/data"), "--scales", "2,3.5",
                          "--out", path(t + "/eval.csv")});
    ASSERT_EQ(e.code, 0) << e.err;
  }
  const std::string csv = read_file(path("one/eval.csv"));
  EXPECT_EQ(csv, read_file(path("two/eval.csv")));
  EXPECT_EQ(csv.rfind("record,scale,mse,psnr,ssim,bicubic_mse", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * (2 + 1));
  EXPECT_EQ(read_file(path("one/run/train_log.csv")).rfind("step,loss,lr\n1,", 0), 0u);
}

TEST_F(Workspace, EvalSkipsScalesBelowMinimumExtent) {
  pipeline("p");
  const Result e = run({"eval", "--ckpt", path("p/run/model.ckpt"), "--data", path("p/data/test.sfb"), "--scales", "2,32"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.err.find("skipping scale 32"), std::string::npos);
  EXPECT_EQ(e.out.find(",32,"), std::string::npos);
}

TEST_F(Workspace, ResumeMatchesUninterruptedRun) {
  ASSERT_EQ(run({"gen-data", "--config", path("tiny.toml"), "--out", path("data")}).code, 0);
  ASSERT_EQ(run({"train", "--config", path("tiny.toml"), "--data", path("data"), "--out", path("full"), "--steps", "4"}).code, 0);
  ASSERT_EQ(run({"train", "--config", path("tiny.toml"), "--data", path("data"), "--out", path("half"), "--steps", "2"}).code, 0);
  ASSERT_EQ(run({"train", "--config", path("tiny.toml"), "--data", path("data"), "--out", path("rest"), "--steps", "4",
                 "--resume", path("half/model.ckpt")})
                .code,
            0);
  EXPECT_EQ(read_file(path("full/model.ckpt")), read_file(path("rest/model.ckpt")));
}

TEST_F(Workspace, InferAtUnitScaleEqualsSameGridPrediction) {
  pipeline("p");
  const std::string ckpt = path("p/run/model.ckpt"), in = path("p/data/test.sfb");
  const Result r = run({"infer", "--ckpt", ckpt, "--in", in, "--out", path("same.sfb"), "--scale", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("at 32x32"), std::string::npos);
  const Model model = Model::from_checkpoint(Checkpoint::read(ckpt));
  const auto inputs = read_sfb(in);
  const auto outputs = read_sfb(path("same.sfb"));
  ASSERT_EQ(outputs.size(), inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double> expect = model.predict(inputs[i], 32, 32).values.cast<float>().cast<double>();
    EXPECT_TRUE(test::bitwise_equal(outputs[i].values, expect));
  }
}

TEST_F(Workspace, InferServesArbitraryExtents) {
  pipeline("p");
  const std::string ckpt = path("p/run/model.ckpt"), in = path("p/data/test.sfb");
  ASSERT_EQ(run({"infer", "--ckpt", ckpt, "--in", in, "--out", path("a.sfb"), "--scale", "6.3"}).code, 0);
  EXPECT_EQ(read_sfb(path("a.sfb"))[0].values.shape(), (Shape{1, 202, 202}));  // 201.6
  ASSERT_EQ(run({"infer", "--ckpt", ckpt, "--in", in, "--out", path("b.sfb"), "--out-extents", "13x17"}).code, 0);
  EXPECT_EQ(read_sfb(path("b.sfb"))[0].values.shape(), (Shape{1, 13, 17}));
  EXPECT_EQ(run({"infer", "--ckpt", ckpt, "--in", in, "--out", path("c.sfb")}).code, cli::kUsage);
  EXPECT_EQ(run({"infer", "--ckpt", ckpt, "--in", in, "--out", path("c.sfb"), "--scale", "2", "--out-extents", "4x4"}).code,
            cli::kUsage);
}

TEST_F(Workspace, PriorCorrelationTable) {
  pipeline("p");
  const Result r = run({"prior-corr", "--ckpt", path("p/run/model.ckpt"), "--data", path("p/data"), "--alpha", "1,2",
                        "--beta", "0.1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("record,alpha,beta,pearson_r\n", 0), 0u);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 2 * 2 + 2);
  EXPECT_NE(r.out.find("\nmean,1,0.1,"), std::string::npos);
  EXPECT_EQ(run({"prior-corr", "--ckpt", path("p/run/model.ckpt"), "--data", path("p/data"), "--source", "oracle"}).code,
            cli::kFailure);
}

TEST_F(Workspace, SpectraWritesOneCsvPerInput) {
  ASSERT_EQ(run({"gen-data", "--config", path("tiny.toml"), "--out", path("data")}).code, 0);
  const Result r = run({"spectra", "--in", path("data/train.sfb"), "--in", path("data/test.sfb"), "--out", path("spec")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_file(path("spec/train_spectrum.csv"));
  EXPECT_EQ(csv.rfind("k,power\n", 0), 0u);
  EXPECT_TRUE(fs::exists(path("spec/test_spectrum.csv")));
}
