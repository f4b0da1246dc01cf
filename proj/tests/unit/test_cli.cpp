#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "layoutforge/data.hpp"
#include "layoutforge/pipeline.hpp"
#include "fixtures.hpp"

using namespace layoutforge;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string output;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult cli(const std::string& args) const {
    const std::string log = (dir_ / "stdout.txt").string();
    const std::string cmd = std::string(LAYOUTFORGE_CLI) + " " + args + " > " + log + " 2>&1";
    CliResult r;
    const int status = std::system(cmd.c_str());
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
  }

  static nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UnknownFlagIsAUsageError) {
  auto r = cli("evaluate --corpus x.json --bogus 1");
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_EQ(cli("no-such-command").code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST_F(CliTest, EvaluateSyntheticCorpus) {
  ASSERT_EQ(cli("synth-data --size 40 --seed 2 --out " + path("corpus.json")).code, 0);
  auto r = cli("evaluate --corpus " + path("corpus.json") + " --out " + path("report.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("corpus"), std::string::npos);
  auto report = read_json(path("report.json"));
  EXPECT_EQ(report["corpus"]["overlap_index"], 0.0);
  EXPECT_EQ(report["corpus"]["alignment_index"], 0.0);
}

TEST_F(CliTest, GenerateOneLayoutPerGridLocation) {
  lf_test::tiny_checkpoint().save(path("model.pt"));
  DesignRequest req;
  req.canvas = Canvas::from_size(512, 512);
  req.elements = {{kProductImage, {0.16, 1.0, 0.5}, std::nullopt},
                  {kHeadline, {0.06, 0.25, 0.2}, std::nullopt},
                  {kButton, {0.02, 0.4, 0.9}, std::nullopt}};
  std::ofstream(path("request.json")) << design_request_to_json(req).dump();
  auto r = cli("generate --checkpoint " + path("model.pt") + " --request " + path("request.json") +
               " --grid-n 3 --k 3 --seed 4 --out " + path("out"));
  ASSERT_EQ(r.code, 0) << r.output;
  auto set = read_json(dir_ / "out" / "candidates.json");
  EXPECT_EQ(set["candidates"].size(), 9u);
  EXPECT_EQ(set["recommended"].size(), 3u);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "layout_8.svg"));

  ASSERT_EQ(cli("cluster-plot --candidates " + path("out/candidates.json") + " --out " + path("plot.svg")).code, 0);
  EXPECT_TRUE(fs::exists(path("plot.svg")));
}

TEST_F(CliTest, RetargetSquareToPortrait) {
  lf_test::tiny_checkpoint(6, true).save(path("adjust.pt"));
  save_layout(path("layout.json"), annotate(lf_test::small_corpus(1)[0]));
  auto r = cli("retarget --checkpoint " + path("adjust.pt") + " --layout " + path("layout.json") +
               " --width 400 --height 800 --out " + path("rt"));
  ASSERT_EQ(r.code, 0) << r.output;
  auto out = load_layout(dir_ / "rt" / "layout.json");
  EXPECT_EQ(out.canvas.width_px, 400);
  EXPECT_EQ(out.canvas.height_px, 800);
  EXPECT_EQ(out.canvas.aspect_class, AspectClass::portrait);
}

TEST_F(CliTest, TrainWritesACheckpoint) {
  auto r = cli("train --steps 2 --batch-size 4 --corpus-size 20 --image-size 16 --conv-channels 4,8 "
               "--embed-dim 16 --decoder-hidden 16 --eval-samples 8 --out " + path("m.pt") + " --log " + path("log.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(ModelCheckpoint::load(path("m.pt")).step, 2);
  EXPECT_TRUE(fs::exists(path("log.csv")));
}

TEST_F(CliTest, ConfigFileSuppliesOptions) {
  std::ofstream(path("cfg.toml")) << "[synth-data]\nsize = 7\nseed = 3\n";
  ASSERT_EQ(cli("synth-data --config " + path("cfg.toml") + " --out " + path("c.json")).code, 0);
  EXPECT_EQ(load_corpus(path("c.json")).size(), 7u);
}

TEST_F(CliTest, BadInputFailsCleanly) {
  auto r = cli("evaluate --corpus " + path("missing.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("error"), std::string::npos);
}
