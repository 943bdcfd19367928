// Integration tests driving the installed CLI binary end to end.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "plantcloud/core/ply_io.hpp"
#include "plantcloud/metrics/evaluate.hpp"
#include "plantcloud/normalize/landmarks.hpp"
#include "support/generators.hpp"

using namespace plantcloud;
namespace fs = std::filesystem;

namespace {

const char* kCli = PLANTCLOUD_CLI_PATH;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(kCli) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "plantcloud_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("superpoints only_one_arg.ply"), 1);          // missing args
  EXPECT_EQ(run_cli("superpoints a.ply b.ply"), 1);               // missing --seed
}

TEST(Cli, DataErrorsExitTwo) {
  const fs::path dir = work_dir();
  EXPECT_EQ(run_cli("evaluate missing.ply missing.ply " + (dir / "r.txt").string()), 2);
  const fs::path bad = dir / "bad.ply";
  {
    std::ofstream out(bad);
    out << "not a ply\n";
  }
  EXPECT_EQ(run_cli("superpoints " + bad.string() + " " + (dir / "o.ply").string() + " --seed 1"),
            2);
  // unknown config key
  EXPECT_EQ(run_cli("synth " + (dir / "x").string() + " --seed 1 --count 1 --set nope=1"), 2);
}

TEST(Cli, SynthDeterministicCorpus) {
  const fs::path dir = work_dir();
  const fs::path a = dir / "corpus_a";
  const fs::path b = dir / "corpus_b";
  fs::remove_all(a);
  fs::remove_all(b);
  ASSERT_EQ(run_cli("synth " + a.string() + " --seed 9 --count 2"), 0);
  ASSERT_EQ(run_cli("synth " + b.string() + " --seed 9 --count 2"), 0);
  EXPECT_EQ(read_file(a / "plant_000.ply"), read_file(b / "plant_000.ply"));
  EXPECT_EQ(read_file(a / "plant_001.ply"), read_file(b / "plant_001.ply"));
  const PointCloud plant = load_ply((a / "plant_000.ply").string());
  EXPECT_GT(plant.size(), 500u);
}

TEST(Cli, EvaluateIdenticalFilesGivesOnes) {
  const fs::path dir = work_dir();
  const fs::path corpus = dir / "corpus_eval";
  fs::remove_all(corpus);
  ASSERT_EQ(run_cli("synth " + corpus.string() + " --seed 4 --count 1"), 0);
  const std::string plant = (corpus / "plant_000.ply").string();
  const fs::path report = dir / "eval_report.txt";
  ASSERT_EQ(run_cli("evaluate " + plant + " " + plant + " " + report.string()), 0);
  const std::string text = read_file(report);
  EXPECT_NE(text.find("Acc: 1.0000"), std::string::npos);
  EXPECT_NE(text.find("MIoU: 1.0000"), std::string::npos);
  EXPECT_NE(text.find("Precision - Stem: 1.0000"), std::string::npos);
}

TEST(Cli, EvaluateLengthMismatchExitsTwo) {
  const fs::path dir = work_dir();
  const fs::path corpus = dir / "corpus_mismatch";
  fs::remove_all(corpus);
  ASSERT_EQ(run_cli("synth " + corpus.string() + " --seed 5 --count 2"), 0);
  EXPECT_EQ(run_cli("evaluate " + (corpus / "plant_000.ply").string() + " " +
                    (corpus / "plant_001.ply").string() + " " + (dir / "r2.txt").string()),
            2);
}

TEST(Cli, NormalizeRecoversPlantFromScene) {
  const fs::path dir = work_dir();
  const auto scene = generators::make_scene(314);
  const fs::path scene_ply = dir / "scene.ply";
  const fs::path lm_file = dir / "scene_landmarks.txt";
  const fs::path out_ply = dir / "scene_plant.ply";
  save_ply(scene.cloud, scene_ply.string());
  save_landmarks(scene.landmarks, lm_file.string());
  ASSERT_EQ(run_cli("normalize " + scene_ply.string() + " " + lm_file.string() + " " +
                    out_ply.string() + " --seed 11"),
            0);
  const PlyContents out = load_ply_contents(out_ply.string());
  // plant points only: generator labels survive, background was unlabeled
  EXPECT_GE(out.cloud.size(), static_cast<std::size_t>(0.95 * scene.plant_points));
  EXPECT_LE(out.cloud.size(), scene.plant_points);
  for (Semantic s : out.cloud.semantic) EXPECT_NE(s, Semantic::Unlabeled);
  for (const Vec3& p : out.cloud.positions) EXPECT_GE(p.z, 0.0);
  // config echo embedded in the header
  bool has_echo = false;
  for (const std::string& c : out.comments)
    if (c.find("cfg msac.threshold") != std::string::npos) has_echo = true;
  EXPECT_TRUE(has_echo);
  // metric scale: trunk height must be back in the synthetic range
  double zmax = 0;
  for (const Vec3& p : out.cloud.positions) zmax = std::max(zmax, p.z);
  EXPECT_GT(zmax, 14.0);
  EXPECT_LT(zmax, 40.0);
}

TEST(Cli, SuperpointsWritesPartitionColumn) {
  const fs::path dir = work_dir();
  Rng rng(21);
  PointCloud c;
  while (c.size() < 600) {
    const double x = rng.uniform(-3, 3), y = rng.uniform(-3, 3);
    if (x * x + y * y <= 9.0) c.push_back({x, y, rng.normal(0, 0.02)}, Semantic::Leaf);
  }
  const fs::path in_ply = dir / "disk.ply";
  const fs::path out_ply = dir / "disk_sp.ply";
  save_ply(c, in_ply.string());
  ASSERT_EQ(run_cli("superpoints " + in_ply.string() + " " + out_ply.string() +
                    " --seed 3 --set cluster.threshold2d=5 --set tsne.iterations=300"),
            0);
  const PlyContents out = load_ply_contents(out_ply.string());
  ASSERT_TRUE(out.extra_int_columns.count("superpoint"));
  ASSERT_EQ(out.cloud.size(), c.size());
  for (std::int32_t id : out.extra_int_columns.at("superpoint")) EXPECT_GE(id, 0);
}

TEST(Cli, PartitionWritesArchive) {
  const fs::path dir = work_dir();
  const fs::path corpus = dir / "corpus_part";
  fs::remove_all(corpus);
  ASSERT_EQ(run_cli("synth " + corpus.string() + " --seed 6 --count 1"), 0);
  const fs::path blocks = dir / "plant.blocks";
  ASSERT_EQ(run_cli("partition " + (corpus / "plant_000.ply").string() + " " + blocks.string() +
                    " --seed 2 --set block.points=512"),
            0);
  const std::string payload = read_file(blocks);
  EXPECT_EQ(payload.substr(0, 4), "PCBA");
}

TEST(Cli, TrainPredictEvaluateRoundTrip) {
  const fs::path dir = work_dir();
  const fs::path corpus = dir / "corpus_tp";
  fs::remove_all(corpus);
  ASSERT_EQ(run_cli("synth " + corpus.string() + " --seed 12 --count 3"), 0);
  // move one plant out as the test plant
  const fs::path train_dir = dir / "train_plants";
  fs::remove_all(train_dir);
  fs::create_directories(train_dir);
  fs::copy_file(corpus / "plant_000.ply", train_dir / "plant_000.ply",
                fs::copy_options::overwrite_existing);
  fs::copy_file(corpus / "plant_001.ply", train_dir / "plant_001.ply",
                fs::copy_options::overwrite_existing);

  const std::string small_net =
      " --set net.input_points=128 --set net.sa1.centers=32 --set net.sa1.k=8"
      " --set net.sa1.widths=12,16 --set net.sa2.centers=12 --set net.sa2.k=8"
      " --set net.sa2.widths=24,32 --set net.global.widths=32,48 --set net.head.widths=32,16"
      " --set net.attention_hidden=6 --set net.global_hidden=6 --set net.rum_hidden=5"
      " --set net.head.dropout=0 --set train.epochs=4 --set train.lr=0.01"
      " --set tsne.iterations=250 --set cluster.threshold2d=2.5";
  const fs::path model = dir / "model.bin";
  ASSERT_EQ(run_cli("train " + train_dir.string() + " " + model.string() + " --seed 8" +
                    small_net),
            0);
  const fs::path pred = dir / "pred.ply";
  ASSERT_EQ(run_cli("predict " + (corpus / "plant_002.ply").string() + " " + model.string() +
                    " " + pred.string() + " --seed 8" + small_net),
            0);
  const PlyContents out = load_ply_contents(pred.string());
  EXPECT_GT(out.cloud.size(), 400u);
  ASSERT_TRUE(out.extra_int_columns.count("superpoint"));
  for (Semantic s : out.cloud.semantic) EXPECT_NE(s, Semantic::Unlabeled);
}
