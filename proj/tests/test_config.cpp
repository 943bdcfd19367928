#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "plantcloud/config.hpp"

using namespace plantcloud;

TEST(Config, DefaultsAreValidAndBuildModuleConfigs) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  const SuperpointConfig sp = cfg.superpoint_config(7);
  EXPECT_DOUBLE_EQ(sp.voxel.edge, 0.12);
  EXPECT_DOUBLE_EQ(sp.tsne.perplexity, 30.0);
  EXPECT_DOUBLE_EQ(sp.cluster_threshold_2d, 1.0);
  const LscnetSpec net = cfg.lscnet_spec();
  EXPECT_EQ(net.input_points, 1024);
  ASSERT_EQ(net.local_layers.size(), 2u);
  EXPECT_EQ(net.local_layers[0].centers, 512);
  EXPECT_DOUBLE_EQ(net.local_layers[0].radius, 0.2);
  EXPECT_EQ(net.local_layers[1].group_size, 64);
  EXPECT_EQ(net.global_widths, (std::vector<int>{256, 512, 1024}));
  const BlockSpec bs = cfg.block_spec();
  EXPECT_DOUBLE_EQ(bs.edge, 10.0);
  EXPECT_EQ(bs.offsets, (std::vector<double>{0.0, 5.0}));
  EXPECT_EQ(bs.points_per_block, 8192);
  EXPECT_DOUBLE_EQ(bs.voxel_edge, 0.1);
  const TrainConfig tc = cfg.train_config(1);
  EXPECT_EQ(tc.epochs, 100);
  EXPECT_EQ(tc.batch_size, 16);
}

TEST(Config, UnknownKeysRejected) {
  PipelineConfig cfg;
  EXPECT_THROW(cfg.set("bogus.key", "1"), DataError);
  EXPECT_THROW(cfg.set_pair("another=thing"), DataError);
}

TEST(Config, BadValuesRejectedAtValidation) {
  PipelineConfig cfg;
  cfg.set("voxel.edge", "-1");
  EXPECT_THROW(cfg.validate(), DataError);
  cfg.set("voxel.edge", "0.12");
  cfg.set("train.momentum", "1.5");
  EXPECT_THROW(cfg.validate(), DataError);
  cfg.set("train.momentum", "0.9");
  cfg.set("tsne.perplexity", "abc");
  EXPECT_THROW(cfg.validate(), DataError);
}

TEST(Config, FileRoundTripAndOverrides) {
  const auto path = std::filesystem::temp_directory_path() / "plantcloud_cfg.txt";
  {
    std::ofstream out(path);
    out << "# corpus settings\n";
    out << "cluster.threshold2d = 2.5\n";
    out << "tsne.iterations = 600\n";
    out << "net.sa1.widths = 32,32,64\n";
  }
  PipelineConfig cfg = PipelineConfig::from_file(path.string());
  EXPECT_DOUBLE_EQ(cfg.get_double("cluster.threshold2d"), 2.5);
  EXPECT_EQ(cfg.get_int("tsne.iterations"), 600);
  EXPECT_EQ(cfg.get_int_list("net.sa1.widths"), (std::vector<int>{32, 32, 64}));
  cfg.set_pair("tsne.iterations=400");
  EXPECT_EQ(cfg.get_int("tsne.iterations"), 400);
  // defaults survive for untouched keys
  EXPECT_DOUBLE_EQ(cfg.get_double("msac.threshold"), 0.5);
}

TEST(Config, MalformedFileRejected) {
  const auto path = std::filesystem::temp_directory_path() / "plantcloud_badcfg.txt";
  {
    std::ofstream out(path);
    out << "voxel.edge 0.12\n"; // missing '='
  }
  EXPECT_THROW(PipelineConfig::from_file(path.string()), DataError);
}

TEST(Config, EchoContainsEveryKey) {
  PipelineConfig cfg;
  const auto lines = cfg.echo_lines();
  bool found = false;
  for (const std::string& l : lines)
    if (l.find("cfg tsne.perplexity = 30") != std::string::npos) found = true;
  EXPECT_TRUE(found);
  EXPECT_EQ(cfg.echo_map().at("block.edge"), "10");
}
