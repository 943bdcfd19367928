// plantcloud command-line front end.
//
// Subcommands: normalize, superpoints, partition, train, predict, evaluate,
// synth. Every command validates its inputs, embeds the effective
// configuration into its outputs, and exits with 0 (ok), 1 (usage),
// 2 (data error) or 3 (numerical failure).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "plantcloud/plantcloud.hpp"

namespace {

using namespace plantcloud;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
};

PipelineConfig load_config(const CommonArgs& args) {
  PipelineConfig cfg = args.config_path.empty() ? PipelineConfig()
                                                : PipelineConfig::from_file(args.config_path);
  for (const std::string& pair : args.overrides) cfg.set_pair(pair);
  cfg.validate();
  return cfg;
}

std::vector<std::string> output_comments(const PipelineConfig& cfg, std::uint64_t seed) {
  std::vector<std::string> comments = cfg.echo_lines();
  comments.push_back("cfg seed = " + std::to_string(seed));
  return comments;
}

int cmd_normalize(const std::string& in_path, const std::string& landmarks_path,
                  const std::string& out_path, const CommonArgs& args) {
  const PipelineConfig cfg = load_config(args);
  const PointCloud raw = load_ply(in_path);
  const LandmarkSet landmarks = load_landmarks(landmarks_path);

  const double scale = scale_factor(landmarks);
  const PointCloud scaled = apply_scale(raw, scale);
  const Vec3 base = landmarks.base * scale;

  const PlaneModel plane = fit_plane_msac(scaled, cfg.msac_config(args.seed));
  auto [posed, transform] = normalize_pose(scaled, plane, base);
  const PointCloud plant = extract_plant(posed, cfg.get_double("plant.link_radius"));

  PlyWriteOptions opt;
  opt.comments = output_comments(cfg, args.seed);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "scale_factor = %.12g", scale);
  opt.comments.push_back(buf);
  std::snprintf(buf, sizeof(buf), "plane_normal = %.9g %.9g %.9g offset %.9g", plane.normal.x,
                plane.normal.y, plane.normal.z, plane.offset);
  opt.comments.push_back(buf);
  save_ply(plant, out_path, opt);
  std::printf("normalize: %zu -> %zu points, scale %.6g, plane normal (%.4f, %.4f, %.4f)\n",
              raw.size(), plant.size(), scale, plane.normal.x, plane.normal.y, plane.normal.z);
  return 0;
}

int cmd_superpoints(const std::string& in_path, const std::string& out_path,
                    const CommonArgs& args) {
  const PipelineConfig cfg = load_config(args);
  const PointCloud cloud = load_ply(in_path);
  const SuperpointPartition part = extract_superpoints(cloud, cfg.superpoint_config(args.seed));
  std::vector<std::int32_t> ids(part.labels.begin(), part.labels.end());
  PlyWriteOptions opt;
  opt.comments = output_comments(cfg, args.seed);
  opt.comments.push_back("superpoint_count = " + std::to_string(part.count()));
  save_ply(cloud, out_path, opt, {{"superpoint", ids}});
  std::printf("superpoints: %zu points -> %zu superpoints\n", cloud.size(), part.count());
  return 0;
}

int cmd_partition(const std::string& in_path, const std::string& out_path,
                  const CommonArgs& args) {
  const PipelineConfig cfg = load_config(args);
  PointCloud cloud = load_ply(in_path);
  const std::size_t raw_size = cloud.size();
  if (cloud.has_confidence())
    cloud = confidence_filter(cloud,
                              static_cast<std::int32_t>(cfg.get_int("partition.min_confidence")));
  const BlockSpec spec = cfg.block_spec();
  const VoxelFilterResult down = voxel_filter(cloud, {spec.voxel_edge});
  const std::vector<Block> blocks = partition_blocks(down.cloud, spec, args.seed);
  auto echo = cfg.echo_map();
  echo["seed"] = std::to_string(args.seed);
  save_blocks(down.cloud, blocks, spec, out_path, echo);
  std::printf("partition: %zu raw -> %zu filtered -> %zu subsampled points in %zu blocks\n",
              raw_size, cloud.size(), down.cloud.size(), blocks.size());
  return 0;
}

std::vector<std::string> list_plys(const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ply")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw DataError("no .ply files in " + dir);
  return paths;
}

template <typename S>
int run_train(const PipelineConfig& cfg, const std::vector<std::string>& plant_paths,
              const std::string& model_path, std::uint64_t seed) {
  const auto min_conf = static_cast<std::int32_t>(cfg.get_int("partition.min_confidence"));
  const double min_purity = cfg.get_double("train.min_purity");
  std::vector<LabeledCloud> dataset;
  for (const std::string& path : plant_paths) {
    PointCloud cloud = load_ply(path);
    if (cloud.has_confidence()) cloud = confidence_filter(cloud, min_conf);
    const SuperpointPartition part = extract_superpoints(cloud, cfg.superpoint_config(seed));
    SuperpointDatasetStats stats;
    const auto samples = make_superpoint_dataset(cloud, part, min_purity, &stats);
    dataset.insert(dataset.end(), samples.begin(), samples.end());
    std::printf("train: %s -> %zu superpoints, %zu kept\n", path.c_str(),
                stats.total_superpoints, stats.kept);
  }
  auto model = make_lscnet<S>(cfg.lscnet_spec(), seed);
  const TrainConfig train_cfg = cfg.train_config(seed);
  const auto result = train(model, dataset, train_cfg);
  auto echo = cfg.echo_map();
  echo["seed"] = std::to_string(seed);
  echo["train.samples"] = std::to_string(dataset.size());
  echo["train.final_loss"] = std::to_string(result.epoch_losses.back());
  save_checkpoint(model, model_path, echo);
  std::printf("train: %zu samples, %d epochs, loss %.4f -> %.4f, model saved to %s\n",
              dataset.size(), train_cfg.epochs, result.epoch_losses.front(),
              result.epoch_losses.back(), model_path.c_str());
  return 0;
}

int cmd_train(const std::string& train_dir, const std::string& model_path,
              const CommonArgs& args) {
  const PipelineConfig cfg = load_config(args);
  const auto paths = list_plys(train_dir);
  if (cfg.raw("net.scalar") == "float")
    return run_train<float>(cfg, paths, model_path, args.seed);
  return run_train<double>(cfg, paths, model_path, args.seed);
}

template <typename S>
int run_predict(const PipelineConfig& cfg, const std::string& in_path,
                const std::string& model_path, const std::string& out_path, std::uint64_t seed) {
  PointCloud cloud = load_ply(in_path);
  const std::size_t raw_size = cloud.size();
  if (cloud.has_confidence())
    cloud = confidence_filter(cloud,
                              static_cast<std::int32_t>(cfg.get_int("partition.min_confidence")));
  auto model = load_checkpoint<S>(model_path);
  const SegmentResult result = segment_plant(cloud, model, cfg.superpoint_config(seed), seed);
  PlyWriteOptions opt;
  opt.comments = output_comments(cfg, seed);
  opt.comments.push_back("model = " + model_path);
  std::vector<std::int32_t> ids(result.partition.labels.begin(), result.partition.labels.end());
  save_ply(result.cloud, out_path, opt, {{"superpoint", ids}});
  std::size_t leaf = 0;
  for (Semantic s : result.cloud.semantic) leaf += s == Semantic::Leaf;
  std::printf("predict: %zu raw -> %zu scored points, %zu superpoints, %.1f%% leaf\n", raw_size,
              result.cloud.size(), result.partition.count(),
              100.0 * static_cast<double>(leaf) / static_cast<double>(result.cloud.size()));
  return 0;
}

int cmd_predict(const std::string& in_path, const std::string& model_path,
                const std::string& out_path, const CommonArgs& args) {
  const PipelineConfig cfg = load_config(args);
  if (cfg.raw("net.scalar") == "float")
    return run_predict<float>(cfg, in_path, model_path, out_path, args.seed);
  return run_predict<double>(cfg, in_path, model_path, out_path, args.seed);
}

int cmd_evaluate(const std::string& pred_path, const std::string& truth_path,
                 const std::string& report_path, const CommonArgs& args) {
  const PipelineConfig cfg = load_config(args);
  const PointCloud pred = load_ply(pred_path);
  const PointCloud truth = load_ply(truth_path);
  const SegmentationReport report =
      evaluate(pred, truth, cfg.get_bool("eval.ignore_unlabeled"));
  std::vector<std::string> comments = {"pred = " + pred_path, "truth = " + truth_path};
  const std::string text = report_to_text(report, comments);
  std::ofstream out(report_path);
  if (!out) throw DataError("cannot write report: " + report_path);
  out << text;
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_synth(const std::string& out_dir, std::uint64_t seed, int count, const CommonArgs& args) {
  const PipelineConfig cfg = load_config(args);
  const auto paths = write_synth_corpus(out_dir, seed, count, output_comments(cfg, seed));
  std::printf("synth: wrote %zu plants to %s\n", paths.size(), out_dir.c_str());
  return 0;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool seed_required) {
  cmd->add_option("--config", args.config_path, "configuration file (key = value lines)");
  cmd->add_option("--set", args.overrides, "override a config key (key=value, repeatable)");
  auto* seed = cmd->add_option("--seed", args.seed, "RNG seed");
  if (seed_required) seed->required();
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"plant point-cloud processing pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string in_path, aux_path, out_path, dir_path;
  int count = 30;

  auto* normalize = app.add_subcommand(
      "normalize", "recover metric scale, level the ground plane, isolate the plant");
  normalize->add_option("input", in_path, "raw reconstruction PLY")->required();
  normalize->add_option("landmarks", aux_path, "landmark file (base/lm/pair records)")->required();
  normalize->add_option("output", out_path, "normalized plant PLY")->required();
  add_common(normalize, args, false);

  auto* superpoints =
      app.add_subcommand("superpoints", "oversegment a plant cloud into superpoints");
  superpoints->add_option("input", in_path, "plant PLY")->required();
  superpoints->add_option("output", out_path, "PLY with an added superpoint property")->required();
  add_common(superpoints, args, true);

  auto* partition =
      app.add_subcommand("partition", "confidence-filter, subsample and tile into blocks");
  partition->add_option("input", in_path, "plant PLY")->required();
  partition->add_option("output", out_path, "block archive")->required();
  add_common(partition, args, false);

  auto* train = app.add_subcommand("train", "train the leaf/stem superpoint classifier");
  train->add_option("train_dir", dir_path, "directory of labeled plant PLYs")->required();
  train->add_option("model", out_path, "output checkpoint")->required();
  add_common(train, args, true);

  auto* predict = app.add_subcommand("predict", "segment a plant cloud with a trained model");
  predict->add_option("input", in_path, "plant PLY")->required();
  predict->add_option("model", aux_path, "model checkpoint")->required();
  predict->add_option("output", out_path, "labeled PLY")->required();
  add_common(predict, args, false);

  auto* evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");
  evaluate->add_option("pred", in_path, "predicted PLY")->required();
  evaluate->add_option("truth", aux_path, "ground-truth PLY")->required();
  evaluate->add_option("report", out_path, "output report path")->required();
  add_common(evaluate, args, false);

  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic plant corpus");
  synth->add_option("out_dir", dir_path, "output directory")->required();
  synth->add_option("--count", count, "number of plants")->capture_default_str();
  add_common(synth, args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1; // usage problems exit 1; --help exits 0
  }

  try {
    if (normalize->parsed()) return cmd_normalize(in_path, aux_path, out_path, args);
    if (superpoints->parsed()) return cmd_superpoints(in_path, out_path, args);
    if (partition->parsed()) return cmd_partition(in_path, out_path, args);
    if (train->parsed()) return cmd_train(dir_path, out_path, args);
    if (predict->parsed()) return cmd_predict(in_path, aux_path, out_path, args);
    if (evaluate->parsed()) return cmd_evaluate(in_path, aux_path, out_path, args);
    if (synth->parsed()) return cmd_synth(dir_path, args.seed, count, args);
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
