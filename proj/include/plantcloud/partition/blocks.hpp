// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Block partitioning for fixed-size per-point networks: confidence filter,
// XY tiling with dual offsets, per-block resampling, majority-vote
// reassembly, and a versioned binary block archive.

#ifndef PLANTCLOUD_PARTITION_BLOCKS_HPP
#define PLANTCLOUD_PARTITION_BLOCKS_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/core/types.hpp"

namespace plantcloud {

/// Points seen by fewer than `min_confidence` source images are dropped.
inline PointCloud confidence_filter(const PointCloud& cloud, std::int32_t min_confidence = 6) {
  if (!cloud.has_confidence()) throw DataError("confidence_filter: cloud has no confidence attribute");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.confidence[i] >= min_confidence) keep.push_back(i);
  return cloud.select(keep);
}

struct BlockSpec {
  double edge = 10.0;                  // square edge length (cm)
  std::vector<double> offsets{0.0, 5.0};
  int points_per_block = 8192;         // resampled point count N
  double voxel_edge = 0.1;             // 1 mm pre-partition subsampling
  int min_points_train = 100;          // sparse blocks excluded from training

  void validate() const {
    if (edge <= 0.0) throw DataError("block edge must be > 0");
    if (points_per_block < 1) throw DataError("points per block must be >= 1");
    if (voxel_edge <= 0.0) throw DataError("block voxel edge must be > 0");
    if (offsets.empty()) throw DataError("need at least one partition offset");
    for (double o : offsets)
      if (o < 0.0 || o >= edge) throw DataError("offsets must lie in [0, edge)");
  }
};

struct Block {
  std::int64_t cell_x = 0, cell_y = 0;
  std::size_t offset_index = 0;
  double offset = 0.0;
  std::vector<std::size_t> member_indices;    // all cloud points in the cell
  std::vector<std::size_t> resampled_indices; // exactly N entries into the cloud
};

/// Tiles the XY plane into `edge`-sized squares once per offset. Every point
/// falls in exactly one cell per pass (floor((coord - offset) / edge));
/// every non-empty cell is resampled to exactly N points (uniform with
/// replacement when short, seeded uniform subsample when long).
inline std::vector<Block> partition_blocks(const PointCloud& cloud, const BlockSpec& spec,
                                           std::uint64_t seed) {
  spec.validate();
  if (cloud.empty()) throw DataError("partition_blocks: empty cloud");
  std::vector<Block> blocks;
  for (std::size_t oi = 0; oi < spec.offsets.size(); ++oi) {
    const double offset = spec.offsets[oi];
    std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> cell_of;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Vec3& p = cloud.positions[i];
      const auto cx = static_cast<std::int64_t>(std::floor((p.x - offset) / spec.edge));
      const auto cy = static_cast<std::int64_t>(std::floor((p.y - offset) / spec.edge));
      auto [it, inserted] = cell_of.try_emplace({cx, cy}, blocks.size());
      if (inserted) {
        Block b;
        b.cell_x = cx;
        b.cell_y = cy;
        b.offset_index = oi;
        b.offset = offset;
        blocks.push_back(std::move(b));
      }
      blocks[it->second].member_indices.push_back(i);
    }
  }
  for (Block& b : blocks) {
    Rng rng(hash_combine(hash_combine(seed, b.offset_index),
                         hash_combine(static_cast<std::uint64_t>(b.cell_x) * 0x9e37u,
                                      static_cast<std::uint64_t>(b.cell_y))));
    const std::size_t n = b.member_indices.size();
    const auto target = static_cast<std::size_t>(spec.points_per_block);
    b.resampled_indices.reserve(target);
    if (n >= target) {
      std::vector<std::size_t> perm = b.member_indices;
      for (std::size_t i = 0; i < target; ++i)
        std::swap(perm[i], perm[i + rng.bounded(n - i)]);
      b.resampled_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(target));
    } else {
      for (std::size_t i = 0; i < target; ++i)
        b.resampled_indices.push_back(b.member_indices[rng.bounded(n)]);
    }
  }
  return blocks;
}

/// Training view: blocks with fewer than `min_points_train` raw members are
/// dropped (kept at inference so every point stays covered).
inline std::vector<Block> training_blocks(const std::vector<Block>& blocks, const BlockSpec& spec) {
  std::vector<Block> out;
  for (const Block& b : blocks)
    if (b.member_indices.size() >= static_cast<std::size_t>(spec.min_points_train))
      out.push_back(b);
  return out;
}

/// Fuses per-block per-point predictions back onto the original cloud by
/// majority vote across all covering blocks and offsets; ties go to stem.
/// `predictions[k]` must align with `blocks[k].resampled_indices`.
inline PointCloud reassemble(const PointCloud& cloud, const std::vector<Block>& blocks,
                             const std::vector<std::vector<Semantic>>& predictions) {
  if (predictions.size() != blocks.size())
    throw DataError("reassemble: one prediction row per block required");
  std::vector<std::size_t> leaf_votes(cloud.size(), 0), stem_votes(cloud.size(), 0);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const Block& b = blocks[k];
    if (predictions[k].size() != b.resampled_indices.size())
      throw DataError("reassemble: prediction length mismatch in block");
    for (std::size_t r = 0; r < b.resampled_indices.size(); ++r) {
      const std::size_t i = b.resampled_indices[r];
      if (predictions[k][r] == Semantic::Leaf) ++leaf_votes[i];
      else if (predictions[k][r] == Semantic::Stem) ++stem_votes[i];
      else throw DataError("reassemble: prediction must be leaf or stem");
    }
  }
  PointCloud out = cloud;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (leaf_votes[i] + stem_votes[i] == 0)
      throw DataError("reassemble: point " + std::to_string(i) + " covered by no block");
    out.semantic[i] = leaf_votes[i] > stem_votes[i] ? Semantic::Leaf : Semantic::Stem;
  }
  return out;
}

/// Block archive: "PCBA" magic, u32 version, u64 JSON length, JSON header
/// (spec echo, config echo, counts), then per block: cell coordinates,
/// offset, raw member indices, and per resampled point the original index,
/// block-local coordinates (XY centered on the block, Z kept) and global
/// coordinates, all little-endian f64/u64.
inline void save_blocks(const PointCloud& cloud, const std::vector<Block>& blocks,
                        const BlockSpec& spec, const std::string& path,
                        const std::map<std::string, std::string>& config_echo = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write block archive: " + path);
  nlohmann::json header;
  header["format_version"] = 1;
  header["block_count"] = blocks.size();
  header["points_per_block"] = spec.points_per_block;
  header["edge"] = spec.edge;
  header["offsets"] = spec.offsets;
  header["voxel_edge"] = spec.voxel_edge;
  header["config"] = config_echo;
  const std::string json_text = header.dump();
  out.write("PCBA", 4);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t len = json_text.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(json_text.data(), static_cast<std::streamsize>(json_text.size()));

  auto write_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  auto write_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  for (const Block& b : blocks) {
    write_u64(static_cast<std::uint64_t>(b.cell_x));
    write_u64(static_cast<std::uint64_t>(b.cell_y));
    write_u64(b.offset_index);
    write_f64(b.offset);
    write_u64(b.member_indices.size());
    for (std::size_t i : b.member_indices) write_u64(i);
    write_u64(b.resampled_indices.size());
    const double cx = (static_cast<double>(b.cell_x) + 0.5) * spec.edge + b.offset;
    const double cy = (static_cast<double>(b.cell_y) + 0.5) * spec.edge + b.offset;
    for (std::size_t i : b.resampled_indices) {
      write_u64(i);
      const Vec3& p = cloud.positions[i];
      write_f64(p.x - cx);
      write_f64(p.y - cy);
      write_f64(p.z);
      write_f64(p.x);
      write_f64(p.y);
      write_f64(p.z);
    }
  }
  if (!out) throw DataError("I/O failure writing block archive: " + path);
}

struct BlockArchive {
  BlockSpec spec;
  std::vector<Block> blocks;
  std::map<std::string, std::string> config_echo;
};

inline BlockArchive load_blocks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open block archive: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "PCBA") throw DataError("bad block archive magic");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw DataError("unsupported block archive version");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string json_text(len, '\0');
  in.read(json_text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated block archive header");
  const nlohmann::json header = nlohmann::json::parse(json_text);

  BlockArchive archive;
  archive.spec.edge = header.at("edge").get<double>();
  archive.spec.offsets = header.at("offsets").get<std::vector<double>>();
  archive.spec.points_per_block = header.at("points_per_block").get<int>();
  archive.spec.voxel_edge = header.at("voxel_edge").get<double>();
  archive.config_echo = header.at("config").get<std::map<std::string, std::string>>();

  auto read_u64 = [&]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto read_f64 = [&]() {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  const std::size_t count = header.at("block_count").get<std::size_t>();
  archive.blocks.resize(count);
  for (Block& b : archive.blocks) {
    b.cell_x = static_cast<std::int64_t>(read_u64());
    b.cell_y = static_cast<std::int64_t>(read_u64());
    b.offset_index = read_u64();
    b.offset = read_f64();
    b.member_indices.resize(read_u64());
    for (std::size_t& i : b.member_indices) i = read_u64();
    b.resampled_indices.resize(read_u64());
    for (std::size_t& i : b.resampled_indices) {
      i = read_u64();
      for (int skip = 0; skip < 6; ++skip) read_f64(); // coordinates are derivable
    }
    if (!in) throw DataError("truncated block archive payload");
  }
  return archive;
}

} // namespace plantcloud

#endif // PLANTCLOUD_PARTITION_BLOCKS_HPP
