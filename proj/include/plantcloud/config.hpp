// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Flat key-value pipeline configuration. Every tunable named by the modules
// is registered here with a default and a validator; unknown keys and
// out-of-range values are rejected at load time. The effective configuration
// is echoed into output artifacts.

#ifndef PLANTCLOUD_CONFIG_HPP
#define PLANTCLOUD_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "plantcloud/core/types.hpp"
#include "plantcloud/core/voxel_filter.hpp"
#include "plantcloud/lscnet/network.hpp"
#include "plantcloud/lscnet/train.hpp"
#include "plantcloud/normalize/plane_msac.hpp"
#include "plantcloud/partition/blocks.hpp"
#include "plantcloud/superpoint/extract.hpp"

namespace plantcloud {

class PipelineConfig {
public:
  PipelineConfig() { register_all(); }

  /// Lines of `key = value`; '#' starts a comment.
  static PipelineConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    PipelineConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string key, eq, value;
      std::istringstream ls(line);
      if (!(ls >> key)) continue;
      if (!(ls >> eq) || eq != "=")
        throw DataError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
      std::getline(ls, value);
      cfg.set(key, trim(value));
    }
    cfg.validate();
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw DataError("unknown config key: " + key);
    it->second = value;
  }

  /// Accepts `key=value` (as passed on the command line).
  void set_pair(const std::string& pair) {
    const std::size_t eq = pair.find('=');
    if (eq == std::string::npos) throw DataError("expected key=value, got: " + pair);
    set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
  }

  /// Re-parses every value through its validator.
  void validate() const {
    for (const auto& [key, check] : validators_) check();
  }

  const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw DataError("unknown config key: " + key);
    return it->second;
  }

  double get_double(const std::string& key) const {
    const std::string& v = raw(key);
    std::size_t pos = 0;
    double out;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw DataError("config " + key + ": not a number: " + v);
    }
    if (pos != v.size()) throw DataError("config " + key + ": not a number: " + v);
    return out;
  }

  std::int64_t get_int(const std::string& key) const {
    const std::string& v = raw(key);
    std::size_t pos = 0;
    std::int64_t out;
    try {
      out = std::stoll(v, &pos);
    } catch (const std::exception&) {
      throw DataError("config " + key + ": not an integer: " + v);
    }
    if (pos != v.size()) throw DataError("config " + key + ": not an integer: " + v);
    return out;
  }

  bool get_bool(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw DataError("config " + key + ": not a boolean: " + v);
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(raw(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw DataError("config " + key + ": bad list element: " + tok);
      }
    }
    if (out.empty()) throw DataError("config " + key + ": empty list");
    return out;
  }

  std::vector<int> get_int_list(const std::string& key) const {
    std::vector<int> out;
    for (double v : get_double_list(key)) out.push_back(static_cast<int>(v));
    return out;
  }

  /// `key = value` lines for embedding into output artifacts.
  std::vector<std::string> echo_lines() const {
    std::vector<std::string> out;
    for (const auto& [key, value] : values_) out.push_back("cfg " + key + " = " + value);
    return out;
  }

  std::map<std::string, std::string> echo_map() const { return values_; }

  // -- module config builders ------------------------------------------------

  MsacConfig msac_config(std::uint64_t seed) const {
    MsacConfig c;
    c.inlier_threshold = get_double("msac.threshold");
    c.iterations = static_cast<int>(get_int("msac.iterations"));
    c.seed = seed;
    return c;
  }

  TsneConfig tsne_config(std::uint64_t seed) const {
    TsneConfig c;
    c.perplexity = get_double("tsne.perplexity");
    c.iterations = static_cast<int>(get_int("tsne.iterations"));
    c.learning_rate = get_double("tsne.learning_rate");
    c.exaggeration = get_double("tsne.exaggeration");
    c.exaggeration_iters = static_cast<int>(get_int("tsne.exaggeration_iters"));
    c.momentum_switch = static_cast<int>(get_int("tsne.momentum_switch"));
    c.max_points = static_cast<std::size_t>(get_int("tsne.max_points"));
    c.seed = seed;
    return c;
  }

  SuperpointConfig superpoint_config(std::uint64_t seed) const {
    SuperpointConfig c;
    c.voxel.edge = get_double("voxel.edge");
    c.tsne = tsne_config(0);
    c.cluster_threshold_2d = get_double("cluster.threshold2d");
    c.linearity_threshold = get_double("linear.threshold");
    c.convexify.solidity_threshold = get_double("solidity.threshold");
    c.convexify.alpha_scale = get_double("solidity.alpha_scale");
    c.convexify.max_depth = static_cast<int>(get_int("solidity.max_depth"));
    c.convexify.spectral_knn = static_cast<int>(get_int("spectral.knn"));
    c.convexify.spectral_max_points = static_cast<std::size_t>(get_int("spectral.max_points"));
    c.seed = seed;
    return c;
  }

  LscnetSpec lscnet_spec() const {
    LscnetSpec spec;
    spec.input_points = static_cast<int>(get_int("net.input_points"));
    spec.local_layers.clear();
    for (const std::string layer : {std::string("net.sa1"), std::string("net.sa2")}) {
      SaLayerSpec l;
      l.centers = static_cast<int>(get_int(layer + ".centers"));
      l.radius = get_double(layer + ".radius");
      l.group_size = static_cast<int>(get_int(layer + ".k"));
      l.mlp_widths = get_int_list(layer + ".widths");
      l.csm = get_bool(layer + ".csm");
      l.rum = get_bool(layer + ".rum");
      spec.local_layers.push_back(l);
    }
    spec.global_widths = get_int_list("net.global.widths");
    spec.head_widths = get_int_list("net.head.widths");
    spec.head_dropout = get_double("net.head.dropout");
    spec.attention_hidden = static_cast<int>(get_int("net.attention_hidden"));
    spec.global_hidden = static_cast<int>(get_int("net.global_hidden"));
    spec.rum_hidden = static_cast<int>(get_int("net.rum_hidden"));
    spec.validate();
    return spec;
  }

  TrainConfig train_config(std::uint64_t seed) const {
    TrainConfig c;
    c.epochs = static_cast<int>(get_int("train.epochs"));
    c.batch_size = static_cast<int>(get_int("train.batch"));
    c.learning_rate = get_double("train.lr");
    c.lr_halve_every = static_cast<int>(get_int("train.lr_halve_every"));
    c.momentum = get_double("train.momentum");
    c.class_weighting = get_bool("train.class_weights");
    c.seed = seed;
    c.validate();
    return c;
  }

  BlockSpec block_spec() const {
    BlockSpec c;
    c.edge = get_double("block.edge");
    c.offsets = get_double_list("block.offsets");
    c.points_per_block = static_cast<int>(get_int("block.points"));
    c.voxel_edge = get_double("block.voxel");
    c.min_points_train = static_cast<int>(get_int("block.min_points"));
    c.validate();
    return c;
  }

private:
  static std::string trim(std::string s) {
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    return s;
  }

  void add(const std::string& key, const std::string& def, std::function<void()> check) {
    values_[key] = def;
    validators_[key] = std::move(check);
  }

  void register_all() {
    auto positive = [this](const std::string& k) {
      add(k, values_[k], [this, k] {
        if (get_double(k) <= 0.0) throw DataError("config " + k + " must be > 0");
      });
    };
    auto fraction = [this](const std::string& k) {
      add(k, values_[k], [this, k] {
        const double v = get_double(k);
        if (v <= 0.0 || v > 1.0) throw DataError("config " + k + " must be in (0, 1]");
      });
    };
    auto at_least = [this](const std::string& k, std::int64_t lo) {
      add(k, values_[k], [this, k, lo] {
        if (get_int(k) < lo)
          throw DataError("config " + k + " must be >= " + std::to_string(lo));
      });
    };
    auto boolean = [this](const std::string& k) {
      add(k, values_[k], [this, k] { (void)get_bool(k); });
    };

    values_["voxel.edge"] = "0.12";
    positive("voxel.edge");
    values_["plant.link_radius"] = "0.5";
    positive("plant.link_radius");
    values_["msac.threshold"] = "0.5";
    positive("msac.threshold");
    values_["msac.iterations"] = "1000";
    at_least("msac.iterations", 1);

    values_["tsne.perplexity"] = "30";
    add("tsne.perplexity", "30", [this] {
      if (get_double("tsne.perplexity") <= 1.0)
        throw DataError("config tsne.perplexity must exceed 1");
    });
    values_["tsne.iterations"] = "1000";
    at_least("tsne.iterations", 1);
    values_["tsne.learning_rate"] = "200";
    positive("tsne.learning_rate");
    values_["tsne.exaggeration"] = "12";
    positive("tsne.exaggeration");
    values_["tsne.exaggeration_iters"] = "250";
    at_least("tsne.exaggeration_iters", 0);
    values_["tsne.momentum_switch"] = "250";
    at_least("tsne.momentum_switch", 0);
    values_["tsne.max_points"] = "5000";
    at_least("tsne.max_points", 10);

    values_["cluster.threshold2d"] = "1.0";
    positive("cluster.threshold2d");
    values_["linear.threshold"] = "0.95";
    fraction("linear.threshold");
    values_["solidity.threshold"] = "0.8";
    fraction("solidity.threshold");
    values_["solidity.alpha_scale"] = "4.0";
    positive("solidity.alpha_scale");
    values_["solidity.max_depth"] = "6";
    at_least("solidity.max_depth", 0);
    values_["spectral.knn"] = "10";
    at_least("spectral.knn", 1);
    values_["spectral.max_points"] = "1024";
    at_least("spectral.max_points", 2);

    values_["net.input_points"] = "1024";
    at_least("net.input_points", 1);
    values_["net.sa1.centers"] = "512";
    at_least("net.sa1.centers", 1);
    values_["net.sa1.radius"] = "0.2";
    positive("net.sa1.radius");
    values_["net.sa1.k"] = "32";
    at_least("net.sa1.k", 1);
    add("net.sa1.widths", "64,64,128", [this] { (void)get_int_list("net.sa1.widths"); });
    values_["net.sa1.csm"] = "true";
    boolean("net.sa1.csm");
    values_["net.sa1.rum"] = "true";
    boolean("net.sa1.rum");
    values_["net.sa2.centers"] = "128";
    at_least("net.sa2.centers", 1);
    values_["net.sa2.radius"] = "0.4";
    positive("net.sa2.radius");
    values_["net.sa2.k"] = "64";
    at_least("net.sa2.k", 1);
    add("net.sa2.widths", "128,128,256", [this] { (void)get_int_list("net.sa2.widths"); });
    values_["net.sa2.csm"] = "true";
    boolean("net.sa2.csm");
    values_["net.sa2.rum"] = "true";
    boolean("net.sa2.rum");
    add("net.global.widths", "256,512,1024", [this] { (void)get_int_list("net.global.widths"); });
    add("net.head.widths", "512,256", [this] { (void)get_int_list("net.head.widths"); });
    add("net.head.dropout", "0.4", [this] {
      const double v = get_double("net.head.dropout");
      if (v < 0.0 || v >= 1.0) throw DataError("config net.head.dropout must be in [0, 1)");
    });
    values_["net.attention_hidden"] = "32";
    at_least("net.attention_hidden", 1);
    values_["net.global_hidden"] = "32";
    at_least("net.global_hidden", 1);
    values_["net.rum_hidden"] = "16";
    at_least("net.rum_hidden", 1);
    add("net.scalar", "double", [this] {
      const std::string& v = raw("net.scalar");
      if (v != "double" && v != "float")
        throw DataError("config net.scalar must be 'double' or 'float'");
    });

    values_["train.epochs"] = "100";
    at_least("train.epochs", 1);
    values_["train.batch"] = "16";
    at_least("train.batch", 1);
    values_["train.lr"] = "0.001";
    positive("train.lr");
    values_["train.lr_halve_every"] = "20";
    at_least("train.lr_halve_every", 1);
    add("train.momentum", "0.9", [this] {
      const double v = get_double("train.momentum");
      if (v < 0.0 || v >= 1.0) throw DataError("config train.momentum must be in [0, 1)");
    });
    values_["train.class_weights"] = "true";
    boolean("train.class_weights");
    add("train.min_purity", "0.7", [this] {
      const double v = get_double("train.min_purity");
      if (v < 0.0 || v > 1.0) throw DataError("config train.min_purity must be in [0, 1]");
    });

    values_["block.edge"] = "10";
    positive("block.edge");
    add("block.offsets", "0,5", [this] { (void)get_double_list("block.offsets"); });
    values_["block.points"] = "8192";
    at_least("block.points", 1);
    values_["block.voxel"] = "0.1";
    positive("block.voxel");
    values_["block.min_points"] = "100";
    at_least("block.min_points", 0);
    values_["partition.min_confidence"] = "6";
    at_least("partition.min_confidence", 0);

    values_["eval.ignore_unlabeled"] = "false";
    boolean("eval.ignore_unlabeled");
    values_["eval.macro"] = "false";
    boolean("eval.macro");
  }

  std::map<std::string, std::string> values_;
  std::map<std::string, std::function<void()>> validators_;
};

} // namespace plantcloud

#endif // PLANTCLOUD_CONFIG_HPP
