// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Model checkpoint container: "PCLS" magic, format version, a JSON header
// describing the architecture plus a config echo, then raw float64 row-major
// tensor payloads in header order.

#ifndef PLANTCLOUD_LSCNET_CHECKPOINT_HPP
#define PLANTCLOUD_LSCNET_CHECKPOINT_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "plantcloud/lscnet/network.hpp"

namespace plantcloud {

namespace detail {

inline nlohmann::json spec_to_json(const LscnetSpec& spec) {
  nlohmann::json j;
  j["input_points"] = spec.input_points;
  j["local_layers"] = nlohmann::json::array();
  for (const SaLayerSpec& l : spec.local_layers) {
    j["local_layers"].push_back({{"centers", l.centers},
                                 {"radius", l.radius},
                                 {"group_size", l.group_size},
                                 {"mlp_widths", l.mlp_widths},
                                 {"csm", l.csm},
                                 {"rum", l.rum}});
  }
  j["global_widths"] = spec.global_widths;
  j["head_widths"] = spec.head_widths;
  j["head_dropout"] = spec.head_dropout;
  j["attention_hidden"] = spec.attention_hidden;
  j["global_hidden"] = spec.global_hidden;
  j["rum_hidden"] = spec.rum_hidden;
  return j;
}

inline LscnetSpec spec_from_json(const nlohmann::json& j) {
  LscnetSpec spec;
  spec.input_points = j.at("input_points").get<int>();
  spec.local_layers.clear();
  for (const auto& lj : j.at("local_layers")) {
    SaLayerSpec l;
    l.centers = lj.at("centers").get<int>();
    l.radius = lj.at("radius").get<double>();
    l.group_size = lj.at("group_size").get<int>();
    l.mlp_widths = lj.at("mlp_widths").get<std::vector<int>>();
    l.csm = lj.at("csm").get<bool>();
    l.rum = lj.at("rum").get<bool>();
    spec.local_layers.push_back(l);
  }
  spec.global_widths = j.at("global_widths").get<std::vector<int>>();
  spec.head_widths = j.at("head_widths").get<std::vector<int>>();
  spec.head_dropout = j.at("head_dropout").get<double>();
  spec.attention_hidden = j.at("attention_hidden").get<int>();
  spec.global_hidden = j.at("global_hidden").get<int>();
  spec.rum_hidden = j.at("rum_hidden").get<int>();
  return spec;
}

} // namespace detail

template <typename S>
void save_checkpoint(const LscnetModel<S>& model, const std::string& path,
                     const std::map<std::string, std::string>& config_echo = {}) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["scalar"] = "float64";
  header["spec"] = detail::spec_to_json(model.spec);
  header["config"] = config_echo;
  header["tensors"] = nlohmann::json::array();
  for (const auto& e : model.params.entries())
    header["tensors"].push_back(
        {{"name", e.name}, {"rows", e.value.rows()}, {"cols", e.value.cols()}});

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  const std::string json_text = header.dump();
  out.write("PCLS", 4);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t len = json_text.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(json_text.data(), static_cast<std::streamsize>(json_text.size()));
  for (const auto& e : model.params.entries()) {
    // row-major float64 payload regardless of the in-memory scalar
    for (Eigen::Index r = 0; r < e.value.rows(); ++r)
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) {
        const double v = static_cast<double>(e.value(r, c));
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
  }
  if (!out) throw DataError("I/O failure writing checkpoint: " + path);
}

template <typename S>
LscnetModel<S> load_checkpoint(const std::string& path,
                               std::map<std::string, std::string>* config_echo = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "PCLS") throw DataError("bad checkpoint magic");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw DataError("unsupported checkpoint version");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string json_text(len, '\0');
  in.read(json_text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header");
  nlohmann::json header = nlohmann::json::parse(json_text);

  LscnetModel<S> model = make_lscnet<S>(detail::spec_from_json(header.at("spec")), 0);
  if (config_echo != nullptr)
    *config_echo = header.at("config").get<std::map<std::string, std::string>>();

  const auto& tensors = header.at("tensors");
  if (tensors.size() != model.params.entries().size())
    throw DataError("checkpoint tensor manifest does not match the architecture");
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& e = model.params.entries()[t];
    if (tensors[t].at("name").get<std::string>() != e.name ||
        tensors[t].at("rows").get<Eigen::Index>() != e.value.rows() ||
        tensors[t].at("cols").get<Eigen::Index>() != e.value.cols())
      throw DataError("checkpoint tensor mismatch at " + e.name);
    for (Eigen::Index r = 0; r < e.value.rows(); ++r)
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) {
        double v;
        in.read(reinterpret_cast<char*>(&v), 8);
        e.value(r, c) = static_cast<S>(v);
      }
  }
  if (!in) throw DataError("truncated checkpoint payload");
  return model;
}

} // namespace plantcloud

#endif // PLANTCLOUD_LSCNET_CHECKPOINT_HPP
