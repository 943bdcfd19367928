// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Annotated PLY reader/writer.
//
// Vertex schema (all but x,y,z optional):
//   float x, y, z            position
//   uchar red, green, blue   color
//   int   confidence         number of source images seeing the point
//   uchar semantic           0 = stem, 1 = leaf, 255 = unlabeled
//   int   instance           organ instance id
//   int   superpoint         written by the superpoints stage
//
// Unknown scalar vertex properties are skipped on load. ASCII and
// binary_little_endian formats are supported; binary round-trips bit-exactly.

#ifndef PLANTCLOUD_CORE_PLY_IO_HPP
#define PLANTCLOUD_CORE_PLY_IO_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/core/types.hpp"

namespace plantcloud {

namespace ply {

enum class ScalarType { Char, UChar, Short, UShort, Int, UInt, Float, Double };

inline std::size_t scalar_size(ScalarType t) {
  switch (t) {
    case ScalarType::Char:
    case ScalarType::UChar: return 1;
    case ScalarType::Short:
    case ScalarType::UShort: return 2;
    case ScalarType::Int:
    case ScalarType::UInt:
    case ScalarType::Float: return 4;
    case ScalarType::Double: return 8;
  }
  return 0;
}

inline ScalarType parse_scalar_type(const std::string& s) {
  if (s == "char" || s == "int8") return ScalarType::Char;
  if (s == "uchar" || s == "uint8") return ScalarType::UChar;
  if (s == "short" || s == "int16") return ScalarType::Short;
  if (s == "ushort" || s == "uint16") return ScalarType::UShort;
  if (s == "int" || s == "int32") return ScalarType::Int;
  if (s == "uint" || s == "uint32") return ScalarType::UInt;
  if (s == "float" || s == "float32") return ScalarType::Float;
  if (s == "double" || s == "float64") return ScalarType::Double;
  throw DataError("unsupported PLY property type: " + s);
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::Float;
};

struct Header {
  bool binary = false;
  std::size_t vertex_count = 0;
  std::vector<Property> vertex_props;
  std::vector<std::string> comments;
};

inline Header read_header(std::istream& in) {
  Header h;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty PLY file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ply") throw DataError("missing 'ply' magic");

  bool have_format = false;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::size_t trailing_elements = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "end_header") {
      if (!have_format) throw DataError("PLY header missing format line");
      if (!seen_vertex) throw DataError("PLY header missing vertex element");
      if (trailing_elements > 0)
        throw DataError("PLY contains non-empty elements besides vertices (meshes unsupported)");
      return h;
    }
    if (tok == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii") h.binary = false;
      else if (fmt == "binary_little_endian") h.binary = true;
      else throw DataError("unsupported PLY format: " + fmt);
      have_format = true;
    } else if (tok == "comment") {
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
      h.comments.push_back(rest);
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        h.vertex_count = count;
        in_vertex = true;
        seen_vertex = true;
      } else {
        in_vertex = false;
        if (count > 0) trailing_elements += count;
      }
    } else if (tok == "property") {
      if (!in_vertex) continue;
      std::string type;
      ls >> type;
      if (type == "list") throw DataError("list properties unsupported on vertices");
      Property p;
      p.type = parse_scalar_type(type);
      ls >> p.name;
      h.vertex_props.push_back(p);
    } else if (tok.empty()) {
      continue;
    } else if (tok == "obj_info") {
      continue;
    } else {
      throw DataError("unrecognized PLY header line: " + line);
    }
  }
  throw DataError("unterminated PLY header");
}

inline double read_binary_scalar(std::istream& in, ScalarType t) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(scalar_size(t)));
  if (!in) throw DataError("truncated PLY payload");
  switch (t) {
    case ScalarType::Char: { std::int8_t v; std::memcpy(&v, buf, 1); return v; }
    case ScalarType::UChar: { std::uint8_t v; std::memcpy(&v, buf, 1); return v; }
    case ScalarType::Short: { std::int16_t v; std::memcpy(&v, buf, 2); return v; }
    case ScalarType::UShort: { std::uint16_t v; std::memcpy(&v, buf, 2); return v; }
    case ScalarType::Int: { std::int32_t v; std::memcpy(&v, buf, 4); return v; }
    case ScalarType::UInt: { std::uint32_t v; std::memcpy(&v, buf, 4); return v; }
    case ScalarType::Float: { float v; std::memcpy(&v, buf, 4); return v; }
    case ScalarType::Double: { double v; std::memcpy(&v, buf, 8); return v; }
  }
  return 0.0;
}

inline void write_binary_scalar(std::ostream& out, ScalarType t, double value) {
  unsigned char buf[8];
  switch (t) {
    case ScalarType::Char: { auto v = static_cast<std::int8_t>(value); std::memcpy(buf, &v, 1); break; }
    case ScalarType::UChar: { auto v = static_cast<std::uint8_t>(value); std::memcpy(buf, &v, 1); break; }
    case ScalarType::Short: { auto v = static_cast<std::int16_t>(value); std::memcpy(buf, &v, 2); break; }
    case ScalarType::UShort: { auto v = static_cast<std::uint16_t>(value); std::memcpy(buf, &v, 2); break; }
    case ScalarType::Int: { auto v = static_cast<std::int32_t>(value); std::memcpy(buf, &v, 4); break; }
    case ScalarType::UInt: { auto v = static_cast<std::uint32_t>(value); std::memcpy(buf, &v, 4); break; }
    case ScalarType::Float: { auto v = static_cast<float>(value); std::memcpy(buf, &v, 4); break; }
    case ScalarType::Double: { std::memcpy(buf, &value, 8); break; }
  }
  out.write(reinterpret_cast<const char*>(buf), static_cast<std::streamsize>(scalar_size(t)));
}

} // namespace ply

/// A cloud plus any extra integer columns (e.g. superpoint ids) and the
/// comments found in / destined for the header.
struct PlyContents {
  PointCloud cloud;
  std::map<std::string, std::vector<std::int32_t>> extra_int_columns;
  std::vector<std::string> comments;
};

inline PlyContents load_ply_contents(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open PLY file: " + path);
  const ply::Header header = ply::read_header(in);

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  int iconf = -1, isem = -1, iinst = -1;
  std::map<std::string, int> extras;
  for (std::size_t k = 0; k < header.vertex_props.size(); ++k) {
    const std::string& n = header.vertex_props[k].name;
    const int ki = static_cast<int>(k);
    if (n == "x") ix = ki;
    else if (n == "y") iy = ki;
    else if (n == "z") iz = ki;
    else if (n == "red") ir = ki;
    else if (n == "green") ig = ki;
    else if (n == "blue") ib = ki;
    else if (n == "confidence") iconf = ki;
    else if (n == "semantic") isem = ki;
    else if (n == "instance") iinst = ki;
    else extras[n] = ki;
  }
  if (ix < 0 || iy < 0 || iz < 0)
    throw DataError("PLY vertex element lacks x/y/z properties");
  const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;
  if ((ir >= 0 || ig >= 0 || ib >= 0) && !has_color)
    throw DataError("PLY color properties incomplete (need red, green, blue)");

  PlyContents out;
  out.comments = header.comments;
  PointCloud& c = out.cloud;
  const std::size_t n = header.vertex_count;
  c.positions.resize(n);
  c.semantic.assign(n, Semantic::Unlabeled);
  if (has_color) c.colors.resize(n);
  if (iconf >= 0) c.confidence.resize(n);
  if (iinst >= 0) c.instance.resize(n);
  for (auto& [name, col] : extras) out.extra_int_columns[name].resize(n);

  const std::size_t nprops = header.vertex_props.size();
  std::vector<double> row(nprops);
  for (std::size_t i = 0; i < n; ++i) {
    if (header.binary) {
      for (std::size_t k = 0; k < nprops; ++k)
        row[k] = ply::read_binary_scalar(in, header.vertex_props[k].type);
    } else {
      for (std::size_t k = 0; k < nprops; ++k) {
        if (!(in >> row[k])) throw DataError("truncated PLY payload");
      }
    }
    c.positions[i] = Vec3{row[ix], row[iy], row[iz]};
    if (has_color)
      c.colors[i] = Color{static_cast<std::uint8_t>(row[ir]),
                          static_cast<std::uint8_t>(row[ig]),
                          static_cast<std::uint8_t>(row[ib])};
    if (iconf >= 0) {
      const double v = row[iconf];
      if (v < 0) throw DataError("negative confidence in PLY");
      c.confidence[i] = static_cast<std::int32_t>(v);
    }
    if (isem >= 0) c.semantic[i] = semantic_from_code(static_cast<unsigned>(row[isem]));
    if (iinst >= 0) c.instance[i] = static_cast<std::int32_t>(row[iinst]);
    for (auto& [name, k] : extras)
      out.extra_int_columns[name][i] = static_cast<std::int32_t>(row[k]);
  }
  c.validate();
  return out;
}

inline PointCloud load_ply(const std::string& path) {
  return load_ply_contents(path).cloud;
}

struct PlyWriteOptions {
  bool binary = true;
  std::vector<std::string> comments;
};

inline void save_ply(const PointCloud& cloud, const std::string& path,
                     const PlyWriteOptions& options = {},
                     const std::map<std::string, std::vector<std::int32_t>>& extra_int_columns = {}) {
  cloud.validate();
  for (const auto& [name, col] : extra_int_columns)
    if (col.size() != cloud.size())
      throw DataError("extra PLY column '" + name + "' length mismatch");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write PLY file: " + path);

  out << "ply\n";
  out << (options.binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  for (const std::string& cmt : options.comments) out << "comment " << cmt << "\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors())
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.has_confidence()) out << "property int confidence\n";
  out << "property uchar semantic\n";
  if (cloud.has_instance()) out << "property int instance\n";
  for (const auto& [name, col] : extra_int_columns)
    out << "property int " << name << "\n";
  out << "end_header\n";

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (options.binary) {
      using ply::ScalarType;
      ply::write_binary_scalar(out, ScalarType::Float, cloud.positions[i].x);
      ply::write_binary_scalar(out, ScalarType::Float, cloud.positions[i].y);
      ply::write_binary_scalar(out, ScalarType::Float, cloud.positions[i].z);
      if (cloud.has_colors()) {
        ply::write_binary_scalar(out, ScalarType::UChar, cloud.colors[i][0]);
        ply::write_binary_scalar(out, ScalarType::UChar, cloud.colors[i][1]);
        ply::write_binary_scalar(out, ScalarType::UChar, cloud.colors[i][2]);
      }
      if (cloud.has_confidence())
        ply::write_binary_scalar(out, ScalarType::Int, cloud.confidence[i]);
      ply::write_binary_scalar(out, ScalarType::UChar,
                               static_cast<double>(static_cast<std::uint8_t>(cloud.semantic[i])));
      if (cloud.has_instance())
        ply::write_binary_scalar(out, ScalarType::Int, cloud.instance[i]);
      for (const auto& [name, col] : extra_int_columns)
        ply::write_binary_scalar(out, ScalarType::Int, col[i]);
    } else {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g",
                    static_cast<double>(static_cast<float>(cloud.positions[i].x)),
                    static_cast<double>(static_cast<float>(cloud.positions[i].y)),
                    static_cast<double>(static_cast<float>(cloud.positions[i].z)));
      out << buf;
      if (cloud.has_colors())
        out << ' ' << int(cloud.colors[i][0]) << ' ' << int(cloud.colors[i][1]) << ' '
            << int(cloud.colors[i][2]);
      if (cloud.has_confidence()) out << ' ' << cloud.confidence[i];
      out << ' ' << int(static_cast<std::uint8_t>(cloud.semantic[i]));
      if (cloud.has_instance()) out << ' ' << cloud.instance[i];
      for (const auto& [name, col] : extra_int_columns) out << ' ' << col[i];
      out << '\n';
    }
  }
  if (!out) throw DataError("I/O failure writing PLY file: " + path);
}

} // namespace plantcloud

#endif // PLANTCLOUD_CORE_PLY_IO_HPP
