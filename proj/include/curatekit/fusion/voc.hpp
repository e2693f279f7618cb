#pragma once

// PASCAL VOC annotation files. Reading goes through Boost.PropertyTree; the
// writer is hand-rolled so output bytes depend only on the annotation.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "curatekit/fusion/box.hpp"

namespace curatekit {

struct ImageMeta {
  std::string folder;
  std::string filename;
  int width = 0;
  int height = 0;
  int depth = 3;

  friend bool operator==(const ImageMeta&, const ImageMeta&) = default;
};

struct VocAnnotation {
  ImageMeta meta;
  std::vector<Proposal> proposals;

  friend bool operator==(const VocAnnotation&, const VocAnnotation&) = default;
};

namespace detail {

inline double parse_number(const std::string& raw, const std::string& what, const std::filesystem::path& path) {
  std::string s = raw;
  s.erase(0, s.find_first_not_of(" \t\r\n"));
  s.erase(s.find_last_not_of(" \t\r\n") + 1);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ValidationError(path.string() + ": bad number '" + raw + "' for " + what);
  }
  return v;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Parses one VOC file. Objects without a confidence element score 1.0.
/// `model_id` defaults to the name of the containing directory.
inline VocAnnotation parse_voc(const std::filesystem::path& path, std::string model_id = {}) {
  namespace pt = boost::property_tree;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  pt::ptree tree;
  try {
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ValidationError(path.string() + ": malformed XML: " + e.message());
  }
  const auto root = tree.get_child_optional("annotation");
  if (!root) throw ValidationError(path.string() + ": missing <annotation> root");
  if (model_id.empty()) model_id = path.parent_path().filename().string();

  VocAnnotation a;
  a.meta.folder = root->get("folder", "");
  a.meta.filename = root->get("filename", "");
  if (const auto size = root->get_child_optional("size")) {
    a.meta.width = static_cast<int>(detail::parse_number(size->get("width", "0"), "width", path));
    a.meta.height = static_cast<int>(detail::parse_number(size->get("height", "0"), "height", path));
    a.meta.depth = static_cast<int>(detail::parse_number(size->get("depth", "3"), "depth", path));
  }
  for (const auto& [tag, obj] : *root) {
    if (tag != "object") continue;
    Proposal p;
    p.model_id = model_id;
    p.label = obj.get("name", "");
    if (p.label.empty()) throw ValidationError(path.string() + ": object without <name>");
    const auto bb = obj.get_child_optional("bndbox");
    if (!bb) throw ValidationError(path.string() + ": object '" + p.label + "' without <bndbox>");
    auto coord = [&](const char* k) {
      const auto v = bb->get_optional<std::string>(k);
      if (!v) throw ValidationError(path.string() + ": bndbox missing <" + k + ">");
      return detail::parse_number(*v, k, path);
    };
    p.box = {coord("xmin"), coord("ymin"), coord("xmax"), coord("ymax")};
    if (!p.box.valid()) throw ValidationError(path.string() + ": degenerate box for '" + p.label + "'");
    if (const auto c = obj.get_optional<std::string>("confidence")) p.score = detail::parse_number(*c, "confidence", path);
    if (!(p.score >= 0.0 && p.score <= 1.0)) throw ValidationError(path.string() + ": confidence outside [0,1]");
    a.proposals.push_back(std::move(p));
  }
  return a;
}

inline std::string to_voc_xml(const VocAnnotation& a) {
  std::ostringstream o;
  o << "<annotation>\n";
  if (!a.meta.folder.empty()) o << "  <folder>" << detail::xml_escape(a.meta.folder) << "</folder>\n";
  o << "  <filename>" << detail::xml_escape(a.meta.filename) << "</filename>\n";
  o << "  <size>\n    <width>" << a.meta.width << "</width>\n    <height>" << a.meta.height
    << "</height>\n    <depth>" << a.meta.depth << "</depth>\n  </size>\n";
  for (const auto& p : a.proposals) {
    o << "  <object>\n    <name>" << detail::xml_escape(p.label) << "</name>\n";
    o << "    <confidence>" << detail::format_number(p.score) << "</confidence>\n";
    o << "    <bndbox>\n";
    o << "      <xmin>" << detail::format_number(p.box.xmin) << "</xmin>\n";
    o << "      <ymin>" << detail::format_number(p.box.ymin) << "</ymin>\n";
    o << "      <xmax>" << detail::format_number(p.box.xmax) << "</xmax>\n";
    o << "      <ymax>" << detail::format_number(p.box.ymax) << "</ymax>\n";
    o << "    </bndbox>\n  </object>\n";
  }
  o << "</annotation>\n";
  return o.str();
}

inline void write_voc(const VocAnnotation& a, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_voc_xml(a);
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

}  // namespace curatekit
