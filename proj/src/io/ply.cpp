#include "copp/io/ply.hpp"

#include <array>
#include <cmath>
#include <cstdio>

#include "copp/errors.hpp"
#include "copp/io/text.hpp"

namespace copp::io {

namespace {

constexpr std::array<std::string_view, 6> kPropertyNames = {"x", "y", "z", "red", "green", "blue"};

bool is_coord_type(std::string_view t) { return t == "float" || t == "float32" || t == "double" || t == "float64"; }
bool is_color_type(std::string_view t) { return t == "uchar" || t == "uint8"; }

}  // namespace

PointCloud parse_ply(std::string_view text, std::string name) {
  const auto lines = split_lines(text);
  std::size_t ln = 0;  // index of the next line to read
  auto next = [&](const char* expecting) -> std::string_view {
    if (ln >= lines.size()) throw ParseError(ln + 1, std::string("unexpected end of file, expected ") + expecting);
    return lines[ln++];
  };

  if (trim(next("'ply'")) != "ply") throw ParseError(ln, "missing 'ply' magic line");
  if (split_whitespace(next("format line")) != std::vector<std::string_view>{"format", "ascii", "1.0"}) {
    throw ParseError(ln, "expected 'format ascii 1.0'");
  }

  std::string_view line = next("element line");
  while (line.starts_with("comment")) line = next("element line");
  const auto elem = split_whitespace(line);
  if (elem.size() != 3 || elem[0] != "element" || elem[1] != "vertex") {
    throw ParseError(ln, "expected 'element vertex N'");
  }
  const auto count = parse_int(elem[2]);
  if (!count || *count < 1) throw ParseError(ln, "vertex count must be a positive integer");

  for (std::size_t p = 0; p < kPropertyNames.size(); ++p) {
    line = next("property line");
    while (line.starts_with("comment")) line = next("property line");
    const auto tok = split_whitespace(line);
    const bool type_ok = tok.size() == 3 && (p < 3 ? is_coord_type(tok[1]) : is_color_type(tok[1]));
    if (tok.empty() || tok[0] != "property" || !type_ok || tok[2] != kPropertyNames[p]) {
      throw ParseError(ln, "expected property " + std::string(kPropertyNames[p]) +
                               (p < 3 ? " of type float" : " of type uchar"));
    }
  }
  line = next("end_header");
  while (line.starts_with("comment")) line = next("end_header");
  if (trim(line) != "end_header") throw ParseError(ln, "expected 'end_header'");

  PointCloud cloud;
  cloud.name = std::move(name);
  cloud.points.reserve(static_cast<std::size_t>(*count));
  for (long long i = 0; i < *count; ++i) {
    if (ln >= lines.size() || trim(lines[ln]).empty()) {
      throw ParseError(ln + 1, "header declares " + std::to_string(*count) + " vertices but data has " +
                                   std::to_string(i));
    }
    const auto tok = split_whitespace(lines[ln++]);
    if (tok.size() != 6) throw ParseError(ln, "expected 6 tokens, found " + std::to_string(tok.size()));
    Point pt;
    double* coords[3] = {&pt.x, &pt.y, &pt.z};
    for (std::size_t c = 0; c < 3; ++c) {
      const auto v = parse_double(tok[c]);
      if (!v) throw ParseError(ln, "non-numeric coordinate '" + std::string(tok[c]) + "'");
      *coords[c] = *v;
    }
    int* colors[3] = {&pt.r, &pt.g, &pt.b};
    for (std::size_t c = 0; c < 3; ++c) {
      const auto v = parse_int(tok[3 + c]);
      if (!v) throw ParseError(ln, "non-integer color '" + std::string(tok[3 + c]) + "'");
      if (*v < 0 || *v > 255) throw ParseError(ln, "color " + std::to_string(*v) + " outside 0-255");
      *colors[c] = static_cast<int>(*v);
    }
    cloud.points.push_back(pt);
  }
  for (; ln < lines.size(); ++ln) {
    if (!trim(lines[ln]).empty()) {
      throw ParseError(ln + 1, "data beyond the declared " + std::to_string(*count) + " vertices");
    }
  }
  return cloud;
}

std::string write_ply(const PointCloud& cloud) {
  std::string out;
  out.reserve(200 + cloud.size() * 48);
  out += "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) + "\n";
  out +=
      "property float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  char buf[160];
  for (const auto& p : cloud.points) {
    const int n = std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %d %d %d\n", p.x, p.y, p.z, p.r, p.g, p.b);
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

PointCloud read_ply_file(const std::filesystem::path& path) {
  const auto text = read_file(path.string());
  try {
    return parse_ply(text, path.stem().string());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

void write_ply_file(const std::filesystem::path& path, const PointCloud& cloud) {
  write_file(path.string(), write_ply(cloud));
}

}  // namespace copp::io
