#pragma once

// ASCII PLY subset:
//
//   ply
//   format ascii 1.0
//   comment ...                (optional, any number)
//   element vertex N
//   property float x
//   property float y
//   property float z
//   property uchar red
//   property uchar green
//   property uchar blue
//   end_header
//   N lines of "x y z r g b"
//
// The writer emits exactly this header without comments and prints
// coordinates with six fractional digits; that output is the canonical form.

#include <filesystem>
#include <string>
#include <string_view>

#include "copp/io/point_cloud.hpp"

namespace copp::io {

PointCloud parse_ply(std::string_view text, std::string name = {});
std::string write_ply(const PointCloud& cloud);

PointCloud read_ply_file(const std::filesystem::path& path);
void write_ply_file(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace copp::io
