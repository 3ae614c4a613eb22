#pragma once

#include <string>
#include <vector>

namespace copp {

struct Point {
  double x = 0.0, y = 0.0, z = 0.0;
  int r = 0, g = 0, b = 0;

  bool operator==(const Point&) const = default;
};

/// N x 6 cloud: positions and 8-bit colors, in file order.
struct PointCloud {
  std::string name;
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool operator==(const PointCloud&) const = default;
};

}  // namespace copp
