#pragma once

// Self-check suites shared by the CLI (gradcheck, oracle-check) and the
// acceptance tests.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace copp::check {

struct CheckResult {
  std::string name;
  double value = 0.0;      // worst observed error, or mismatch count
  double tolerance = 0.0;  // pass when value <= tolerance (or < for errors)
  bool pass = false;
  std::string detail;
};

inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kNetTolerance = 1e-3;

/// Central finite differences for every differentiable op and for tiny
/// composed patch and correlation networks.
std::vector<CheckResult> gradient_suite(std::uint64_t seed);

/// FPS, KNN (exhaustive and grid index), texture/structure input membership
/// and correlation labels against brute-force reimplementations.
std::vector<CheckResult> oracle_suite(std::uint64_t seed, std::size_t instances = 1000);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace copp::check
