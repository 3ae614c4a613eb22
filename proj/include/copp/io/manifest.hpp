#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace copp::io {

enum class Split { train, test };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view s);

struct ManifestEntry {
  std::string file;             // as written in the manifest
  std::filesystem::path path;   // resolved against the manifest directory
  double mos = 0.0;
  Split split = Split::train;

  bool operator==(const ManifestEntry&) const = default;
};

struct MosScale {
  double min = 0.0;
  double max = 100.0;
};

/// CSV with header "file,mos,split"; LF line endings.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> select(Split s) const;
  bool operator==(const DatasetManifest&) const = default;
};

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {},
                               MosScale scale = {});
DatasetManifest load_manifest(const std::filesystem::path& path, MosScale scale = {});
std::string write_manifest(const DatasetManifest& manifest);

}  // namespace copp::io
