#include "copp/io/manifest.hpp"

#include <unordered_set>

#include "copp/errors.hpp"
#include "copp/io/text.hpp"

namespace copp::io {

std::string_view split_name(Split s) { return s == Split::train ? "train" : "test"; }

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  return std::nullopt;
}

std::vector<ManifestEntry> DatasetManifest::select(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(e);
  return out;
}

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir, MosScale scale) {
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines[0]) != "file,mos,split") throw ManifestError(1, "header must be 'file,mos,split'");
  DatasetManifest m;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t row = i + 1;
    if (trim(lines[i]).empty()) continue;
    const auto cells = split_on(lines[i], ',');
    if (cells.size() != 3) throw ManifestError(row, "expected 3 columns, found " + std::to_string(cells.size()));
    ManifestEntry e;
    e.file = std::string(trim(cells[0]));
    if (e.file.empty()) throw ManifestError(row, "empty file name");
    if (!seen.insert(e.file).second) throw ManifestError(row, "duplicate file '" + e.file + "'");
    const auto mos = parse_double(trim(cells[1]));
    if (!mos) throw ManifestError(row, "unparsable mos '" + std::string(cells[1]) + "'");
    if (*mos < scale.min || *mos > scale.max) {
      throw ManifestError(row, "mos " + format_double(*mos) + " outside [" + format_double(scale.min) + ", " +
                                   format_double(scale.max) + "]");
    }
    e.mos = *mos;
    const auto split = parse_split(trim(cells[2]));
    if (!split) throw ManifestError(row, "unknown split tag '" + std::string(cells[2]) + "'");
    e.split = *split;
    const std::filesystem::path p(e.file);
    e.path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path, MosScale scale) {
  return parse_manifest(read_file(path.string()), path.parent_path(), scale);
}

std::string write_manifest(const DatasetManifest& manifest) {
  std::string out = "file,mos,split\n";
  for (const auto& e : manifest.entries) {
    out += e.file + "," + format_double(e.mos) + "," + std::string(split_name(e.split)) + "\n";
  }
  return out;
}

}  // namespace copp::io
