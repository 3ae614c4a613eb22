#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "copp/errors.hpp"
#include "copp/io/manifest.hpp"
#include "copp/io/ply.hpp"
#include "copp/io/text.hpp"
#include "copp/rng.hpp"

using namespace copp;
using namespace copp::io;

namespace {

const char* kHeader =
    "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\n"
    "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";

std::string with_body(const std::string& count, const std::string& body) {
  std::string h = kHeader;
  h.replace(h.find("vertex 1"), 8, "vertex " + count);
  return h + body;
}

std::size_t parse_error_line(const std::string& text) {
  try {
    parse_ply(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("minimal ply file") {
  const auto c = parse_ply(with_body("1", "0 0 0 255 0 0\n"));
  REQUIRE(c.size() == 1);
  CHECK(c.points[0] == Point{0, 0, 0, 255, 0, 0});
}

TEST_CASE("ply writer canonical form") {
  PointCloud c;
  c.points.push_back({1, 2, 3, 0, 0, 0});
  CHECK(write_ply(c) == std::string(kHeader) + "1.000000 2.000000 3.000000 0 0 0\n");
}

TEST_CASE("ply parse errors carry line numbers") {
  CHECK(parse_error_line(with_body("2", "0 0 0 1 2 3\n")) == 12);
  CHECK(parse_error_line(with_body("1", "0 0 x 1 2 3\n")) == 11);
  CHECK(parse_error_line(with_body("1", "0 0 0 1 2 256\n")) == 11);
  CHECK(parse_error_line(with_body("1", "0 0 0 1 2\n")) == 11);
  CHECK(parse_error_line("format ascii 1.0\n") == 1);
  CHECK_THROWS_AS(parse_ply("ply\nformat binary_little_endian 1.0\n"), ParseError);
}

TEST_CASE("ply accepts comments and CRLF") {
  std::string text = with_body("1", "1.5 -2 3 4 5 6\r\n");
  text.insert(text.find("element"), "comment made by hand\r\n");
  const auto c = parse_ply(text);
  CHECK(c.points[0] == Point{1.5, -2, 3, 4, 5, 6});
}

TEST_CASE("ply round trip of canonical values") {
  Rng rng(7);
  PointCloud c;
  for (int i = 0; i < 200; ++i) {
    const auto coord = [&] { return static_cast<double>(static_cast<long long>(rng.below(2000001)) - 1000000) / 1e6 * 500; };
    c.points.push_back({coord(), coord(), coord(), static_cast<int>(rng.below(256)),
                        static_cast<int>(rng.below(256)), static_cast<int>(rng.below(256))});
  }
  const auto text = write_ply(c);
  const auto back = parse_ply(text);
  CHECK(write_ply(back) == text);
}

TEST_CASE("ply file helpers") {
  const auto dir = std::filesystem::temp_directory_path() / "copp_test_io";
  std::filesystem::create_directories(dir);
  PointCloud c;
  c.points.push_back({0.25, 0.5, -1, 10, 20, 30});
  write_ply_file(dir / "one.ply", c);
  const auto back = read_ply_file(dir / "one.ply");
  CHECK(back.points == c.points);
  CHECK(back.name == "one");
  CHECK_THROWS_AS(read_ply_file(dir / "missing.ply"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest examples") {
  CHECK(parse_manifest("file,mos,split\n").entries.empty());
  const auto m = parse_manifest("file,mos,split\na.ply,55.5,train\n");
  REQUIRE(m.entries.size() == 1);
  CHECK(m.entries[0].file == "a.ply");
  CHECK(m.entries[0].mos == 55.5);
  CHECK(m.entries[0].split == Split::train);
  try {
    parse_manifest("file,mos,split\na.ply,1,train\na.ply,2,test\n");
    FAIL("expected ManifestError");
  } catch (const ManifestError& e) {
    CHECK(e.row() == 3);
  }
}

TEST_CASE("manifest errors") {
  CHECK_THROWS_AS(parse_manifest("file,mos,split\na.ply,abc,train\n"), ManifestError);
  CHECK_THROWS_AS(parse_manifest("file,mos,split\na.ply,1,val\n"), ManifestError);
  CHECK_THROWS_AS(parse_manifest("file,mos,split\na.ply,101,train\n"), ManifestError);
  CHECK_THROWS_AS(parse_manifest("name,score\n"), ManifestError);
  CHECK_THROWS_AS(parse_manifest("file,mos,split\na.ply,1\n"), ManifestError);
}

TEST_CASE("manifest round trip and selection") {
  DatasetManifest m;
  m.entries.push_back({"x/a.ply", "base/x/a.ply", 12.25, Split::train});
  m.entries.push_back({"b.ply", "base/b.ply", 0.1 + 0.2, Split::test});
  const auto back = parse_manifest(write_manifest(m), "base");
  CHECK(back == m);
  CHECK(back.select(Split::test).size() == 1);
}

TEST_CASE("text helpers") {
  CHECK(split_lines("a\r\nb\n").size() == 2);
  CHECK(split_lines("a\n\nb").size() == 3);
  CHECK(split_whitespace("  1 \t 2  ").size() == 2);
  CHECK(trim("  x ") == "x");
  CHECK(parse_double("1e-3") == 1e-3);
  CHECK_FALSE(parse_double("1.0x"));
  CHECK_FALSE(parse_int("4.5"));
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -123456.789, 5e-324}) CHECK(*parse_double(format_double(v)) == v);
}
