#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "copp/io/text.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args) {
  const auto out = fs::temp_directory_path() / "copp_test_cli_stdout.txt";
  const std::string cmd = std::string(COPP_CLI_PATH) + " " + args + " > " + out.string() + " 2>/dev/null";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = copp::io::read_file(out.string());
  return r;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run("").status == 1);
  CHECK(run("frobnicate").status == 1);
  CHECK(run("gen-data").status == 1);
  CHECK(run("gen-data --out /tmp/x --bogus").status == 1);
  CHECK(run("--help").status == 0);
}

TEST_CASE("data and configuration errors exit with 2") {
  CHECK(run("gen-data --out /tmp/copp_cli_never --set no.such.key=1").status == 2);
  const auto dir = fs::temp_directory_path() / "copp_test_cli";
  fs::create_directories(dir);
  copp::io::write_file((dir / "bad.ply").string(), "ply\nformat ascii 1.0\nelement vertex 3\nend_header\n");
  copp::io::write_file((dir / "s1.ckpt").string(), "not a checkpoint");
  CHECK(run("predict --cloud " + (dir / "bad.ply").string() + " --stage1 " + (dir / "s1.ckpt").string()).status == 2);
  fs::remove_all(dir);
}

TEST_CASE("gen-data honors config, overrides and --json") {
  const auto dir = fs::temp_directory_path() / "copp_test_cli_gen";
  fs::remove_all(dir);
  fs::create_directories(dir);
  copp::io::write_file((dir / "tiny.conf").string(), "data.contents = 5\ndata.levels = 1\n");
  const auto r = run("gen-data --config " + (dir / "tiny.conf").string() +
                     " --set data.points=256 --seed 3 --json --out " + (dir / "data").string());
  REQUIRE(r.status == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["files"] == 15);
  CHECK(j["test"] == 3);
  CHECK(fs::exists(dir / "data" / "manifest.csv"));
  fs::remove_all(dir);
}

TEST_CASE("oracle-check runs a small suite") {
  const auto r = run("oracle-check --instances 20 --json");
  CHECK(r.status == 0);
  CHECK(nlohmann::json::parse(r.out)["pass"] == true);
}
