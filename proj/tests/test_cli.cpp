#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "calgate/datamodel.hpp"
#include "calgate/manifest.hpp"
#include "test_util.hpp"

#ifndef CALGATE_CLI_PATH
#error "CALGATE_CLI_PATH must point at the calgate executable"
#endif

using namespace calgate;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CALGATE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("cli pipeline and manifest rerun") {
  const auto dir = test::scratch_dir("cli");
  const auto data = (dir / "d.csv").string();
  const auto map = (dir / "ts.json").string();
  REQUIRE(run("gen-synth --streams 4 --ticks 100 --scale 3 --seed 7 --out " + data) == 0);
  CHECK(fs::exists(dir / "d.csv.manifest.json"));
  CHECK(fs::exists(dir / "d.synth.json"));

  REQUIRE(run("calibrate --method ts --val " + data + " --out " + map) == 0);
  REQUIRE(run("eval --data " + data + " --map " + map + " --out " + (dir / "r.json").string()) == 0);
  CHECK(fs::exists(dir / "r.reliability.csv"));
  REQUIRE(run("sweep --data " + data + " --map " + map + " --out " + (dir / "c.csv").string()) == 0);
  REQUIRE(run("simulate --data " + data + " --map " + map + " --tau-on 0.55 --tau-off 0.45 --trace " +
              (dir / "t.csv").string() + " --out " + (dir / "s.csv").string()) == 0);
  CHECK(read_file(dir / "s.csv").rfind("tau,coverage,precision,transitions\n", 0) == 0);

  const auto report = nlohmann::json::parse(read_file(dir / "r.json"));
  CHECK(report["ece"].get<double>() < 0.2);

  SUBCASE("rerun reproduces every output byte for byte") {
    const auto before_data = read_file(data);
    const auto before_curve = read_file(dir / "c.csv");
    fs::remove(data);
    fs::remove(dir / "c.csv");
    CHECK(run("rerun " + (dir / "d.csv.manifest.json").string()) == 0);
    CHECK(run("rerun " + (dir / "c.csv.manifest.json").string()) == 0);
    CHECK(read_file(data) == before_data);
    CHECK(read_file(dir / "c.csv") == before_curve);
    const auto m = load_manifest(dir / "c.csv.manifest.json");
    CHECK(m.command == "sweep");
  }
}

TEST_CASE("cli exit codes") {
  const auto dir = test::scratch_dir("cli_err");
  CHECK(run("--help") == 0);
  CHECK(run("gen-synth") == 1);
  CHECK(run("gen-synth --base-accuracy 0.02 --out " + (dir / "x.csv").string()) == 1);
  CHECK(run("eval --data " + (dir / "missing.csv").string() + " --out " + (dir / "r.json").string()) == 2);
  CHECK(run("frobnicate") == 1);
  CHECK(run("calibrate --method nope --val x.csv --out y.json") != 0);
}
