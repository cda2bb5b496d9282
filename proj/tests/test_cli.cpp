#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace testsupport;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

Result run(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(GRIDQCD_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string scenario() { return "--scenario " + data_path("scenario_pjm_line3.json").string(); }

}  // namespace

TEST_CASE("simulate: same seed gives byte-identical output, different seed differs") {
    const auto dir = scratch_dir("cli_sim");
    CHECK(run("simulate " + scenario() + " --out " + (dir / "a").string(), dir / "log").code == 0);
    CHECK(run("simulate " + scenario() + " --out " + (dir / "b").string(), dir / "log").code == 0);
    CHECK(run("simulate " + scenario() + " --seed 7 --out " + (dir / "c").string(), dir / "log").code == 0);
    const auto a = slurp(dir / "a" / "stream.csv");
    CHECK(a.size() > 1000);
    CHECK(a == slurp(dir / "b" / "stream.csv"));
    CHECK(a != slurp(dir / "c" / "stream.csv"));
    const auto echo = nlohmann::json::parse(slurp(dir / "a" / "config.json"));
    CHECK(echo.contains("detector"));
    CHECK(echo.contains("bench"));
}

TEST_CASE("detect requires a cached atlas and says how to build it") {
    const auto dir = scratch_dir("cli_detect");
    const auto cache = (dir / "cache").string();
    auto r = run("detect " + scenario() + " --eta 50 --cache-dir " + cache + " --out " + (dir / "out").string(), dir / "log");
    CHECK(r.code == 4);
    CHECK(r.output.find("gridqcd regions") != std::string::npos);

    r = run("regions " + scenario() + " --cache-dir " + cache + " --out " + (dir / "reg").string(), dir / "log");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "reg" / "regions.csv"));
    CHECK(fs::exists(dir / "reg" / "polygons.csv"));
    CHECK(fs::exists(dir / "reg" / "region_counts.csv"));

    r = run("detect " + scenario() + " --eta 50 --cache-dir " + cache + " --out " + (dir / "out").string(), dir / "log");
    CHECK(r.code == 0);
    const auto outcome = nlohmann::json::parse(slurp(dir / "out" / "outcome.json"));
    CHECK(outcome.contains("alarm"));
    CHECK(fs::exists(dir / "out" / "trace.csv"));
}

TEST_CASE("invalid input exits with code 2") {
    const auto dir = scratch_dir("cli_errors");
    CHECK(run("calibrate " + scenario() + " --trajectories 0 --out " + dir.string(), dir / "log").code == 2);
    CHECK(run("simulate --bogus-flag", dir / "log").code == 2);
    CHECK(run("detect " + scenario() + " --out " + dir.string(), dir / "log").code == 2);  // no threshold

    // bench without an outage
    auto doc = nlohmann::json::parse(slurp(data_path("scenario_pjm_line3.json")));
    doc.erase("outage");
    doc["case"] = data_path("case5_pjm.json").string();
    std::ofstream(dir / "nominal.json") << doc.dump(2);
    CHECK(run("bench --scenario " + (dir / "nominal.json").string() + " --trajectories 2 --out " + dir.string(), dir / "log").code == 2);
}

TEST_CASE("missing files exit with code 4") {
    const auto dir = scratch_dir("cli_io");
    CHECK(run("simulate --scenario /nonexistent/scenario.json --out " + dir.string(), dir / "log").code == 4);
    CHECK(run("simulate " + scenario() + " --case /nonexistent/case.json --out " + dir.string(), dir / "log").code == 4);
}
