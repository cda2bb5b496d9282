#include "support.hpp"

#include "gridqcd/errors.hpp"
#include "gridqcd/pipeline.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <fstream>

using namespace gridqcd;
using namespace testsupport;

TEST_CASE("bundled scenario file parses into stream, detector and bench settings") {
    const auto cfg = load_run_config(data_path("scenario_pjm_line3.json"));
    CHECK(cfg.scenario.horizon == 1000);
    CHECK(cfg.scenario.change_point == 500);
    CHECK(cfg.scenario.outage->id() == "line3");
    CHECK_FALSE(cfg.scenario.market.recompute_ptdf);
    CHECK(cfg.detector.hypotheses.size() == 6);
    CHECK(cfg.detector.density.eps_floor == 0.12);
    CHECK(cfg.detector.density.eps_rel == 1e-6);
    CHECK(cfg.detector.boundary_tol == 1e-6);
    CHECK(cfg.detector.region.solver.active_tol == 1e-7);
    CHECK(cfg.detector.region.region_tol == 1e-8);
    CHECK(cfg.bench.etas == std::vector<double>{10, 20, 30, 40, 50, 60});
    CHECK(cfg.bench.trajectories == 1000);
    CHECK(cfg.bench.fast_trajectories == 200);
    CHECK(cfg.bench.t_max == 5000);
}

TEST_CASE("configuration echo is a fixed point") {
    const auto cfg = load_run_config(data_path("scenario_pjm_line3.json"));
    const auto doc = run_config_to_json(cfg);
    const auto again = run_config_from_json(doc, "/");
    CHECK(run_config_to_json(again).dump() == doc.dump());
}

TEST_CASE("invalid detector and bench settings are validation errors") {
    auto doc = run_config_to_json(load_run_config(data_path("scenario_pjm_line3.json")));
    auto bad = doc;
    bad["detector"]["channel"] = "voltage";
    CHECK_THROWS_AS(run_config_from_json(bad, "/"), InputError);
    bad = doc;
    bad["bench"]["etas"] = {10, 10, 20};
    CHECK_THROWS_AS(run_config_from_json(bad, "/"), InputError);
    bad = doc;
    bad["bench"]["trajectories"] = 0;
    CHECK_THROWS_AS(run_config_from_json(bad, "/"), InputError);
    bad = doc;
    bad["detector"]["eps_abs"] = 0.0;
    CHECK_THROWS_AS(run_config_from_json(bad, "/"), InputError);
    bad = doc;
    bad["detector"]["hypotheses"] = {"bus2"};
    CHECK_THROWS_AS(run_config_from_json(bad, "/"), InputError);
    CHECK_THROWS_AS(load_run_config("/nonexistent/scenario.json"), IoError);
}

TEST_CASE("an empty hypothesis list means every line of the case") {
    auto doc = run_config_to_json(load_run_config(data_path("scenario_pjm_line3.json")));
    doc["detector"]["hypotheses"] = nlohmann::json::array();
    const auto cfg = run_config_from_json(doc, "/");
    const auto net = load_case(cfg.scenario.case_path);
    const auto hyps = resolve_hypotheses(cfg, net);
    REQUIRE(hyps.size() == net.num_lines());
    CHECK(hyps.back().id() == "line6");
}

TEST_CASE("atlas cache: built once, then loaded; required-cache mode names the regions command") {
    const auto cfg = load_run_config(data_path("scenario_pjm_line3.json"));
    const auto structures = scenario_structures(cfg.scenario);
    const auto dir = scratch_dir("pipeline_cache");

    std::vector<AtlasReport> first, second;
    const auto a = build_hypothesis_set(cfg, structures, dir, AtlasPolicy::BuildIfMissing, &first);
    const auto b = build_hypothesis_set(cfg, structures, dir, AtlasPolicy::RequireCached, &second);
    REQUIRE(first.size() == 7);
    REQUIRE(second.size() == 7);
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK_FALSE(first[i].from_cache);
        CHECK(second[i].from_cache);
        CHECK(first[i].regions == second[i].regions);
        CHECK(std::filesystem::exists(first[i].path));
    }
    CHECK(a.ids() == b.ids());
    CHECK(a.noise.bounds.upper == b.noise.bounds.upper);
    CHECK(b.density.eps_floor == 0.12);

    const auto empty = scratch_dir("pipeline_empty");
    try {
        build_hypothesis_set(cfg, structures, empty, AtlasPolicy::RequireCached);
        FAIL("expected a missing-atlas error");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("gridqcd regions") != std::string::npos);
    }
}

TEST_CASE("a changed case invalidates the cache key") {
    const auto cfg = load_run_config(data_path("scenario_pjm_line3.json"));
    auto structures = scenario_structures(cfg.scenario);
    const auto dir = scratch_dir("pipeline_key");
    build_hypothesis_set(cfg, structures, dir, AtlasPolicy::BuildIfMissing);
    structures.net.lines[5].flow_limit = 250.0;
    structures.nominal = assemble_qp(structures.net);
    CHECK_THROWS_AS(build_hypothesis_set(cfg, structures, dir, AtlasPolicy::RequireCached), IoError);
}
