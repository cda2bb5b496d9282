#include "gridqcd/pipeline.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>

namespace gridqcd {

void RunConfig::validate() const {
    scenario.validate();
    if (detector.density.eps_rel < 0.0 || detector.density.eps_floor <= 0.0)
        throw InputError("regularization must satisfy eps_rel >= 0 and eps_abs > 0");
    if (detector.boundary_tol < 0.0) throw InputError("boundary tolerance must be >= 0");
    if (bench.etas.empty()) throw InputError("bench needs at least one threshold");
    for (std::size_t k = 0; k < bench.etas.size(); ++k) {
        if (!(bench.etas[k] > 0.0)) throw InputError("thresholds must be positive");
        if (k > 0 && bench.etas[k] <= bench.etas[k - 1]) throw InputError("thresholds must be strictly increasing");
    }
    if (bench.trajectories <= 0 || bench.fast_trajectories <= 0) throw InputError("trajectory counts must be positive");
    if (bench.t_max < 2) throw InputError("t_max must be at least 2");
}

RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.scenario = scenario_from_json(doc, base_dir);
    try {
        if (doc.contains("detector")) {
            const auto& d = doc.at("detector");
            for (const auto& h : d.value("hypotheses", std::vector<std::string>{})) cfg.detector.hypotheses.push_back(OutageSpec::parse(h));
            const auto channel = d.value("channel", std::string("lmp"));
            if (channel == "lmp")
                cfg.detector.channel = Channel::Lmp;
            else if (channel == "dispatch")
                cfg.detector.channel = Channel::Dispatch;
            else
                throw InputError("unknown detector channel '" + channel + "' (expected lmp or dispatch)");
            cfg.detector.density.eps_rel = d.value("eps_rel", cfg.detector.density.eps_rel);
            cfg.detector.density.eps_floor = d.value("eps_abs", cfg.detector.density.eps_floor);
            cfg.detector.density.pseudo_inverse = d.value("pseudo_inverse", false);
            cfg.detector.boundary_tol = d.value("boundary_tol", cfg.detector.boundary_tol);
            cfg.detector.blend_crossings = d.value("blend_crossings", false);
            cfg.detector.region.solver.active_tol = d.value("active_tol", cfg.detector.region.solver.active_tol);
            cfg.detector.region.region_tol = d.value("region_tol", cfg.detector.region.region_tol);
        }
        if (doc.contains("bench")) {
            const auto& b = doc.at("bench");
            cfg.bench.etas = b.value("etas", cfg.bench.etas);
            cfg.bench.trajectories = b.value("trajectories", cfg.bench.trajectories);
            cfg.bench.fast_trajectories = b.value("fast_trajectories", cfg.bench.fast_trajectories);
            cfg.bench.t_max = b.value("t_max", cfg.bench.t_max);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed run configuration: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
    auto doc = scenario_to_json(cfg.scenario);
    std::vector<std::string> hyps;
    for (const auto& h : cfg.detector.hypotheses) hyps.push_back(h.id());
    doc["detector"] = {
        {"hypotheses", hyps},
        {"channel", cfg.detector.channel == Channel::Lmp ? "lmp" : "dispatch"},
        {"eps_rel", cfg.detector.density.eps_rel},
        {"eps_abs", cfg.detector.density.eps_floor},
        {"pseudo_inverse", cfg.detector.density.pseudo_inverse},
        {"boundary_tol", cfg.detector.boundary_tol},
        {"blend_crossings", cfg.detector.blend_crossings},
        {"active_tol", cfg.detector.region.solver.active_tol},
        {"region_tol", cfg.detector.region.region_tol},
    };
    doc["bench"] = {
        {"etas", cfg.bench.etas},
        {"trajectories", cfg.bench.trajectories},
        {"fast_trajectories", cfg.bench.fast_trajectories},
        {"t_max", cfg.bench.t_max},
    };
    return doc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("cannot parse scenario file " + path.string() + ": " + e.what());
    }
    return run_config_from_json(doc, path.parent_path());
}

std::vector<OutageSpec> resolve_hypotheses(const RunConfig& config, const NetworkCase& net) {
    if (!config.detector.hypotheses.empty()) return config.detector.hypotheses;
    std::vector<OutageSpec> all;
    for (std::size_t l = 0; l < net.num_lines(); ++l) all.push_back({OutageKind::Line, l});
    return all;
}

HypothesisSet build_hypothesis_set(const RunConfig& config, const ScenarioStructures& structures,
                                   const std::filesystem::path& cache_dir, AtlasPolicy policy,
                                   std::vector<AtlasReport>* reports) {
    HypothesisSet hset;
    hset.noise = config.scenario.noise(structures.net);
    hset.noise.boundary_tol = config.detector.boundary_tol;
    hset.channel = config.detector.channel;
    hset.density = config.detector.density;
    hset.region = config.detector.region;
    hset.blend_crossings = config.detector.blend_crossings;

    std::vector<Vector> samples;
    AtlasOptions atlas_options;
    atlas_options.region = config.detector.region;

    auto obtain = [&](const MarketQP& qp) {
        AtlasReport report;
        report.structure_id = qp.structure_id;
        RegionAtlas atlas;
        const bool cached = !cache_dir.empty() && std::filesystem::exists(atlas_cache_path(cache_dir, qp));
        if (cached) {
            report.path = atlas_cache_path(cache_dir, qp);
            atlas = load_atlas(report.path, qp);
            report.from_cache = true;
        } else {
            if (policy == AtlasPolicy::RequireCached)
                throw IoError("no cached region atlas for structure '" + qp.structure_id + "' in " +
                              (cache_dir.empty() ? std::string("(no cache directory)") : cache_dir.string()) +
                              "; run `gridqcd regions` with the same case and scenario first");
            if (samples.empty()) samples = sampling_plan(hset.noise.bounds);
            atlas = build_atlas(qp, samples, atlas_options);
            if (!cache_dir.empty()) {
                report.path = atlas_cache_path(cache_dir, qp);
                save_atlas(atlas, report.path);
            }
        }
        report.regions = atlas.size();
        report.quarantined = atlas.quarantined().size();
        spdlog::info("atlas {}: {} regions ({})", report.structure_id, report.regions, report.from_cache ? "cached" : "built");
        if (reports) reports->push_back(report);
        return atlas;
    };

    hset.nominal = {"nominal", structures.nominal, obtain(structures.nominal)};
    for (const auto& spec : resolve_hypotheses(config, structures.net)) {
        auto qp = apply_outage(structures.nominal, structures.net, spec, config.scenario.market);
        auto atlas = obtain(qp);
        hset.alternatives.push_back({spec.id(), std::move(qp), std::move(atlas)});
    }
    hset.validate();
    return hset;
}

}  // namespace gridqcd
