#pragma once

#include "gridqcd/detector.hpp"
#include "gridqcd/stream.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace gridqcd {

struct DetectorSettings {
    /// Hypothesized outages; empty means every line of the case.
    std::vector<OutageSpec> hypotheses;
    Channel channel = Channel::Lmp;
    DensityOptions density;
    double boundary_tol = 1e-6;
    bool blend_crossings = false;
    RegionOptions region;
};

struct BenchSettings {
    std::vector<double> etas{10, 20, 30, 40, 50, 60};
    int trajectories = 1000;
    int fast_trajectories = 200;
    /// Horizon of the nominal runs used for the ARL estimate.
    int t_max = 5000;
};

/// Everything a command needs: the stream scenario plus detector and bench
/// settings, all read from one scenario file.
struct RunConfig {
    ScenarioSpec scenario;
    DetectorSettings detector;
    BenchSettings bench;

    void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

enum class AtlasPolicy { BuildIfMissing, RequireCached };

struct AtlasReport {
    std::string structure_id;
    std::size_t regions = 0;
    std::size_t quarantined = 0;
    bool from_cache = false;
    std::filesystem::path path;
};

/// Hypothesized outages resolved against the case (all lines when empty).
std::vector<OutageSpec> resolve_hypotheses(const RunConfig& config, const NetworkCase& net);

/// Builds (or loads from `cache_dir`, when non-empty) the atlases of the
/// nominal structure and every hypothesis. Atlases are sampled over the
/// scenario's perturbation box.
HypothesisSet build_hypothesis_set(const RunConfig& config, const ScenarioStructures& structures,
                                   const std::filesystem::path& cache_dir, AtlasPolicy policy,
                                   std::vector<AtlasReport>* reports = nullptr);

}  // namespace gridqcd
