#pragma once

#include "gridqcd/atlas.hpp"
#include "gridqcd/density.hpp"
#include "gridqcd/detector.hpp"
#include "gridqcd/market_qp.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace gridqcd {

struct ScenarioSpec {
    std::filesystem::path case_path;
    std::vector<std::size_t> perturbed_loads;  // 0-based load indices
    double sigma = 8.0;                        // MW per step
    int horizon = 1000;                        // number of stream rows
    std::optional<OutageSpec> outage;
    int change_point = 0;  // T: rows t <= T use the nominal QP, rows t > T the outage QP
    std::uint64_t seed = 1;
    /// Per-load half-width overriding both the case file and the default.
    std::optional<double> bound;
    MarketOptions market;

    void validate() const;
    /// Half-width of the box for perturbed load `load`: explicit bound, then
    /// the case file, then 4 * sigma * sqrt(horizon) / 10.
    [[nodiscard]] double half_width(const NetworkCase& net, std::size_t load) const;
    [[nodiscard]] PerturbationBox box(const NetworkCase& net) const;
    [[nodiscard]] NoiseModel noise(const NetworkCase& net) const;
    /// Stable hash of every field (stored in stream metadata).
    [[nodiscard]] std::uint64_t hash() const;
};

ScenarioSpec scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
nlohmann::json scenario_to_json(const ScenarioSpec& spec);
/// Relative case paths resolve against the scenario file's directory.
ScenarioSpec load_scenario(const std::filesystem::path& path);

struct MarketStream {
    std::vector<Vector> xi;    // MW, one entry per load
    std::vector<Vector> lmp;   // $/MWh, one entry per bus
    std::vector<double> g_total;  // MW, 1'x
    std::vector<int> region_ids;  // located region per row, -1 when unknown
    std::uint64_t scenario_hash = 0;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const { return xi.size(); }
    [[nodiscard]] std::vector<Observation> observations(Channel channel) const;
};

/// Nominal and post-outage QPs of a scenario.
struct ScenarioStructures {
    NetworkCase net;
    MarketQP nominal;
    std::optional<MarketQP> outage;
};

ScenarioStructures scenario_structures(const ScenarioSpec& spec);

/// Seeded random-walk demand, clipped to the box, with one market clearing
/// per row. When atlases are supplied, each row's region is located in the
/// atlas of the structure that generated it.
MarketStream simulate(const ScenarioSpec& spec, const ScenarioStructures& structures,
                      RegionAtlas* nominal_atlas = nullptr, RegionAtlas* outage_atlas = nullptr,
                      const SolverOptions& solver = {});
MarketStream simulate(const ScenarioSpec& spec);

/// Only the seeded perturbation path (no market clearing).
std::vector<Vector> perturbation_path(const ScenarioSpec& spec, const NetworkCase& net);

/// CSV columns: t, xi_1..xi_k, lmp_1..lmp_n, g_total.
void write_stream_csv(std::ostream& out, const MarketStream& stream);
void save_stream(const MarketStream& stream, const std::filesystem::path& path);

/// Reads a stream CSV. Columns are matched by name; g_total is optional.
/// When `net` is given, the xi and lmp column counts must match it.
MarketStream read_stream_csv(std::istream& in, const NetworkCase* net = nullptr);
MarketStream replay(const std::filesystem::path& path, const NetworkCase* net = nullptr);

}  // namespace gridqcd
