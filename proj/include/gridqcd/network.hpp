#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace gridqcd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Line {
    int from_bus = 0;  // bus id
    int to_bus = 0;    // bus id
    double susceptance = 0.0;  // p.u. on a 100 MVA base
    double flow_limit = 0.0;   // MW
};

struct Generator {
    int bus = 0;
    double p_min = 0.0;           // MW
    double p_max = 0.0;           // MW
    double cost_quadratic = 0.0;  // $/MW^2 (diagonal entry of C)
    double cost_linear = 0.0;     // $/MWh
};

struct Load {
    int bus = 0;
    double demand = 0.0;  // mean demand l, MW
    /// Half-width of the perturbation box for this load, MW. Unset means the
    /// scenario decides.
    std::optional<double> perturbation_bound;
};

/// Physical and market description of a grid. Immutable once validated.
struct NetworkCase {
    std::string name;
    std::vector<int> buses;  // bus identifiers
    std::vector<Line> lines;
    std::vector<Generator> generators;
    std::vector<Load> loads;
    Matrix shed_quadratic;  // S, loads x loads
    Vector shed_linear;     // s, one per load
    int slack_bus = 0;

    /// Throws InputError / StructuralError when an invariant is violated.
    void validate() const;

    [[nodiscard]] std::size_t bus_index(int bus_id) const;
    [[nodiscard]] std::size_t num_buses() const { return buses.size(); }
    [[nodiscard]] std::size_t num_lines() const { return lines.size(); }
    [[nodiscard]] std::size_t num_generators() const { return generators.size(); }
    [[nodiscard]] std::size_t num_loads() const { return loads.size(); }

    /// Generator-to-bus incidence M_p (buses x generators).
    [[nodiscard]] Matrix generator_incidence() const;
    /// Load-to-bus incidence M_l (buses x loads).
    [[nodiscard]] Matrix load_incidence() const;
    [[nodiscard]] Vector mean_demand() const;

    /// Copy with the given line indices removed.
    [[nodiscard]] NetworkCase without_lines(const std::vector<std::size_t>& removed) const;
    /// Copy with the given generator removed.
    [[nodiscard]] NetworkCase without_generator(std::size_t removed) const;
};

/// True when the lines span every bus. `skip_line` is ignored if set.
bool is_connected(const NetworkCase& net, std::optional<std::size_t> skip_line = std::nullopt);

/// DC power transfer distribution factors, lines x buses.
///
/// Entry (k, n) is the MW flow on line k (positive from `from_bus` to
/// `to_bus`) caused by injecting 1 MW at bus n and withdrawing it at the
/// slack bus. The slack column is zero, so flows of any balanced injection
/// vector do not depend on the slack choice.
Matrix compute_ptdf(const NetworkCase& net);

NetworkCase case_from_json(const nlohmann::json& doc);
nlohmann::json case_to_json(const NetworkCase& net);
NetworkCase load_case(const std::filesystem::path& path);

}  // namespace gridqcd
