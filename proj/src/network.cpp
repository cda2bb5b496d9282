#include "gridqcd/network.hpp"

#include "gridqcd/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace gridqcd {

namespace {

std::string bus_str(int id) { return "bus " + std::to_string(id); }

}  // namespace

std::size_t NetworkCase::bus_index(int bus_id) const {
    auto it = std::find(buses.begin(), buses.end(), bus_id);
    if (it == buses.end()) throw InputError("unknown " + bus_str(bus_id));
    return static_cast<std::size_t>(it - buses.begin());
}

void NetworkCase::validate() const {
    if (buses.empty()) throw InputError("case has no buses");
    std::set<int> ids(buses.begin(), buses.end());
    if (ids.size() != buses.size()) throw InputError("duplicate bus identifiers");
    (void)bus_index(slack_bus);

    for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto& ln = lines[k];
        (void)bus_index(ln.from_bus);
        (void)bus_index(ln.to_bus);
        if (ln.from_bus == ln.to_bus) throw InputError("line " + std::to_string(k + 1) + " is a self-loop");
        if (!(ln.flow_limit > 0.0)) throw InputError("line " + std::to_string(k + 1) + ": flow limit must be > 0");
        if (ln.susceptance == 0.0) throw InputError("line " + std::to_string(k + 1) + ": zero susceptance");
    }
    for (std::size_t g = 0; g < generators.size(); ++g) {
        const auto& gen = generators[g];
        (void)bus_index(gen.bus);
        if (gen.p_min > gen.p_max) throw InputError("generator " + std::to_string(g + 1) + ": p_min > p_max");
        if (!(gen.cost_quadratic > 0.0))
            throw InputError("generator " + std::to_string(g + 1) + ": quadratic cost must be > 0");
    }
    std::set<int> load_buses;
    for (std::size_t d = 0; d < loads.size(); ++d) {
        const auto& ld = loads[d];
        (void)bus_index(ld.bus);
        if (ld.demand < 0.0) throw InputError("load " + std::to_string(d + 1) + ": negative mean demand");
        if (ld.perturbation_bound && *ld.perturbation_bound < 0.0)
            throw InputError("load " + std::to_string(d + 1) + ": negative perturbation bound");
        // The shed-upper block M_l^T M_l equals the identity only with one load per bus.
        if (!load_buses.insert(ld.bus).second) throw InputError("two loads share " + bus_str(ld.bus));
    }
    if (shed_quadratic.rows() != static_cast<Eigen::Index>(loads.size()) ||
        shed_quadratic.cols() != static_cast<Eigen::Index>(loads.size()))
        throw InputError("shed quadratic cost must be loads x loads");
    if (shed_linear.size() != static_cast<Eigen::Index>(loads.size()))
        throw InputError("shed linear cost must have one entry per load");
    if (!is_connected(*this)) throw StructuralError("network graph is not connected");
}

Matrix NetworkCase::generator_incidence() const {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(num_buses()), static_cast<Eigen::Index>(num_generators()));
    for (std::size_t g = 0; g < generators.size(); ++g)
        m(static_cast<Eigen::Index>(bus_index(generators[g].bus)), static_cast<Eigen::Index>(g)) = 1.0;
    return m;
}

Matrix NetworkCase::load_incidence() const {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(num_buses()), static_cast<Eigen::Index>(num_loads()));
    for (std::size_t d = 0; d < loads.size(); ++d)
        m(static_cast<Eigen::Index>(bus_index(loads[d].bus)), static_cast<Eigen::Index>(d)) = 1.0;
    return m;
}

Vector NetworkCase::mean_demand() const {
    Vector l(static_cast<Eigen::Index>(num_loads()));
    for (std::size_t d = 0; d < loads.size(); ++d) l(static_cast<Eigen::Index>(d)) = loads[d].demand;
    return l;
}

NetworkCase NetworkCase::without_lines(const std::vector<std::size_t>& removed) const {
    NetworkCase out = *this;
    out.lines.clear();
    for (std::size_t k = 0; k < lines.size(); ++k)
        if (std::find(removed.begin(), removed.end(), k) == removed.end()) out.lines.push_back(lines[k]);
    return out;
}

NetworkCase NetworkCase::without_generator(std::size_t removed) const {
    if (removed >= generators.size()) throw InputError("unknown generator " + std::to_string(removed + 1));
    NetworkCase out = *this;
    out.generators.erase(out.generators.begin() + static_cast<std::ptrdiff_t>(removed));
    return out;
}

bool is_connected(const NetworkCase& net, std::optional<std::size_t> skip_line) {
    const std::size_t n = net.num_buses();
    if (n == 0) return false;
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    std::size_t components = n;
    for (std::size_t k = 0; k < net.lines.size(); ++k) {
        if (skip_line && *skip_line == k) continue;
        auto a = find(net.bus_index(net.lines[k].from_bus));
        auto b = find(net.bus_index(net.lines[k].to_bus));
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    return components == 1;
}

Matrix compute_ptdf(const NetworkCase& net) {
    if (!is_connected(net)) throw StructuralError("cannot compute PTDF: network graph is not connected");
    const auto nb = static_cast<Eigen::Index>(net.num_buses());
    const auto nl = static_cast<Eigen::Index>(net.num_lines());
    const auto slack = static_cast<Eigen::Index>(net.bus_index(net.slack_bus));

    // Branch-bus incidence (+1 at from, -1 at to) and nodal susceptance matrix.
    Matrix incidence = Matrix::Zero(nl, nb);
    Vector b(nl);
    for (Eigen::Index k = 0; k < nl; ++k) {
        const auto& ln = net.lines[static_cast<std::size_t>(k)];
        incidence(k, static_cast<Eigen::Index>(net.bus_index(ln.from_bus))) = 1.0;
        incidence(k, static_cast<Eigen::Index>(net.bus_index(ln.to_bus))) = -1.0;
        b(k) = ln.susceptance;
    }
    Matrix bbus = incidence.transpose() * b.asDiagonal() * incidence;

    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < nb; ++i)
        if (i != slack) keep.push_back(i);
    const auto nr = static_cast<Eigen::Index>(keep.size());
    Matrix reduced(nr, nr);
    for (Eigen::Index i = 0; i < nr; ++i)
        for (Eigen::Index j = 0; j < nr; ++j) reduced(i, j) = bbus(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);

    Matrix ptdf = Matrix::Zero(nl, nb);
    if (nr == 0) return ptdf;
    Eigen::FullPivLU<Matrix> lu(reduced);
    if (!lu.isInvertible()) throw NumericError("reduced susceptance matrix is singular");
    Matrix theta = lu.inverse();  // angles (p.u.) per unit injection at each non-slack bus

    Matrix angle_full = Matrix::Zero(nb, nr);
    for (Eigen::Index i = 0; i < nr; ++i) angle_full.row(keep[static_cast<std::size_t>(i)]) = theta.row(i);
    Matrix reduced_ptdf = b.asDiagonal() * incidence * angle_full;  // nl x nr
    for (Eigen::Index j = 0; j < nr; ++j) ptdf.col(keep[static_cast<std::size_t>(j)]) = reduced_ptdf.col(j);
    return ptdf;
}

NetworkCase case_from_json(const nlohmann::json& doc) {
    NetworkCase net;
    try {
        net.name = doc.value("name", std::string{"unnamed"});
        net.buses = doc.at("buses").get<std::vector<int>>();
        net.slack_bus = doc.at("slack_bus").get<int>();
        for (const auto& j : doc.at("lines")) {
            Line ln;
            ln.from_bus = j.at("from").get<int>();
            ln.to_bus = j.at("to").get<int>();
            if (j.contains("susceptance"))
                ln.susceptance = j.at("susceptance").get<double>();
            else
                ln.susceptance = 1.0 / j.at("reactance").get<double>();
            ln.flow_limit = j.at("limit").get<double>();
            net.lines.push_back(ln);
        }
        for (const auto& j : doc.at("generators")) {
            Generator g;
            g.bus = j.at("bus").get<int>();
            g.p_min = j.value("p_min", 0.0);
            g.p_max = j.at("p_max").get<double>();
            g.cost_quadratic = j.at("cost_quadratic").get<double>();
            g.cost_linear = j.at("cost_linear").get<double>();
            net.generators.push_back(g);
        }
        for (const auto& j : doc.at("loads")) {
            Load d;
            d.bus = j.at("bus").get<int>();
            d.demand = j.at("demand").get<double>();
            if (j.contains("perturbation_bound")) d.perturbation_bound = j.at("perturbation_bound").get<double>();
            net.loads.push_back(d);
        }
        const auto nd = static_cast<Eigen::Index>(net.loads.size());
        const auto& shed = doc.at("shed_cost");
        const auto& sl = shed.at("linear");
        if (sl.is_number()) {
            net.shed_linear = Vector::Constant(nd, sl.get<double>());
        } else {
            auto v = sl.get<std::vector<double>>();
            net.shed_linear = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
        // Scalar quadratic means S = scalar * I; an array of arrays gives the full matrix.
        const auto& sq = shed.at("quadratic");
        if (sq.is_number()) {
            net.shed_quadratic = sq.get<double>() * Matrix::Identity(nd, nd);
        } else {
            net.shed_quadratic = Matrix::Zero(nd, nd);
            for (Eigen::Index i = 0; i < nd; ++i)
                for (Eigen::Index k = 0; k < nd; ++k)
                    net.shed_quadratic(i, k) = sq.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed case file: ") + e.what());
    }
    net.validate();
    return net;
}

nlohmann::json case_to_json(const NetworkCase& net) {
    nlohmann::json doc;
    doc["name"] = net.name;
    doc["buses"] = net.buses;
    doc["slack_bus"] = net.slack_bus;
    doc["lines"] = nlohmann::json::array();
    for (const auto& ln : net.lines)
        doc["lines"].push_back({{"from", ln.from_bus}, {"to", ln.to_bus}, {"susceptance", ln.susceptance}, {"limit", ln.flow_limit}});
    doc["generators"] = nlohmann::json::array();
    for (const auto& g : net.generators)
        doc["generators"].push_back({{"bus", g.bus},
                                     {"p_min", g.p_min},
                                     {"p_max", g.p_max},
                                     {"cost_quadratic", g.cost_quadratic},
                                     {"cost_linear", g.cost_linear}});
    doc["loads"] = nlohmann::json::array();
    for (const auto& d : net.loads) {
        nlohmann::json j = {{"bus", d.bus}, {"demand", d.demand}};
        if (d.perturbation_bound) j["perturbation_bound"] = *d.perturbation_bound;
        doc["loads"].push_back(j);
    }
    nlohmann::json quad = nlohmann::json::array();
    for (Eigen::Index i = 0; i < net.shed_quadratic.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index k = 0; k < net.shed_quadratic.cols(); ++k) row.push_back(net.shed_quadratic(i, k));
        quad.push_back(row);
    }
    doc["shed_cost"] = {{"quadratic", quad},
                        {"linear", std::vector<double>(net.shed_linear.data(), net.shed_linear.data() + net.shed_linear.size())}};
    return doc;
}

NetworkCase load_case(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open case file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("cannot parse case file " + path.string() + ": " + e.what());
    }
    auto net = case_from_json(doc);
    if (net.name == "unnamed") net.name = path.stem().string();
    return net;
}

}  // namespace gridqcd
