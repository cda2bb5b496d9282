#include "gridqcd/stream.hpp"

#include "gridqcd/rng.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace gridqcd {

namespace {

using Index = Eigen::Index;

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& cell, std::size_t line_no, const std::string& column) {
    if (cell.empty()) throw InputError("stream line " + std::to_string(line_no) + ": empty value in column " + column);
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0')
        throw InputError("stream line " + std::to_string(line_no) + ": cannot parse '" + cell + "' in column " + column);
    return v;
}

}  // namespace

void ScenarioSpec::validate() const {
    if (!(sigma >= 0.0)) throw InputError("scenario sigma must be >= 0");
    if (horizon < 2) throw InputError("scenario horizon must be at least 2");
    if (perturbed_loads.empty()) throw InputError("scenario must perturb at least one load");
    if (outage && (change_point < 1 || change_point > horizon))
        throw InputError("scenario change point must satisfy 1 <= T <= horizon");
    if (bound && *bound < 0.0) throw InputError("scenario perturbation bound must be >= 0");
}

double ScenarioSpec::half_width(const NetworkCase& net, std::size_t load) const {
    if (bound) return *bound;
    if (load < net.loads.size() && net.loads[load].perturbation_bound) return *net.loads[load].perturbation_bound;
    return 4.0 * sigma * std::sqrt(static_cast<double>(horizon)) / 10.0;
}

PerturbationBox ScenarioSpec::box(const NetworkCase& net) const {
    const auto n = static_cast<Index>(net.num_loads());
    PerturbationBox b{Vector::Zero(n), Vector::Zero(n)};
    for (auto d : perturbed_loads) {
        if (d >= net.num_loads()) throw InputError("scenario perturbs unknown load " + std::to_string(d + 1));
        // A load cannot be perturbed below zero demand.
        const double w = half_width(net, d);
        b.lower(static_cast<Index>(d)) = std::max(-w, -net.loads[d].demand);
        b.upper(static_cast<Index>(d)) = w;
    }
    return b;
}

NoiseModel ScenarioSpec::noise(const NetworkCase& net) const {
    NoiseModel nm;
    const auto n = static_cast<Index>(net.num_loads());
    nm.sigma = Matrix::Zero(n, n);
    for (auto d : perturbed_loads) nm.sigma(static_cast<Index>(d), static_cast<Index>(d)) = sigma * sigma;
    nm.bounds = box(net);
    return nm;
}

std::uint64_t ScenarioSpec::hash() const {
    const std::string text = scenario_to_json(*this).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

ScenarioSpec scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    ScenarioSpec spec;
    try {
        std::filesystem::path cp = doc.at("case").get<std::string>();
        spec.case_path = cp.is_absolute() ? cp : base_dir / cp;
        for (auto d : doc.at("perturbed_loads").get<std::vector<std::size_t>>()) {
            if (d == 0) throw InputError("perturbed_loads are 1-based");
            spec.perturbed_loads.push_back(d - 1);
        }
        spec.sigma = doc.value("sigma", 8.0);
        spec.horizon = doc.value("horizon", 1000);
        spec.seed = doc.value("seed", std::uint64_t{1});
        if (doc.contains("bound") && !doc.at("bound").is_null()) spec.bound = doc.at("bound").get<double>();
        if (doc.contains("outage") && !doc.at("outage").is_null()) {
            const auto& o = doc.at("outage");
            spec.outage = OutageSpec::parse(o.at("element").get<std::string>());
            spec.change_point = o.at("change_point").get<int>();
        }
        spec.market.recompute_ptdf = doc.value("recompute_ptdf", false);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed scenario: ") + e.what());
    }
    spec.validate();
    return spec;
}

nlohmann::json scenario_to_json(const ScenarioSpec& spec) {
    nlohmann::json doc;
    doc["case"] = spec.case_path.string();
    std::vector<std::size_t> loads;
    for (auto d : spec.perturbed_loads) loads.push_back(d + 1);
    doc["perturbed_loads"] = loads;
    doc["sigma"] = spec.sigma;
    doc["horizon"] = spec.horizon;
    doc["seed"] = spec.seed;
    doc["bound"] = spec.bound ? nlohmann::json(*spec.bound) : nlohmann::json(nullptr);
    if (spec.outage)
        doc["outage"] = {{"element", spec.outage->id()}, {"change_point", spec.change_point}};
    else
        doc["outage"] = nullptr;
    doc["recompute_ptdf"] = spec.market.recompute_ptdf;
    return doc;
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("cannot parse scenario file " + path.string() + ": " + e.what());
    }
    return scenario_from_json(doc, path.parent_path());
}

std::vector<Observation> MarketStream::observations(Channel channel) const {
    std::vector<Observation> out;
    out.reserve(size());
    for (std::size_t t = 0; t < size(); ++t) {
        if (channel == Channel::Lmp) {
            out.push_back({xi[t], lmp[t]});
        } else {
            Vector g(1);
            g(0) = g_total[t];
            out.push_back({xi[t], g});
        }
    }
    return out;
}

ScenarioStructures scenario_structures(const ScenarioSpec& spec) {
    spec.validate();
    ScenarioStructures s{load_case(spec.case_path), {}, std::nullopt};
    for (auto d : spec.perturbed_loads)
        if (d >= s.net.num_loads()) throw InputError("scenario perturbs unknown load " + std::to_string(d + 1));
    s.nominal = assemble_qp(s.net);
    if (spec.outage) s.outage = apply_outage(s.nominal, s.net, *spec.outage, spec.market);
    return s;
}

std::vector<Vector> perturbation_path(const ScenarioSpec& spec, const NetworkCase& net) {
    const auto box = spec.box(net);
    Rng rng(spec.seed);
    std::vector<Vector> path;
    path.reserve(static_cast<std::size_t>(spec.horizon));
    Vector xi = box.clamp(Vector::Zero(static_cast<Index>(net.num_loads())));
    path.push_back(xi);
    for (int t = 1; t < spec.horizon; ++t) {
        for (auto d : spec.perturbed_loads) xi(static_cast<Index>(d)) += spec.sigma * rng.normal();
        xi = box.clamp(xi);
        path.push_back(xi);
    }
    return path;
}

MarketStream simulate(const ScenarioSpec& spec, const ScenarioStructures& structures, RegionAtlas* nominal_atlas,
                      RegionAtlas* outage_atlas, const SolverOptions& solver) {
    MarketStream stream;
    stream.scenario_hash = spec.hash();
    stream.seed = spec.seed;
    stream.xi = perturbation_path(spec, structures.net);
    const auto n = stream.xi.size();
    stream.lmp.reserve(n);
    stream.g_total.reserve(n);
    stream.region_ids.reserve(n);

    RegionOptions region_options;
    region_options.solver = solver;
    for (std::size_t t = 0; t < n; ++t) {
        const bool post = spec.outage && static_cast<int>(t) > spec.change_point;
        const MarketQP& qp = post ? *structures.outage : structures.nominal;
        const Vector& xi = stream.xi[t];
        try {
            const auto sol = solve(qp, xi, solver);
            stream.lmp.push_back(solution_lmp(qp, sol));
            stream.g_total.push_back(sol.x.sum());
            RegionAtlas* atlas = post ? outage_atlas : nominal_atlas;
            stream.region_ids.push_back(atlas ? locate(*atlas, qp, xi, region_options).id : -1);
        } catch (const Error& e) {
            throw NumericError("scenario failed at step " + std::to_string(t) + ": " + e.what());
        }
    }
    return stream;
}

MarketStream simulate(const ScenarioSpec& spec) { return simulate(spec, scenario_structures(spec)); }

void write_stream_csv(std::ostream& out, const MarketStream& stream) {
    const auto k = stream.xi.empty() ? 0 : stream.xi.front().size();
    const auto n = stream.lmp.empty() ? 0 : stream.lmp.front().size();
    out << "t";
    for (Index i = 0; i < k; ++i) out << ",xi_" << i + 1;
    for (Index i = 0; i < n; ++i) out << ",lmp_" << i + 1;
    out << ",g_total\n";
    out << std::setprecision(17);
    for (std::size_t t = 0; t < stream.size(); ++t) {
        out << t;
        for (Index i = 0; i < k; ++i) out << ',' << stream.xi[t](i);
        for (Index i = 0; i < n; ++i) out << ',' << stream.lmp[t](i);
        out << ',' << (t < stream.g_total.size() ? stream.g_total[t] : 0.0) << '\n';
    }
}

void save_stream(const MarketStream& stream, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write stream file " + path.string());
    write_stream_csv(out, stream);
}

MarketStream read_stream_csv(std::istream& in, const NetworkCase* net) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("stream file is empty");
    const auto header = split_csv(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    if (!col.count("t")) throw InputError("stream header is missing column 't'");

    // Numbered columns must run from 1 to the highest index present.
    auto numbered = [&](const std::string& prefix) {
        std::size_t highest = 0;
        for (const auto& name : header) {
            if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) continue;
            const auto digits = name.substr(prefix.size());
            if (digits.find_first_not_of("0123456789") != std::string::npos) continue;
            highest = std::max<std::size_t>(highest, std::stoul(digits));
        }
        std::vector<std::size_t> cols;
        for (std::size_t i = 1; i <= std::max<std::size_t>(highest, 1); ++i) {
            const auto name = prefix + std::to_string(i);
            if (!col.count(name)) throw InputError("stream header is missing column '" + name + "'");
            cols.push_back(col[name]);
        }
        return cols;
    };
    const auto xi_cols = numbered("xi_");
    const auto lmp_cols = numbered("lmp_");
    if (net) {
        if (xi_cols.size() != net->num_loads())
            throw InputError("stream has " + std::to_string(xi_cols.size()) + " xi columns but the case has " +
                             std::to_string(net->num_loads()) + " loads");
        if (lmp_cols.size() < net->num_buses())
            throw InputError("stream header is missing column 'lmp_" + std::to_string(lmp_cols.size() + 1) + "'");
        if (lmp_cols.size() != net->num_buses())
            throw InputError("stream has " + std::to_string(lmp_cols.size()) + " lmp columns but the case has " +
                             std::to_string(net->num_buses()) + " buses");
    }
    const bool has_g = col.count("g_total") > 0;

    MarketStream stream;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw InputError("stream line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, found " + std::to_string(cells.size()));
        Vector xi(static_cast<Index>(xi_cols.size()));
        for (std::size_t i = 0; i < xi_cols.size(); ++i)
            xi(static_cast<Index>(i)) = parse_number(cells[xi_cols[i]], line_no, header[xi_cols[i]]);
        Vector lmp(static_cast<Index>(lmp_cols.size()));
        for (std::size_t i = 0; i < lmp_cols.size(); ++i)
            lmp(static_cast<Index>(i)) = parse_number(cells[lmp_cols[i]], line_no, header[lmp_cols[i]]);
        stream.xi.push_back(xi);
        stream.lmp.push_back(lmp);
        stream.g_total.push_back(has_g ? parse_number(cells[col["g_total"]], line_no, "g_total") : 0.0);
        stream.region_ids.push_back(-1);
    }
    return stream;
}

MarketStream replay(const std::filesystem::path& path, const NetworkCase* net) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open stream file " + path.string());
    return read_stream_csv(in, net);
}

}  // namespace gridqcd
