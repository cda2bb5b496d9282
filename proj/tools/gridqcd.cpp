#include "gridqcd/bench.hpp"
#include "gridqcd/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace gridqcd;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kValidation = 2, kNumeric = 3, kIo = 4 };

struct CommonArgs {
    std::string scenario;
    std::string case_path;
    std::string out = "out";
    std::string cache_dir;
    std::optional<std::uint64_t> seed;
    std::optional<double> eta;
    std::optional<double> target_arl;
    std::optional<int> trajectories;
    bool fast = false;
    unsigned threads = 0;
    bool verbose = false;
};

struct DetectArgs {
    std::string stream;
    std::string calibration;
};

fs::path cache_directory(const CommonArgs& args) {
    if (!args.cache_dir.empty()) return args.cache_dir;
    if (const char* env = std::getenv("GRIDQCD_CACHE_DIR"); env && *env) return env;
    return fs::path(args.out) / "atlas_cache";
}

fs::path prepare_out(const CommonArgs& args) {
    fs::path out = args.out;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
    return out;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    return f;
}

// Scenario for a bare --case: every load with a perturbation bound in the
// case file (all loads when none has one), no outage.
RunConfig config_from_case(const fs::path& case_path) {
    const auto net = load_case(case_path);
    nlohmann::json doc;
    doc["case"] = fs::absolute(case_path).string();
    std::vector<std::size_t> loads;
    for (std::size_t d = 0; d < net.num_loads(); ++d)
        if (net.loads[d].perturbation_bound) loads.push_back(d + 1);
    if (loads.empty())
        for (std::size_t d = 0; d < net.num_loads(); ++d) loads.push_back(d + 1);
    doc["perturbed_loads"] = loads;
    return run_config_from_json(doc, fs::current_path());
}

RunConfig resolve_config(const CommonArgs& args, bool scenario_required) {
    RunConfig cfg;
    if (!args.scenario.empty()) {
        cfg = load_run_config(args.scenario);
        if (!args.case_path.empty()) cfg.scenario.case_path = args.case_path;
    } else if (!args.case_path.empty() && !scenario_required) {
        cfg = config_from_case(args.case_path);
    } else {
        throw InputError(scenario_required ? "--scenario is required" : "either --scenario or --case is required");
    }
    if (!fs::exists(cfg.scenario.case_path)) throw IoError("case file not found: " + cfg.scenario.case_path.string());
    if (args.seed) cfg.scenario.seed = *args.seed;
    if (args.fast) cfg.bench.trajectories = cfg.bench.fast_trajectories;
    if (args.trajectories) cfg.bench.trajectories = *args.trajectories;
    if (args.eta && args.target_arl) throw InputError("give either --eta or --target-arl, not both");
    if (args.eta && !(*args.eta > 0.0)) throw InputError("--eta must be positive");
    cfg.validate();
    return cfg;
}

void echo_config(const fs::path& out, const RunConfig& cfg, const CommonArgs& args, const std::string& command) {
    auto doc = run_config_to_json(cfg);
    doc["command"] = command;
    doc["atlas_cache"] = cache_directory(args).string();
    if (args.eta) doc["eta"] = *args.eta;
    if (args.target_arl) doc["target_arl"] = *args.target_arl;
    auto f = open_out(out / "config.json");
    f << doc.dump(2) << "\n";
}

BenchOptions bench_options(const RunConfig& cfg, const CommonArgs& args) {
    BenchOptions opts;
    opts.etas = cfg.bench.etas;
    opts.trajectories = cfg.bench.trajectories;
    opts.t_max = cfg.bench.t_max;
    opts.master_seed = cfg.scenario.seed;
    opts.threads = args.threads;
    opts.validate();
    return opts;
}

std::string active_set_string(const MarketQP& qp, const CriticalRegion& region) {
    std::string s;
    for (auto row : region.active) {
        if (!s.empty()) s += ' ';
        s += qp.row_labels[static_cast<std::size_t>(row)].str();
    }
    return s;
}

int cmd_regions(const CommonArgs& args) {
    const auto cfg = resolve_config(args, false);
    const auto out = prepare_out(args);
    echo_config(out, cfg, args, "regions");
    const auto structures = scenario_structures(cfg.scenario);
    std::vector<AtlasReport> reports;
    const auto hset = build_hypothesis_set(cfg, structures, cache_directory(args), AtlasPolicy::BuildIfMissing, &reports);

    std::vector<const Structure*> all{&hset.nominal};
    for (const auto& a : hset.alternatives) all.push_back(&a);

    auto regions = open_out(out / "regions.csv");
    regions << "structure,region_id,degenerate,active_set\n";
    std::size_t degenerate = 0;
    for (const auto* s : all)
        for (const auto& r : s->atlas.regions()) {
            regions << s->id << ',' << r->id << ',' << (r->degenerate() ? 1 : 0) << ',' << active_set_string(s->qp, *r) << '\n';
            degenerate += r->degenerate();
        }

    auto quarantine = open_out(out / "degenerate_samples.csv");
    quarantine << "structure,sample\n";
    for (const auto* s : all)
        for (const auto& xi : s->atlas.quarantined()) {
            quarantine << s->id << ',';
            for (Eigen::Index i = 0; i < xi.size(); ++i) quarantine << (i ? " " : "") << fmt::format("{:.17g}", xi(i));
            quarantine << '\n';
        }

    const auto& box = hset.noise.bounds;
    const auto free = box.free_dims();
    if (free.size() >= 2) {
        auto polygons = open_out(out / "polygons.csv");
        polygons << "structure,region_id,vertex,xi_" << free[0] + 1 << ",xi_" << free[1] + 1 << '\n';
        const Vector base = box.clamp(Vector::Zero(box.dim()));
        for (const auto* s : all)
            for (const auto& r : s->atlas.regions()) {
                const auto poly = region_polygon(*r, box, free[0], free[1], base);
                for (std::size_t v = 0; v < poly.size(); ++v)
                    polygons << s->id << ',' << r->id << ',' << v << ',' << fmt::format("{:.10g},{:.10g}", poly[v].first, poly[v].second)
                             << '\n';
            }
    }

    auto counts = open_out(out / "region_counts.csv");
    counts << "structure,regions,quarantined_samples,cache_file\n";
    for (const auto& r : reports) {
        counts << r.structure_id << ',' << r.regions << ',' << r.quarantined << ',' << r.path.filename().string() << '\n';
        std::cout << fmt::format("{:>8}: {:4} regions{}\n", r.structure_id, r.regions, r.from_cache ? " (cached)" : "");
    }
    if (degenerate > 0) spdlog::warn("{} regions are flagged degenerate (see regions.csv)", degenerate);
    return kOk;
}

int cmd_simulate(const CommonArgs& args) {
    const auto cfg = resolve_config(args, true);
    const auto out = prepare_out(args);
    echo_config(out, cfg, args, "simulate");
    const auto structures = scenario_structures(cfg.scenario);
    const auto stream = simulate(cfg.scenario, structures);
    save_stream(stream, out / "stream.csv");
    std::cout << fmt::format("wrote {} rows to {}\n", stream.size(), (out / "stream.csv").string());
    return kOk;
}

double resolve_eta(const CommonArgs& args, const DetectArgs& dargs) {
    if (args.eta) return *args.eta;
    if (!args.target_arl) throw InputError("detect needs --eta or --target-arl");
    if (dargs.calibration.empty())
        throw InputError("--target-arl needs --calibration pointing at a calibration.csv written by `gridqcd calibrate`");
    std::ifstream in(dargs.calibration);
    if (!in) throw IoError("cannot open calibration report " + dargs.calibration);
    const auto choice = pick_threshold(read_calibration_csv(in), *args.target_arl);
    spdlog::info("threshold {:g}: {}", choice.eta, choice.note);
    return choice.eta;
}

int cmd_detect(const CommonArgs& args, const DetectArgs& dargs) {
    const auto cfg = resolve_config(args, true);
    const double eta = resolve_eta(args, dargs);
    const auto out = prepare_out(args);
    echo_config(out, cfg, args, "detect");
    const auto structures = scenario_structures(cfg.scenario);
    const auto hset = build_hypothesis_set(cfg, structures, cache_directory(args), AtlasPolicy::RequireCached);

    const auto stream = dargs.stream.empty() ? simulate(cfg.scenario, structures) : replay(dargs.stream, &structures.net);
    const auto run = run_detector(hset, stream.observations(hset.channel), eta, true);
    {
        auto trace = open_out(out / "trace.csv");
        write_trace_csv(trace, hset, run.trace);
    }
    const auto& o = run.outcome;
    nlohmann::json summary = {{"eta", eta},          {"alarm", o.alarm},
                              {"tau", o.alarm ? nlohmann::json(o.tau) : nlohmann::json(nullptr)},
                              {"identified", o.identified_id}, {"tie", o.tie},
                              {"crossing_values", o.crossing_values}, {"skipped_steps", o.skipped_steps},
                              {"hypotheses", hset.ids()}, {"rows", stream.size()}};
    if (cfg.scenario.outage && dargs.stream.empty()) {
        summary["injected_outage"] = cfg.scenario.outage->id();
        summary["change_point"] = cfg.scenario.change_point;
        if (o.alarm) summary["delay"] = o.tau - cfg.scenario.change_point;
    }
    auto f = open_out(out / "outcome.json");
    f << summary.dump(2) << "\n";
    if (o.alarm)
        std::cout << fmt::format("alarm at t = {}: {} identified (eta = {:g})\n", o.tau, o.identified_id, eta);
    else
        std::cout << fmt::format("no alarm in {} rows (eta = {:g})\n", stream.size(), eta);
    return kOk;
}

int cmd_calibrate(const CommonArgs& args) {
    const auto cfg = resolve_config(args, true);
    const auto opts = bench_options(cfg, args);
    const auto out = prepare_out(args);
    echo_config(out, cfg, args, "calibrate");
    const auto structures = scenario_structures(cfg.scenario);
    const auto hset = build_hypothesis_set(cfg, structures, cache_directory(args), AtlasPolicy::BuildIfMissing);
    const auto report = estimate_arl(hset, cfg.scenario, structures, opts);
    {
        auto f = open_out(out / "calibration.csv");
        write_calibration_csv(f, report);
    }
    std::cout << fmt::format("{:>6} {:>10} {:>10} {:>10}\n", "eta", "ARL", "+/-", "P(FA)");
    for (const auto& r : report.rows)
        std::cout << fmt::format("{:>6g} {:>10.1f} {:>10.1f} {:>9.1f}%\n", r.eta, r.arl, r.arl_half_width,
                                 100.0 * r.false_alarm_probability);
    if (args.target_arl) {
        const auto choice = pick_threshold(report, *args.target_arl);
        nlohmann::json doc = {{"target_arl", *args.target_arl}, {"eta", choice.eta}, {"arl", choice.arl},
                              {"below_range", choice.below_range}, {"note", choice.note}};
        auto f = open_out(out / "threshold.json");
        f << doc.dump(2) << "\n";
        std::cout << fmt::format("selected eta = {:g} ({})\n", choice.eta, choice.note);
    }
    return kOk;
}

int cmd_bench(const CommonArgs& args) {
    const auto cfg = resolve_config(args, true);
    if (!cfg.scenario.outage) throw InputError("bench needs a scenario with an outage (\"outage\": {element, change_point})");
    const auto opts = bench_options(cfg, args);
    const auto out = prepare_out(args);
    echo_config(out, cfg, args, "bench");
    const auto structures = scenario_structures(cfg.scenario);
    const auto hset = build_hypothesis_set(cfg, structures, cache_directory(args), AtlasPolicy::BuildIfMissing);
    const auto calibration = estimate_arl(hset, cfg.scenario, structures, opts);
    const auto performance = evaluate(hset, cfg.scenario, structures, opts);
    {
        auto f = open_out(out / "calibration.csv");
        write_calibration_csv(f, calibration);
    }
    {
        auto f = open_out(out / "performance.csv");
        write_performance_csv(f, performance);
    }
    const auto table = format_table(&calibration, performance);
    auto f = open_out(out / "table.txt");
    f << table;
    std::cout << table;
    return kOk;
}

int exit_code(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Input:
        case ErrorKind::Structural: return kValidation;
        case ErrorKind::Numeric: return kNumeric;
        case ErrorKind::Io: return kIo;
    }
    return kOther;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--scenario", args.scenario, "Scenario JSON (stream, detector and bench settings)");
    cmd->add_option("--case", args.case_path, "Network case JSON (overrides the scenario's case)");
    cmd->add_option("--out", args.out, "Output directory")->capture_default_str();
    cmd->add_option("--cache-dir", args.cache_dir, "Atlas cache directory (default $GRIDQCD_CACHE_DIR, else <out>/atlas_cache)");
    cmd->add_option("--seed", args.seed, "Seed (scenario seed; master seed for Monte Carlo runs)");
    cmd->add_option("--threads", args.threads, "Worker threads (0 = all cores)");
    cmd->add_flag("-v,--verbose", args.verbose, "Debug logging");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grid outage detection and identification from market-clearing data"};
    app.require_subcommand(1);
    CommonArgs args;
    DetectArgs dargs;

    auto* regions = app.add_subcommand("regions", "Build or load critical-region atlases and export region geometry");
    add_common(regions, args);

    auto* sim = app.add_subcommand("simulate", "Simulate a market-clearing stream (CSV)");
    add_common(sim, args);

    auto* detect = app.add_subcommand("detect", "Run parallel CuSum detection on a stream");
    add_common(detect, args);
    detect->add_option("--eta", args.eta, "Detection threshold");
    detect->add_option("--target-arl", args.target_arl, "Target ARL; picks eta from --calibration");
    detect->add_option("--calibration", dargs.calibration, "calibration.csv written by the calibrate command");
    detect->add_option("--stream", dargs.stream, "Stream CSV (default: simulate the scenario)");

    auto* calibrate = app.add_subcommand("calibrate", "Estimate ARL under nominal operation for each threshold");
    add_common(calibrate, args);
    calibrate->add_option("--target-arl", args.target_arl, "Pick the smallest threshold reaching this ARL");
    calibrate->add_option("--trajectories", args.trajectories, "Number of trajectories");
    calibrate->add_flag("--fast", args.fast, "Use the fast trajectory count");

    auto* bench = app.add_subcommand("bench", "Monte Carlo performance table across thresholds");
    add_common(bench, args);
    bench->add_option("--trajectories", args.trajectories, "Number of trajectories");
    bench->add_flag("--fast", args.fast, "Use the fast trajectory count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(args.verbose ? spdlog::level::debug : spdlog::level::info);
    try {
        if (args.trajectories && *args.trajectories <= 0) throw InputError("--trajectories must be positive");
        if (*regions) return cmd_regions(args);
        if (*sim) return cmd_simulate(args);
        if (*detect) return cmd_detect(args, dargs);
        if (*calibrate) return cmd_calibrate(args);
        if (*bench) return cmd_bench(args);
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return exit_code(e);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kOther;
    }
    return kOther;
}
