#include "gridqcd/bench.hpp"

#include "gridqcd/parallel.hpp"

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace gridqcd {

namespace {

constexpr double kZ95 = 1.959963984540054;

double proportion_half_width(double p, int n) { return n > 0 ? kZ95 * std::sqrt(p * (1.0 - p) / n) : 0.0; }

double mean_half_width(const std::vector<double>& values, double mean) {
    const auto n = values.size();
    if (n < 2) return 0.0;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return kZ95 * std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Runs the detector on trajectories master_seed + i, i < n, and returns the
// outcomes per trajectory (outer) and eta (inner).
std::vector<std::vector<DetectionOutcome>> run_trajectories(const HypothesisSet& hset, const ScenarioSpec& spec,
                                                            const ScenarioStructures& structures,
                                                            const BenchOptions& options) {
    std::vector<std::vector<DetectionOutcome>> outcomes(static_cast<std::size_t>(options.trajectories));
    parallel_for(outcomes.size(), options.threads, [&](std::size_t i) {
        ScenarioSpec run = spec;
        run.seed = options.master_seed + i;
        const auto stream = simulate(run, structures);
        outcomes[i] = run_detector_multi(hset, stream.observations(hset.channel), options.etas);
    });
    return outcomes;
}

}  // namespace

void BenchOptions::validate() const {
    if (etas.empty()) throw InputError("at least one threshold is required");
    for (std::size_t k = 0; k < etas.size(); ++k) {
        if (!(etas[k] > 0.0) || !std::isfinite(etas[k])) throw InputError("thresholds must be positive and finite");
        if (k > 0 && etas[k] <= etas[k - 1]) throw InputError("thresholds must be strictly increasing");
    }
    if (trajectories <= 0) throw InputError("number of trajectories must be positive");
    if (t_max < 2) throw InputError("t_max must be at least 2");
}

CalibrationReport estimate_arl(const HypothesisSet& hset, const ScenarioSpec& spec, const ScenarioStructures& structures,
                               const BenchOptions& options) {
    options.validate();
    ScenarioSpec nominal = spec;
    nominal.outage.reset();
    nominal.change_point = 0;
    nominal.horizon = options.t_max;

    ScenarioStructures nominal_structures{structures.net, structures.nominal, std::nullopt};
    const auto outcomes = run_trajectories(hset, nominal, nominal_structures, options);

    CalibrationReport report;
    report.trajectories = options.trajectories;
    report.t_max = options.t_max;
    report.master_seed = options.master_seed;
    const int n = options.trajectories;
    for (std::size_t k = 0; k < options.etas.size(); ++k) {
        std::vector<double> lengths;
        lengths.reserve(outcomes.size());
        int alarms = 0;
        for (const auto& per_eta : outcomes) {
            const auto& o = per_eta[k];
            if (o.alarm) ++alarms;
            lengths.push_back(o.alarm ? static_cast<double>(o.tau) : static_cast<double>(options.t_max));
        }
        CalibrationRow row;
        row.eta = options.etas[k];
        double sum = 0.0;
        for (double v : lengths) sum += v;
        row.arl = sum / n;
        row.arl_half_width = mean_half_width(lengths, row.arl);
        row.false_alarm_probability = static_cast<double>(alarms) / n;
        row.censored_fraction = 1.0 - row.false_alarm_probability;
        row.false_alarm_half_width = proportion_half_width(row.false_alarm_probability, n);
        report.rows.push_back(row);
    }
    return report;
}

ThresholdChoice pick_threshold(const CalibrationReport& report, double target_arl) {
    if (report.rows.empty()) throw InputError("calibration report is empty");
    if (!(target_arl > 0.0)) throw InputError("target ARL must be positive");
    ThresholdChoice choice;
    const auto& first = report.rows.front();
    if (target_arl < first.arl) {
        choice.eta = first.eta;
        choice.arl = first.arl;
        choice.below_range = true;
        choice.note = fmt::format(
            "target ARL {:g} is below the smallest tabulated ARL {:.1f}; returning the smallest threshold {:g} "
            "(conservative side)",
            target_arl, first.arl, first.eta);
        return choice;
    }
    for (const auto& row : report.rows) {
        if (row.arl >= target_arl) {
            choice.eta = row.eta;
            choice.arl = row.arl;
            choice.note = fmt::format("smallest tabulated threshold with ARL >= {:g}", target_arl);
            return choice;
        }
    }
    throw RangeError(fmt::format(
        "target ARL {:g} exceeds the largest tabulated ARL {:.1f} (eta = {:g}); rerun calibration with a wider "
        "threshold sweep or a longer t_max",
        target_arl, report.rows.back().arl, report.rows.back().eta));
}

PerformanceReport evaluate(const HypothesisSet& hset, const ScenarioSpec& spec, const ScenarioStructures& structures,
                           const BenchOptions& options) {
    options.validate();
    if (!spec.outage || !structures.outage) throw InputError("performance evaluation needs a scenario with an outage");
    const auto outcomes = run_trajectories(hset, spec, structures, options);

    PerformanceReport report;
    report.trajectories = options.trajectories;
    report.change_point = spec.change_point;
    report.horizon = spec.horizon;
    report.outage_id = spec.outage->id();
    report.master_seed = options.master_seed;
    const int n = options.trajectories;
    const int T = spec.change_point;
    for (std::size_t k = 0; k < options.etas.size(); ++k) {
        int false_detections = 0, detections = 0, identified = 0;
        std::vector<double> delays;
        for (const auto& per_eta : outcomes) {
            const auto& o = per_eta[k];
            if (!o.alarm) continue;
            if (o.tau < T) {
                ++false_detections;
                continue;
            }
            ++detections;
            delays.push_back(static_cast<double>(o.tau - T));
            if (o.identified_id == report.outage_id) ++identified;
        }
        PerformanceRow row;
        row.eta = options.etas[k];
        row.detections = detections;
        double sum = 0.0;
        for (double d : delays) sum += d;
        row.average_delay = delays.empty() ? 0.0 : sum / static_cast<double>(delays.size());
        row.average_delay_half_width = mean_half_width(delays, row.average_delay);
        row.median_delay = median(delays);
        row.false_detection = static_cast<double>(false_detections) / n;
        row.detection = static_cast<double>(detections) / n;
        row.miss = static_cast<double>(n - false_detections - detections) / n;
        row.identification = static_cast<double>(identified) / n;
        row.identification_given_detection = detections > 0 ? static_cast<double>(identified) / detections : 0.0;
        row.false_detection_half_width = proportion_half_width(row.false_detection, n);
        row.detection_half_width = proportion_half_width(row.detection, n);
        row.identification_half_width = proportion_half_width(row.identification, n);
        report.rows.push_back(row);
    }
    return report;
}

void write_calibration_csv(std::ostream& out, const CalibrationReport& report) {
    out << "eta,arl,arl_half_width,censored_fraction,false_alarm_probability,false_alarm_half_width,trajectories,t_max\n";
    for (const auto& r : report.rows)
        out << fmt::format("{:g},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{},{}\n", r.eta, r.arl, r.arl_half_width,
                           r.censored_fraction, r.false_alarm_probability, r.false_alarm_half_width, report.trajectories,
                           report.t_max);
}

CalibrationReport read_calibration_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("calibration CSV is empty");
    std::map<std::string, std::size_t> column;
    {
        std::stringstream header(line);
        std::string name;
        for (std::size_t i = 0; std::getline(header, name, ','); ++i) column[name] = i;
    }
    for (const char* required : {"eta", "arl"})
        if (!column.count(required)) throw InputError(std::string("calibration CSV lacks column '") + required + "'");
    CalibrationReport report;
    for (int line_no = 2; std::getline(in, line); ++line_no) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream row(line);
        for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
        auto field = [&](const std::string& name, double fallback) {
            auto it = column.find(name);
            if (it == column.end()) return fallback;
            if (it->second >= cells.size()) throw InputError(fmt::format("calibration CSV line {}: missing '{}'", line_no, name));
            try {
                return std::stod(cells[it->second]);
            } catch (const std::exception&) {
                throw InputError(fmt::format("calibration CSV line {}: bad value for '{}'", line_no, name));
            }
        };
        CalibrationRow r;
        r.eta = field("eta", 0.0);
        r.arl = field("arl", 0.0);
        r.arl_half_width = field("arl_half_width", 0.0);
        r.censored_fraction = field("censored_fraction", 0.0);
        r.false_alarm_probability = field("false_alarm_probability", 0.0);
        r.false_alarm_half_width = field("false_alarm_half_width", 0.0);
        report.trajectories = static_cast<int>(field("trajectories", report.trajectories));
        report.t_max = static_cast<int>(field("t_max", report.t_max));
        if (!report.rows.empty() && r.eta <= report.rows.back().eta)
            throw InputError(fmt::format("calibration CSV line {}: thresholds must be increasing", line_no));
        report.rows.push_back(r);
    }
    if (report.rows.empty()) throw InputError("calibration CSV has no rows");
    return report;
}

void write_performance_csv(std::ostream& out, const PerformanceReport& report) {
    out << "eta,average_delay,average_delay_half_width,median_delay,false_detection,false_detection_half_width,"
           "detection,detection_half_width,miss,identification,identification_half_width,"
           "identification_given_detection,detections,trajectories\n";
    for (const auto& r : report.rows)
        out << fmt::format("{:g},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{},{}\n",
                           r.eta, r.average_delay, r.average_delay_half_width, r.median_delay, r.false_detection,
                           r.false_detection_half_width, r.detection, r.detection_half_width, r.miss, r.identification,
                           r.identification_half_width, r.identification_given_detection, r.detections,
                           report.trajectories);
}

std::string format_table(const CalibrationReport* calibration, const PerformanceReport& performance) {
    std::string out;
    if (calibration)
        out += fmt::format("{:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n", "eta", "ARL", "P(FA)",
                           "avg delay", "med delay", "false det", "detection", "ident");
    else
        out += fmt::format("{:>6} {:>10} {:>10} {:>10} {:>10} {:>10}\n", "eta", "avg delay", "med delay", "false det",
                           "detection", "ident");
    for (std::size_t k = 0; k < performance.rows.size(); ++k) {
        const auto& p = performance.rows[k];
        if (calibration) {
            const CalibrationRow* c = nullptr;
            for (const auto& row : calibration->rows)
                if (row.eta == p.eta) c = &row;
            out += fmt::format("{:>6g} {:>10} {:>10} {:>10.1f} {:>10.1f} {:>9.1f}% {:>9.1f}% {:>9.1f}%\n", p.eta,
                               c ? fmt::format("{:.1f}", c->arl) : std::string("-"),
                               c ? fmt::format("{:.1f}%", 100.0 * c->false_alarm_probability) : std::string("-"),
                               p.average_delay, p.median_delay, 100.0 * p.false_detection, 100.0 * p.detection,
                               100.0 * p.identification);
        } else {
            out += fmt::format("{:>6g} {:>10.1f} {:>10.1f} {:>9.1f}% {:>9.1f}% {:>9.1f}%\n", p.eta, p.average_delay,
                               p.median_delay, 100.0 * p.false_detection, 100.0 * p.detection,
                               100.0 * p.identification);
        }
    }
    out += fmt::format("trajectories: {}; change point T = {}; horizon {}; outage {}", performance.trajectories,
                       performance.change_point, performance.horizon, performance.outage_id);
    if (calibration) out += fmt::format("; ARL over nominal runs censored at t_max = {}", calibration->t_max);
    out += "\nfalse det: alarm before T; detection: alarm at or after T; ident: detection with the injected outage "
           "identified\n";
    return out;
}

}  // namespace gridqcd
