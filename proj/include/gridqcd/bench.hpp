#pragma once

#include "gridqcd/detector.hpp"
#include "gridqcd/stream.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gridqcd {

struct BenchOptions {
    std::vector<double> etas{10, 20, 30, 40, 50, 60};
    int trajectories = 1000;
    /// Nominal-run horizon; trajectories without an alarm are censored here.
    int t_max = 5000;
    /// Trajectory i uses seed master_seed + i for every eta.
    std::uint64_t master_seed = 1;
    unsigned threads = 0;

    void validate() const;
};

struct CalibrationRow {
    double eta = 0.0;
    /// Mean of min(tau, t_max) over nominal trajectories.
    double arl = 0.0;
    double arl_half_width = 0.0;
    /// Fraction of trajectories without an alarm before t_max.
    double censored_fraction = 0.0;
    double false_alarm_probability = 0.0;
    double false_alarm_half_width = 0.0;
};

struct CalibrationReport {
    std::vector<CalibrationRow> rows;
    int trajectories = 0;
    int t_max = 0;
    std::uint64_t master_seed = 0;
};

/// Nominal-operation run lengths for every eta (one detector pass per
/// trajectory). The scenario's outage, if any, is ignored.
CalibrationReport estimate_arl(const HypothesisSet& hset, const ScenarioSpec& spec, const ScenarioStructures& structures,
                               const BenchOptions& options);

struct ThresholdChoice {
    double eta = 0.0;
    double arl = 0.0;
    /// Target below the smallest tabulated ARL: the smallest eta is returned.
    bool below_range = false;
    std::string note;
};

/// Smallest tabulated eta whose ARL is at least the target. Throws
/// RangeError when no tabulated eta reaches the target.
ThresholdChoice pick_threshold(const CalibrationReport& report, double target_arl);

struct PerformanceRow {
    double eta = 0.0;
    int detections = 0;
    double average_delay = 0.0;
    double average_delay_half_width = 0.0;
    double median_delay = 0.0;
    /// Alarm before the change point.
    double false_detection = 0.0;
    /// Alarm at or after the change point, within the horizon.
    double detection = 0.0;
    double miss = 0.0;
    /// Successful detection with the injected outage identified.
    double identification = 0.0;
    /// identification / detection (0 when nothing was detected).
    double identification_given_detection = 0.0;
    double false_detection_half_width = 0.0;
    double detection_half_width = 0.0;
    double identification_half_width = 0.0;
};

struct PerformanceReport {
    std::vector<PerformanceRow> rows;
    int trajectories = 0;
    int change_point = 0;
    int horizon = 0;
    std::string outage_id;
    std::uint64_t master_seed = 0;
};

/// Post-change performance for every eta. Requires an outage in the spec.
PerformanceReport evaluate(const HypothesisSet& hset, const ScenarioSpec& spec, const ScenarioStructures& structures,
                           const BenchOptions& options);

void write_calibration_csv(std::ostream& out, const CalibrationReport& report);
/// Reads a report written by write_calibration_csv.
CalibrationReport read_calibration_csv(std::istream& in);
void write_performance_csv(std::ostream& out, const PerformanceReport& report);
/// Aligned text table with ARL, false-alarm, delay, detection and
/// identification columns. `calibration` may be null.
std::string format_table(const CalibrationReport* calibration, const PerformanceReport& performance);

}  // namespace gridqcd
