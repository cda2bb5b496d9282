#pragma once

#include "gridqcd/atlas.hpp"
#include "gridqcd/density.hpp"
#include "gridqcd/market_qp.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace gridqcd {

/// One market structure the detector can evaluate: its QP and region atlas.
struct Structure {
    std::string id;  // "nominal" or an outage id such as "line3"
    MarketQP qp;
    RegionAtlas atlas;
};

/// Nominal structure plus the hypothesized outages, in hypothesis order.
/// Hypothesis a (1-based) is alternatives[a - 1]; 0 denotes "no outage".
struct HypothesisSet {
    Structure nominal;
    std::vector<Structure> alternatives;
    NoiseModel noise;
    Channel channel = Channel::Lmp;
    DensityOptions density;
    RegionOptions region;
    /// When the two endpoints of an increment fall in different regions of a
    /// structure, score it with the average of both regions' covariances
    /// instead of the covariance of the region at the later endpoint.
    bool blend_crossings = false;

    [[nodiscard]] std::size_t size() const { return alternatives.size(); }
    /// Throws InputError on duplicate ids or mismatched dimensions.
    void validate() const;
    [[nodiscard]] std::vector<std::string> ids() const;
};

/// Parallel CuSum statistics, one per hypothesis.
struct CusumBank {
    std::vector<double> w;
    int t = 0;
    double eta = 0.0;
    bool keep_history = false;
    std::vector<std::vector<double>> history;  // statistics after each update

    CusumBank() = default;
    CusumBank(std::size_t hypotheses, double threshold, bool history_enabled = false)
        : w(hypotheses, 0.0), eta(threshold), keep_history(history_enabled) {}
};

struct DetectionOutcome {
    bool alarm = false;
    int tau = 0;             // stopping step when alarm
    std::size_t identified = 0;  // 1-based hypothesis, 0 when no alarm
    std::string identified_id;   // outage id, empty when no alarm
    std::vector<double> crossing_values;
    bool tie = false;
    /// Steps whose log-likelihood ratios were skipped (all loads frozen).
    int skipped_steps = 0;
};

/// w_a <- max(0, w_a + llr_a) for every hypothesis; t advances by one.
void update(CusumBank& bank, const std::vector<double>& llrs);

/// Alarm iff max_a w_a >= eta. Ties go to the lowest hypothesis index.
DetectionOutcome check_stop(const CusumBank& bank, const std::vector<std::string>& ids = {});

/// log f_alt(delta) - log f_nom(delta).
inline double llr(const IncrementDensity& alternative, const IncrementDensity& nominal, const Vector& delta) {
    return log_density(alternative, delta) - log_density(nominal, delta);
}

/// Per-step trace row.
struct TraceRow {
    int t = 0;
    Vector xi;
    Vector observation;
    std::vector<double> statistics;
    bool alarm = false;
};

/// Stateful detector for one stream. Holds its own copies of the
/// atlases (online discoveries stay local) and a density cache.
class Detector {
public:
    explicit Detector(const HypothesisSet& hset);

    /// Log-likelihood ratios for every hypothesis at one step. `delta` is the
    /// observed increment of the channel (LMP vector or aggregate dispatch).
    /// Returns nullopt when every load is frozen (step skipped).
    std::optional<std::vector<double>> llrs(const Vector& xi_prev, const Vector& xi, const Vector& delta);

    /// Density of the channel increment for structure s (0 = nominal) at xi.
    const IncrementDensity& density(std::size_t s, const Vector& xi, const std::vector<char>& selection);
    /// Density used for the step xi_prev -> xi (honours blend_crossings).
    const IncrementDensity& step_density(std::size_t s, const Vector& xi_prev, const Vector& xi,
                                         const std::vector<char>& selection);

    [[nodiscard]] const HypothesisSet& hypotheses() const { return hset_; }
    [[nodiscard]] const std::vector<RegionAtlas>& atlases() const { return atlases_; }

private:
    const HypothesisSet& hset_;
    std::vector<RegionAtlas> atlases_;  // 0 = nominal, a = alternative a
    const IncrementDensity& region_density(std::size_t s, int region_id, const std::vector<char>& selection);

    std::map<std::tuple<std::size_t, int, std::vector<char>>, IncrementDensity> cache_;
    std::map<std::tuple<std::size_t, int, int, std::vector<char>>, IncrementDensity> blend_cache_;
};

/// Observation stream as consumed by the detector.
struct Observation {
    Vector xi;
    Vector value;  // LMP vector or (1-vector) aggregate dispatch
};

struct DetectorRun {
    DetectionOutcome outcome;
    std::vector<TraceRow> trace;
};

/// Runs the detector on the stream until the first alarm or the end of the stream.
DetectorRun run_detector(const HypothesisSet& hset, const std::vector<Observation>& stream, double eta,
                         bool record_trace = false);

/// Single pass evaluating several thresholds at once. The statistic path
/// does not depend on eta before the alarm, so outcome k equals
/// run_detector(hset, stream, etas[k]).outcome.
std::vector<DetectionOutcome> run_detector_multi(const HypothesisSet& hset, const std::vector<Observation>& stream,
                                                 const std::vector<double>& etas);

void write_trace_csv(std::ostream& out, const HypothesisSet& hset, const std::vector<TraceRow>& trace);

}  // namespace gridqcd
