#include "gridqcd/detector.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>

namespace gridqcd {

void HypothesisSet::validate() const {
    std::set<std::string> seen;
    for (const auto& alt : alternatives) {
        if (alt.id.empty() || alt.id == "nominal" || !seen.insert(alt.id).second)
            throw InputError("hypothesis ids must be unique and distinct from 'nominal': '" + alt.id + "'");
        if (alt.qp.num_params() != nominal.qp.num_params() || alt.qp.Lambda.rows() != nominal.qp.Lambda.rows())
            throw InputError("hypothesis " + alt.id + " was not built from the same network as the nominal structure");
    }
    if (noise.dim() != nominal.qp.num_params()) throw InputError("noise model dimension does not match the market perturbation");
    noise.validate();
}

std::vector<std::string> HypothesisSet::ids() const {
    std::vector<std::string> out;
    for (const auto& alt : alternatives) out.push_back(alt.id);
    return out;
}

void update(CusumBank& bank, const std::vector<double>& llrs) {
    if (llrs.size() != bank.w.size()) throw InputError("one log-likelihood ratio per hypothesis is required");
    for (std::size_t a = 0; a < bank.w.size(); ++a) bank.w[a] = std::max(0.0, bank.w[a] + llrs[a]);
    ++bank.t;
    if (bank.keep_history) bank.history.push_back(bank.w);
}

DetectionOutcome check_stop(const CusumBank& bank, const std::vector<std::string>& ids) {
    DetectionOutcome out;
    if (bank.w.empty()) return out;
    const auto best = std::max_element(bank.w.begin(), bank.w.end());  // first maximum = lowest index
    if (*best < bank.eta) return out;
    out.alarm = true;
    out.tau = bank.t;
    out.identified = static_cast<std::size_t>(best - bank.w.begin()) + 1;
    out.identified_id = out.identified <= ids.size() ? ids[out.identified - 1] : std::to_string(out.identified);
    out.crossing_values = bank.w;
    out.tie = std::count(bank.w.begin(), bank.w.end(), *best) > 1;
    if (out.tie)
        spdlog::warn("CuSum tie at t={} between hypotheses with statistic {}; reporting the lowest index ({})", bank.t, *best,
                     out.identified_id);
    return out;
}

Detector::Detector(const HypothesisSet& hset) : hset_(hset) {
    atlases_.push_back(hset.nominal.atlas);
    for (const auto& alt : hset.alternatives) atlases_.push_back(alt.atlas);
}

const IncrementDensity& Detector::region_density(std::size_t s, int region_id, const std::vector<char>& selection) {
    auto key = std::make_tuple(s, region_id, selection);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
        const auto& region = atlases_[s].region(static_cast<std::size_t>(region_id));
        it = cache_.emplace(key, increment_covariance(region, hset_.noise, hset_.channel, selection, hset_.density)).first;
    }
    return it->second;
}

const IncrementDensity& Detector::density(std::size_t s, const Vector& xi, const std::vector<char>& selection) {
    const auto& qp = s == 0 ? hset_.nominal.qp : hset_.alternatives[s - 1].qp;
    return region_density(s, locate(atlases_[s], qp, xi, hset_.region).id, selection);
}

const IncrementDensity& Detector::step_density(std::size_t s, const Vector& xi_prev, const Vector& xi,
                                               const std::vector<char>& selection) {
    const auto& qp = s == 0 ? hset_.nominal.qp : hset_.alternatives[s - 1].qp;
    const int current = locate(atlases_[s], qp, xi, hset_.region).id;
    if (!hset_.blend_crossings) return region_density(s, current, selection);
    const int previous = locate(atlases_[s], qp, xi_prev, hset_.region).id;
    if (previous == current) return region_density(s, current, selection);
    auto key = std::make_tuple(s, previous, current, selection);
    auto it = blend_cache_.find(key);
    if (it == blend_cache_.end()) {
        const IncrementDensity before = region_density(s, previous, selection);
        const IncrementDensity& after = region_density(s, current, selection);
        it = blend_cache_.emplace(key, blended_density(before, after, hset_.density)).first;
    }
    return it->second;
}

std::optional<std::vector<double>> Detector::llrs(const Vector& xi_prev, const Vector& xi, const Vector& delta) {
    const auto selection = selection_mask(hset_.noise, xi_prev, xi);
    if (std::none_of(selection.begin(), selection.end(), [](char c) { return c != 0; })) return std::nullopt;
    const double log_nominal = log_density(step_density(0, xi_prev, xi, selection), delta);
    std::vector<double> out(hset_.size());
    for (std::size_t a = 1; a <= hset_.size(); ++a)
        out[a - 1] = log_density(step_density(a, xi_prev, xi, selection), delta) - log_nominal;
    return out;
}

namespace {

void check_observation(const HypothesisSet& hset, const Observation& obs, std::size_t t) {
    const auto want = hset.channel == Channel::Lmp ? hset.nominal.qp.Lambda.rows() : Eigen::Index{1};
    if (obs.xi.size() != hset.nominal.qp.num_params() || obs.value.size() != want)
        throw InputError("stream row " + std::to_string(t) + " has the wrong dimension (xi " + std::to_string(obs.xi.size()) +
                         ", observation " + std::to_string(obs.value.size()) + ")");
}

}  // namespace

DetectorRun run_detector(const HypothesisSet& hset, const std::vector<Observation>& stream, double eta, bool record_trace) {
    if (stream.size() < 2) throw InputError("the detector needs at least two stream rows to form an increment");
    const auto ids = hset.ids();
    Detector det(hset);
    CusumBank bank(hset.size(), eta);
    DetectorRun run;
    check_observation(hset, stream[0], 0);
    if (record_trace) run.trace.push_back({0, stream[0].xi, stream[0].value, bank.w, false});

    for (std::size_t t = 1; t < stream.size(); ++t) {
        check_observation(hset, stream[t], t);
        const Vector delta = stream[t].value - stream[t - 1].value;
        auto step = det.llrs(stream[t - 1].xi, stream[t].xi, delta);
        if (!step) {
            ++run.outcome.skipped_steps;
            step = std::vector<double>(hset.size(), 0.0);
        }
        update(bank, *step);
        auto outcome = check_stop(bank, ids);
        if (record_trace) run.trace.push_back({bank.t, stream[t].xi, stream[t].value, bank.w, outcome.alarm});
        if (outcome.alarm) {
            outcome.skipped_steps = run.outcome.skipped_steps;
            run.outcome = outcome;
            return run;
        }
    }
    return run;
}

std::vector<DetectionOutcome> run_detector_multi(const HypothesisSet& hset, const std::vector<Observation>& stream,
                                                 const std::vector<double>& etas) {
    if (stream.size() < 2) throw InputError("the detector needs at least two stream rows to form an increment");
    const auto ids = hset.ids();
    Detector det(hset);
    CusumBank bank(hset.size(), 0.0);
    std::vector<DetectionOutcome> outcomes(etas.size());
    std::vector<char> done(etas.size(), 0);
    std::size_t remaining = etas.size();
    int skipped = 0;
    check_observation(hset, stream[0], 0);

    for (std::size_t t = 1; t < stream.size() && remaining > 0; ++t) {
        check_observation(hset, stream[t], t);
        const Vector delta = stream[t].value - stream[t - 1].value;
        auto step = det.llrs(stream[t - 1].xi, stream[t].xi, delta);
        if (!step) {
            ++skipped;
            step = std::vector<double>(hset.size(), 0.0);
        }
        update(bank, *step);
        const double top = *std::max_element(bank.w.begin(), bank.w.end());
        for (std::size_t k = 0; k < etas.size(); ++k) {
            if (done[k] || top < etas[k]) continue;
            bank.eta = etas[k];
            outcomes[k] = check_stop(bank, ids);
            outcomes[k].skipped_steps = skipped;
            done[k] = 1;
            --remaining;
        }
    }
    for (std::size_t k = 0; k < etas.size(); ++k)
        if (!done[k]) outcomes[k].skipped_steps = skipped;
    return outcomes;
}

void write_trace_csv(std::ostream& out, const HypothesisSet& hset, const std::vector<TraceRow>& trace) {
    const auto ids = hset.ids();
    const auto nxi = hset.nominal.qp.num_params();
    const auto nobs = hset.channel == Channel::Lmp ? hset.nominal.qp.Lambda.rows() : Eigen::Index{1};
    out << "t";
    for (Eigen::Index i = 0; i < nxi; ++i) out << ",xi_" << i + 1;
    if (hset.channel == Channel::Lmp)
        for (Eigen::Index i = 0; i < nobs; ++i) out << ",lmp_" << i + 1;
    else
        out << ",g_total";
    for (const auto& id : ids) out << ",w_" << id;
    out << ",alarm\n";
    out << std::setprecision(17);
    for (const auto& row : trace) {
        out << row.t;
        for (Eigen::Index i = 0; i < row.xi.size(); ++i) out << ',' << row.xi(i);
        for (Eigen::Index i = 0; i < row.observation.size(); ++i) out << ',' << row.observation(i);
        for (double w : row.statistics) out << ',' << w;
        out << ',' << (row.alarm ? 1 : 0) << '\n';
    }
}

}  // namespace gridqcd
