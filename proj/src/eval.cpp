#include "crossgap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "crossgap/errors.hpp"
#include "crossgap/model.hpp"

namespace crossgap {

namespace {

std::vector<double> extract_onsets(const std::vector<DetectEvent>& events) {
    std::vector<double> onsets;
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i].state == Crossing::kTraffic && events[i - 1].state == Crossing::kGap)
            onsets.push_back(events[i].timestamp);
    }
    return onsets;
}

}  // namespace

EvalReport evaluate(const std::vector<DetectEvent>& events, const GroundTruth& truth) {
    EvalReport report;
    if (events.empty()) throw DataError("event log is empty");
    report.duration = events.back().timestamp - events.front().timestamp;

    std::vector<double> onsets = extract_onsets(events);
    if (truth.vehicles.empty() && !onsets.empty())
        throw DataError("ground truth is empty but the event log has TRAFFIC onsets");

    // Vehicles sorted by arrival; each onset claims the earliest unmatched
    // arrival it precedes.
    std::vector<VehicleOutcome> outcome;
    outcome.reserve(truth.vehicles.size());
    for (const auto& v : truth.vehicles) outcome.push_back({v.id, v.arrival, false, 0.0, 0.0});
    std::sort(outcome.begin(), outcome.end(),
              [](const VehicleOutcome& a, const VehicleOutcome& b) { return a.arrival < b.arrival; });

    for (double onset : onsets) {
        bool matched = false;
        for (auto& v : outcome) {
            if (v.detected || onset > v.arrival) continue;
            v.detected = true;
            v.onset = onset;
            v.warning = v.arrival - onset;
            matched = true;
            break;
        }
        if (!matched) report.false_alarm_onsets.push_back(onset);
    }

    report.vehicles = std::move(outcome);
    for (const auto& v : report.vehicles) {
        if (v.detected)
            ++report.detections;
        else
            ++report.misses;
    }
    report.false_alarms = report.false_alarm_onsets.size();
    report.false_alarm_rate_per_hour =
        report.duration > 0.0 ? 3600.0 * static_cast<double>(report.false_alarms) / report.duration : 0.0;

    // Advance-warning histogram, 1 s bins from 0.
    double max_w = 0.0;
    for (const auto& v : report.vehicles)
        if (v.detected) max_w = std::max(max_w, v.warning);
    std::size_t bins = static_cast<std::size_t>(std::floor(max_w)) + 1;
    if (report.detections > 0) {
        report.histogram.resize(bins);
        for (std::size_t b = 0; b < bins; ++b)
            report.histogram[b] = {static_cast<double>(b), static_cast<double>(b + 1), 0};
        for (const auto& v : report.vehicles) {
            if (!v.detected) continue;
            std::size_t b = std::min(bins - 1, static_cast<std::size_t>(std::floor(v.warning)));
            ++report.histogram[b].count;
        }
    }

    // ROC: sweep gamma over the recorded correlator range. A step is
    // "signal" when it falls inside some vehicle's visibility window
    // (first_visible sample to arrival); everything else is noise.
    std::vector<double> noise_corr;
    std::vector<double> vehicle_peak(truth.vehicles.size(), -std::numeric_limits<double>::infinity());
    bool any_window = false;
    for (const auto& e : events) {
        if (!e.warmed) continue;
        bool in_window = false;
        for (std::size_t vi = 0; vi < truth.vehicles.size(); ++vi) {
            const auto& v = truth.vehicles[vi];
            if (e.timestamp >= v.first_visible && e.timestamp <= v.arrival) {
                vehicle_peak[vi] = std::max(vehicle_peak[vi], e.correlator);
                in_window = true;
            }
        }
        if (!in_window) noise_corr.push_back(e.correlator);
        any_window = any_window || in_window;
    }
    if (!noise_corr.empty()) {
        double lo = *std::min_element(noise_corr.begin(), noise_corr.end());
        double hi = lo;
        for (double v : noise_corr) hi = std::max(hi, v);
        for (std::size_t vi = 0; vi < vehicle_peak.size(); ++vi)
            if (std::isfinite(vehicle_peak[vi])) hi = std::max(hi, vehicle_peak[vi]);
        std::sort(noise_corr.begin(), noise_corr.end());
        const int steps = 101;
        for (int i = 0; i < steps; ++i) {
            double g = lo + (hi - lo) * static_cast<double>(i) / (steps - 1);
            auto above = noise_corr.end() - std::upper_bound(noise_corr.begin(), noise_corr.end(), g);
            std::size_t det = 0, considered = 0;
            for (double peak : vehicle_peak) {
                if (!std::isfinite(peak)) continue;
                ++considered;
                if (peak > g) ++det;
            }
            RocPoint pt;
            pt.gamma = g;
            pt.p_fa = static_cast<double>(above) / static_cast<double>(noise_corr.size());
            pt.p_d = considered > 0 ? static_cast<double>(det) / static_cast<double>(considered)
                                    : (any_window ? 0.0 : 1.0);
            report.roc.push_back(pt);
        }
        // Ascending false-alarm order; p_d is monotone alongside.
        std::reverse(report.roc.begin(), report.roc.end());
    }
    return report;
}

void write_report_json(const std::filesystem::path& file, const EvalReport& report) {
    nlohmann::json j;
    j["detections"] = report.detections;
    j["misses"] = report.misses;
    j["false_alarms"] = report.false_alarms;
    j["false_alarm_rate_per_hour"] = round9(report.false_alarm_rate_per_hour);
    j["duration_seconds"] = round9(report.duration);
    j["vehicles"] = nlohmann::json::array();
    for (const auto& v : report.vehicles) {
        nlohmann::json jv;
        jv["id"] = v.id;
        jv["arrival"] = round9(v.arrival);
        jv["detected"] = v.detected;
        if (v.detected) {
            jv["onset"] = round9(v.onset);
            jv["warning"] = round9(v.warning);
        }
        j["vehicles"].push_back(std::move(jv));
    }
    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write " + file.string());
    out << j.dump(2) << "\n";
}

void write_hist_csv(const std::filesystem::path& file, const EvalReport& report) {
    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write " + file.string());
    out << "bin_lo,bin_hi,count\n";
    for (const auto& b : report.histogram)
        out << b.lo << "," << b.hi << "," << b.count << "\n";
}

void write_roc_csv(const std::filesystem::path& file, const EvalReport& report) {
    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write " + file.string());
    out << "gamma,p_fa,p_d\n";
    char row[120];
    for (const auto& p : report.roc) {
        std::snprintf(row, sizeof(row), "%.9g,%.9g,%.9g\n", p.gamma, p.p_fa, p.p_d);
        out << row;
    }
}

}  // namespace crossgap
