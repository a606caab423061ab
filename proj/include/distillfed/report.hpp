#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "distillfed/comm.hpp"
#include "distillfed/federation.hpp"

namespace distillfed {

using json = nlohmann::ordered_json;

inline std::string format_gamma(double gamma) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", gamma);
    return buf;
}

/// Efficiency values per gamma. Runs that hit the metric's pole (accuracy 1)
/// or produced no billable volume get null instead of a number.
inline json gce_map(const RunReport& report, const std::vector<double>& gammas,
                    VolumeAccounting accounting) {
    json out = json::object();
    for (double gamma : gammas) {
        GceParams params{gamma, accounting};
        try {
            out[format_gamma(gamma)] = gce(report.final_accuracy, params, report.ledger);
        } catch (const std::invalid_argument&) {
            out[format_gamma(gamma)] = nullptr;
        }
    }
    return out;
}

/// Full report document. Key order is fixed and wall_time_sec comes last so
/// payload comparisons can simply drop the final field.
inline json report_to_json(const RunReport& report, const json& config_echo,
                           const std::vector<double>& gammas, VolumeAccounting accounting,
                           const std::string& weights_file) {
    json doc;
    doc["method"] = report.method;
    doc["seed"] = report.seed;
    doc["round_accuracy"] = report.round_accuracy;
    doc["final_accuracy"] = report.final_accuracy;
    doc["gce"] = gce_map(report, gammas, accounting);
    doc["uplink_bits_total"] = report.ledger.total_uplink_bits();
    doc["downlink_bits_total"] = report.ledger.total_downlink_bits();
    doc["log2_volume"] = report.ledger.sum_log2_terms(accounting);
    json rounds = json::array();
    for (std::size_t t = 0; t < report.ledger.rounds.size(); ++t) {
        const auto& r = report.ledger.rounds[t];
        json row;
        row["round"] = t + 1;
        row["uplink_bits"] = r.uplink_total();
        row["downlink_bits"] = r.downlink_bits;
        row["client_uplink_bits"] = r.client_uplink_bits;
        rounds.push_back(std::move(row));
    }
    doc["ledger"] = std::move(rounds);
    json distill = json::array();
    for (const auto& st : report.distill_stats) {
        json row;
        row["client_id"] = st.client_id;
        row["instance"] = st.instance;
        row["points"] = st.points;
        row["epochs_used"] = st.epochs_used;
        row["accuracy_init"] = st.accuracy_init;
        row["accuracy_final"] = st.accuracy_final;
        row["uplink_bits"] = st.uplink_bits;
        distill.push_back(std::move(row));
    }
    doc["distill"] = std::move(distill);
    doc["events"] = report.events;
    doc["weights_file"] = weights_file;
    doc["config"] = config_echo;
    doc["wall_time_sec"] = report.wall_time_sec;
    return doc;
}

inline void write_json_file(const std::string& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot create " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return doc;
}

/// Accuracy-vs-volume curve of one run, one row per round with cumulative
/// uplink totals under the summed-clients accounting.
inline void write_curves_csv(const std::string& path, const RunReport& report) {
    if (report.round_accuracy.size() != report.ledger.rounds.size())
        throw std::logic_error("write_curves_csv: accuracy/ledger length mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot create " + path);
    out.precision(10);
    out << "round,cum_uplink_bits,cum_log2_volume,test_acc\n";
    std::uint64_t cum_bits = 0;
    double cum_log2 = 0.0;
    for (std::size_t t = 0; t < report.ledger.rounds.size(); ++t) {
        const auto& r = report.ledger.rounds[t];
        cum_bits += r.uplink_total();
        cum_log2 += std::log2(static_cast<double>(r.uplink_total()) + 1.0);
        out << (t + 1) << ',' << cum_bits << ',' << cum_log2 << ','
            << report.round_accuracy[t] << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace distillfed
