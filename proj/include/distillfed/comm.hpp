#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "distillfed/distill.hpp"

namespace distillfed {

enum class Method { fedd3_kip, fedd3_coreset, fedavg, fedprox, fednova, scaffold };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::fedd3_kip: return "fedd3_kip";
        case Method::fedd3_coreset: return "fedd3_coreset";
        case Method::fedavg: return "fedavg";
        case Method::fedprox: return "fedprox";
        case Method::fednova: return "fednova";
        case Method::scaffold: return "scaffold";
    }
    throw std::invalid_argument("method_name: unknown method");
}

inline Method method_from_string(const std::string& s) {
    for (Method m : {Method::fedd3_kip, Method::fedd3_coreset, Method::fedavg, Method::fedprox,
                     Method::fednova, Method::scaffold})
        if (s == method_name(m)) return m;
    throw std::invalid_argument("unknown method '" + s +
                                "' (expected fedd3_kip, fedd3_coreset, fedavg, fedprox, fednova "
                                "or scaffold)");
}

inline bool is_fedd3(Method m) {
    return m == Method::fedd3_kip || m == Method::fedd3_coreset;
}

/// Upload volumes of one communication round, kept per client so both volume
/// accountings stay computable.
struct RoundVolume {
    std::vector<std::uint64_t> client_uplink_bits;
    std::uint64_t downlink_bits = 0;

    std::uint64_t uplink_total() const {
        return std::accumulate(client_uplink_bits.begin(), client_uplink_bits.end(),
                               std::uint64_t{0});
    }
};

/// How round volumes enter the efficiency denominator: one log term per round
/// over the summed volume (default), or one log term per client upload.
enum class VolumeAccounting { summed_clients, per_client_logs };

inline const char* volume_accounting_name(VolumeAccounting a) {
    return a == VolumeAccounting::summed_clients ? "summed_clients" : "per_client_logs";
}

struct CommLedger {
    std::string method;
    std::vector<RoundVolume> rounds;

    void add_round(RoundVolume v) { rounds.push_back(std::move(v)); }

    std::uint64_t total_uplink_bits() const {
        std::uint64_t t = 0;
        for (const auto& r : rounds) t += r.uplink_total();
        return t;
    }
    std::uint64_t total_downlink_bits() const {
        std::uint64_t t = 0;
        for (const auto& r : rounds) t += r.downlink_bits;
        return t;
    }

    double sum_log2_terms(VolumeAccounting acct = VolumeAccounting::summed_clients) const {
        double s = 0.0;
        for (const auto& r : rounds) {
            if (acct == VolumeAccounting::summed_clients) {
                s += std::log2(static_cast<double>(r.uplink_total()) + 1.0);
            } else {
                for (std::uint64_t v : r.client_uplink_bits)
                    s += std::log2(static_cast<double>(v) + 1.0);
            }
        }
        return s;
    }
};

/// Per-client per-round model upload cost in bits, 32 bits per parameter.
/// FedNova adds its normalization scalar, SCAFFOLD ships the control variate
/// alongside the weights.
inline std::uint64_t model_uplink_bits(long param_count, Method method) {
    if (param_count < 1) throw std::invalid_argument("model_uplink_bits: param_count >= 1");
    const std::uint64_t p = 32ull * static_cast<std::uint64_t>(param_count);
    switch (method) {
        case Method::fedavg:
        case Method::fedprox: return p;
        case Method::fednova: return p + 8;
        case Method::scaffold: return 2 * p;
        default:
            throw std::invalid_argument(
                "model_uplink_bits: method does not upload model weights");
    }
}

inline std::uint64_t label_bits(int num_classes) {
    if (num_classes < 1) throw std::invalid_argument("label_bits: num_classes >= 1");
    std::uint64_t bits = 0;
    while ((1ull << bits) < static_cast<std::uint64_t>(num_classes)) ++bits;
    return bits;  // ceil(log2 S), 0 for a single class
}

/// Distilled upload cost: bit_depth bits per stored coordinate (channels are
/// already folded into the flattened dimension; the argument only validates
/// divisibility) plus ceil(log2 S) bits per label.
inline std::uint64_t distilled_uplink_bits(Index rows, Index dim, int channels, int bit_depth,
                                           int num_classes) {
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("distilled_uplink_bits: channels must be 1 or 3");
    if (dim % channels != 0)
        throw std::invalid_argument("distilled_uplink_bits: dim not divisible by channels");
    if (bit_depth < 1) throw std::invalid_argument("distilled_uplink_bits: bit_depth >= 1");
    if (rows == 0) return 0;
    return static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(dim) *
               static_cast<std::uint64_t>(bit_depth) +
           static_cast<std::uint64_t>(rows) * label_bits(num_classes);
}

inline std::uint64_t distilled_uplink_bits(const DistilledDataset& upload, int channels = 1,
                                           int bit_depth = 8) {
    return distilled_uplink_bits(upload.size(), upload.points.cols(), channels, bit_depth,
                                 upload.num_classes);
}

struct GceParams {
    double gamma = 1.0;
    VolumeAccounting accounting = VolumeAccounting::summed_clients;

    void validate() const {
        if (!(gamma > 0.0)) throw std::invalid_argument("GceParams: gamma must be > 0");
    }
};

/// Communication efficiency: ACC / ((1-ACC)^gamma * sum of log2 volume terms).
/// ACC = 1 is a pole of the formula and is rejected rather than clamped.
inline double gce(double acc, const GceParams& params, const CommLedger& ledger) {
    params.validate();
    if (!(acc >= 0.0 && acc < 1.0))
        throw std::invalid_argument("gce: accuracy must lie in [0, 1); the formula has a pole at 1");
    if (ledger.rounds.empty()) throw std::invalid_argument("gce: empty ledger");
    double denom_log = ledger.sum_log2_terms(params.accounting);
    if (!(denom_log > 0.0)) throw std::invalid_argument("gce: zero communication volume");
    return acc / (std::pow(1.0 - acc, params.gamma) * denom_log);
}

/// CSV export, one row per round. The log2 term column uses the summed-client
/// accounting that also drives the default efficiency metric.
inline void write_ledger_csv(const std::string& path, const CommLedger& ledger) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_ledger_csv: cannot create " + path);
    out << "round,method,uplink_bits,downlink_bits,log2_term\n";
    for (std::size_t t = 0; t < ledger.rounds.size(); ++t) {
        const auto& r = ledger.rounds[t];
        out << (t + 1) << ',' << ledger.method << ',' << r.uplink_total() << ','
            << r.downlink_bits << ','
            << std::log2(static_cast<double>(r.uplink_total()) + 1.0) << '\n';
    }
    if (!out) throw std::runtime_error("write_ledger_csv: write failed for " + path);
}

}  // namespace distillfed
