#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "distillfed/comm.hpp"
#include "distillfed/dataset.hpp"
#include "distillfed/distill.hpp"
#include "distillfed/mlp.hpp"
#include "distillfed/rng.hpp"

namespace distillfed {

enum class Shots { one_shot, multi_shot };
enum class PartitionMode { iid, pathological };

inline const char* shots_name(Shots s) {
    return s == Shots::one_shot ? "one_shot" : "multi_shot";
}
inline const char* partition_name(PartitionMode p) {
    return p == PartitionMode::iid ? "iid" : "pathological";
}

struct FedConfig {
    Method method = Method::fedavg;
    Shots shots = Shots::one_shot;
    int rounds = 1;
    int num_clients = 1;
    PartitionMode partition = PartitionMode::iid;
    int classes_per_client = 1;  // pathological partitions only

    int local_epochs = 1;
    TrainConfig local_train;   // per-round client optimizer (epochs and seed are set per client)
    TrainConfig server_train;  // server training on the distilled pool
    std::vector<int> hidden;   // MLP hidden widths
    double prox_mu = 0.1;      // applied when method == fedprox

    DistillConfig distill;  // applied when the run distills (fedd3 or hybrid)

    double straggler_drop_rate = 0.0;
    bool hybrid = false;
    bool pre_aggregation = false;  // extra aggregation round before a one-shot baseline round

    int bit_depth = 8;  // distilled payload pricing
    int channels = 1;

    std::uint64_t seed = 0;

    int effective_rounds() const { return shots == Shots::one_shot ? 1 : rounds; }

    void validate() const {
        if (rounds < 1) throw std::invalid_argument("FedConfig: rounds >= 1");
        if (shots == Shots::one_shot && rounds != 1)
            throw std::invalid_argument("FedConfig: one_shot runs exactly one round");
        if (num_clients < 1) throw std::invalid_argument("FedConfig: num_clients >= 1");
        if (classes_per_client < 1) throw std::invalid_argument("FedConfig: classes_per_client >= 1");
        if (local_epochs < 1) throw std::invalid_argument("FedConfig: local_epochs >= 1");
        if (!(straggler_drop_rate >= 0.0 && straggler_drop_rate < 1.0))
            throw std::invalid_argument("FedConfig: straggler_drop_rate in [0, 1)");
        if (prox_mu < 0.0) throw std::invalid_argument("FedConfig: prox_mu >= 0");
        if (hybrid && shots != Shots::multi_shot)
            throw std::invalid_argument("FedConfig: hybrid requires multi_shot");
        if (hybrid && !is_fedd3(method))
            throw std::invalid_argument("FedConfig: hybrid requires a fedd3 method for distillation");
        if (!hybrid && is_fedd3(method) && shots != Shots::one_shot)
            throw std::invalid_argument("FedConfig: fedd3 is one-shot unless hybrid is set");
        if (pre_aggregation && (shots != Shots::one_shot || is_fedd3(method)))
            throw std::invalid_argument(
                "FedConfig: pre_aggregation only applies to one-shot baselines");
        if (method == Method::scaffold && !(local_train.lr > 0.0))
            throw std::invalid_argument("FedConfig: scaffold needs a positive local learning rate");
        local_train.validate();
        server_train.validate();
        if (is_fedd3(method)) distill.validate();
    }
};

/// Method tag used in ledgers, reports and sweep CSVs.
inline std::string run_method_tag(const FedConfig& cfg) {
    if (!cfg.hybrid) return method_name(cfg.method);
    return cfg.method == Method::fedd3_kip ? "hybrid_kip" : "hybrid_coreset";
}

struct ClientState {
    int id = 0;
    Dataset data;
    Weights control;        // SCAFFOLD control variate; zero-initialized on first use
    Dataset received_pool;  // hybrid: distilled pool excluding this client's upload
};

/// Per-client distillation summary carried into reports.
struct DistillStats {
    int client_id = 0;
    std::string instance;
    Index points = 0;
    int epochs_used = 0;
    double accuracy_init = 0.0;
    double accuracy_final = 0.0;
    std::uint64_t uplink_bits = 0;
};

struct RunReport {
    std::string method;
    std::uint64_t seed = 0;
    std::vector<double> round_accuracy;  // test accuracy after each executed round
    double final_accuracy = 0.0;
    CommLedger ledger;
    Weights final_weights;
    std::vector<DistillStats> distill_stats;
    std::vector<std::string> events;  // skipped rounds, excluded clients, protocol notes
    double wall_time_sec = 0.0;
};

/// Seeded Bernoulli survival, independent per (seed, round, client) so the
/// draw does not depend on how many clients exist or which order they run in.
inline std::vector<int> apply_stragglers(int num_clients, double drop_rate, int round,
                                         std::uint64_t seed) {
    if (num_clients < 1) throw std::invalid_argument("apply_stragglers: num_clients >= 1");
    if (!(drop_rate >= 0.0 && drop_rate < 1.0))
        throw std::invalid_argument("apply_stragglers: drop_rate in [0, 1)");
    std::vector<int> survivors;
    survivors.reserve(static_cast<std::size_t>(num_clients));
    for (int k = 0; k < num_clients; ++k) {
        if (drop_rate == 0.0) {
            survivors.push_back(k);
            continue;
        }
        auto rng = make_rng(derive_seed(seed, kSeedStraggler, round, k));
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        if (uni(rng) >= drop_rate) survivors.push_back(k);
    }
    return survivors;
}

/// Pools client uploads into one distilled dataset, rows grouped by client in
/// ascending id order so the result does not depend on arrival order.
inline DistilledDataset aggregate_distilled(std::vector<DistilledDataset> uploads) {
    if (uploads.empty()) throw std::invalid_argument("aggregate_distilled: no uploads");
    std::sort(uploads.begin(), uploads.end(),
              [](const DistilledDataset& a, const DistilledDataset& b) {
                  return a.client_id < b.client_id;
              });
    const Index d = uploads.front().points.cols();
    const int s = uploads.front().num_classes;
    Index total = 0;
    for (const auto& u : uploads) {
        if (u.points.cols() != d)
            throw std::invalid_argument("aggregate_distilled: dimension mismatch across clients");
        if (u.num_classes != s)
            throw std::invalid_argument("aggregate_distilled: class-count mismatch across clients");
        total += u.size();
    }
    DistilledDataset pool;
    pool.points = Matrix(total, d);
    pool.labels.reserve(static_cast<std::size_t>(total));
    pool.num_classes = s;
    pool.client_id = -1;
    pool.instance = uploads.front().instance;
    Index row = 0;
    for (const auto& u : uploads) {
        if (u.instance != pool.instance) pool.instance = "mixed";
        pool.points.middleRows(row, u.size()) = u.points;
        pool.labels.insert(pool.labels.end(), u.labels.begin(), u.labels.end());
        row += u.size();
    }
    return pool;
}

namespace detail {

/// Index order that visits clients by ascending id; also checks ids form
/// exactly 0..m-1 so every per-client seed stream is well defined.
inline std::vector<int> canonical_client_order(const std::vector<ClientState>& clients) {
    std::vector<int> order(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return clients[(std::size_t)a].id < clients[(std::size_t)b].id; });
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (clients[(std::size_t)order[rank]].id != static_cast<int>(rank))
            throw std::invalid_argument("federation: client ids must be exactly 0..m-1");
    }
    return order;
}

inline void check_clients(const std::vector<ClientState>& clients, const Dataset& test) {
    if (clients.empty()) throw std::invalid_argument("federation: no clients");
    test.validate();
    for (const auto& c : clients) {
        c.data.validate();
        if (c.data.dim() != test.dim())
            throw std::invalid_argument("federation: client/test dimension mismatch");
        if (c.data.num_classes != test.num_classes)
            throw std::invalid_argument("federation: client/test class-count mismatch");
    }
}

inline ModelSpec model_spec_for(const FedConfig& cfg, const Dataset& test) {
    ModelSpec spec;
    spec.widths.push_back(static_cast<int>(test.dim()));
    spec.widths.insert(spec.widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    spec.widths.push_back(test.num_classes);
    spec.seed = cfg.seed;
    return spec;
}

inline Dataset concat_datasets(const Dataset& a, const Dataset& b) {
    if (a.size() == 0) return b;
    if (b.size() == 0) return a;
    if (a.dim() != b.dim() || a.num_classes != b.num_classes)
        throw std::invalid_argument("concat_datasets: shape mismatch");
    Dataset out;
    out.features = Matrix(a.size() + b.size(), a.dim());
    out.features.topRows(a.size()) = a.features;
    out.features.bottomRows(b.size()) = b.features;
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.num_classes = a.num_classes;
    return out;
}

/// Runs distillation for the listed clients in parallel with per-client seed
/// streams; any failure aborts the run, reported for the lowest failing id.
inline std::vector<DistilledDataset> distill_clients(const std::vector<ClientState>& clients,
                                                     const std::vector<int>& ids,
                                                     const std::vector<int>& order,
                                                     const FedConfig& cfg, int jobs) {
    std::vector<DistilledDataset> uploads(ids.size());
    std::vector<std::string> errors(ids.size());
    parallel_for(static_cast<int>(ids.size()), jobs, [&](int i) {
        const int id = ids[(std::size_t)i];
        const ClientState& client = clients[(std::size_t)order[(std::size_t)id]];
        DistillConfig dc = cfg.distill;
        dc.instance = cfg.method == Method::fedd3_kip ? DistillInstance::kip
                                                      : DistillInstance::coreset_gmm;
        dc.seed = derive_seed(cfg.seed, kSeedClientDistill, id);
        try {
            DistilledDataset up = distill(client.data, dc);
            up.client_id = id;
            uploads[(std::size_t)i] = std::move(up);
        } catch (const std::exception& e) {
            errors[(std::size_t)i] = e.what();
        }
    });
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i].empty())
            throw std::runtime_error("distillation failed on client " + std::to_string(ids[i]) +
                                     ": " + errors[i]);
    }
    return uploads;
}

inline DistillStats stats_for(const DistilledDataset& up, std::uint64_t bits) {
    DistillStats st;
    st.client_id = up.client_id;
    st.instance = up.instance;
    st.points = up.size();
    st.epochs_used = up.epochs_used;
    st.accuracy_init = up.accuracy_init;
    st.accuracy_final = up.accuracy_final;
    st.uplink_bits = bits;
    return st;
}

}  // namespace detail

/// One-shot pipeline: every surviving client distills once and uploads; the
/// server trains on the pooled synthetic data. Exactly one ledger round.
inline RunReport run_fedd3(std::vector<ClientState>& clients, const FedConfig& cfg,
                           const Dataset& test, int jobs = 1) {
    cfg.validate();
    if (!is_fedd3(cfg.method)) throw std::invalid_argument("run_fedd3: method must be fedd3_*");
    detail::check_clients(clients, test);
    const auto order = detail::canonical_client_order(clients);
    const int m = static_cast<int>(clients.size());

    RunReport report;
    report.method = run_method_tag(cfg);
    report.seed = cfg.seed;
    report.ledger.method = report.method;

    Weights weights = mlp_init(detail::model_spec_for(cfg, test));
    const auto survivors = apply_stragglers(m, cfg.straggler_drop_rate, 1, cfg.seed);
    if (survivors.empty()) {
        report.events.push_back("round 1 skipped: all clients dropped");
        report.ledger.add_round({{}, 0});
    } else {
        auto uploads = detail::distill_clients(clients, survivors, order, cfg, jobs);
        RoundVolume vol;
        for (const auto& up : uploads) {
            const std::uint64_t bits = distilled_uplink_bits(up, cfg.channels, cfg.bit_depth);
            vol.client_uplink_bits.push_back(bits);
            report.distill_stats.push_back(detail::stats_for(up, bits));
        }
        report.ledger.add_round(std::move(vol));
        DistilledDataset pool = aggregate_distilled(std::move(uploads));
        TrainConfig server = cfg.server_train;
        server.seed = derive_seed(cfg.seed, kSeedServerTrain);
        weights = sgd_train(std::move(weights), pool.as_dataset(), server).weights;
    }
    report.round_accuracy.push_back(evaluate(weights, test));
    report.final_accuracy = report.round_accuracy.back();
    report.final_weights = std::move(weights);
    return report;
}

namespace detail {

struct LocalOutcome {
    bool ok = false;
    TrainResult result;
    std::string error;
};

/// One synchronous aggregation round shared by the baselines and the hybrid
/// pipeline. Trains `ids` from `global`, aggregates per method, appends the
/// ledger round (uplink per contributing client, plus `extra_uplink` and
/// `downlink` bookkeeping supplied by the caller), and logs exclusions.
inline void baseline_round(std::vector<ClientState>& clients, const std::vector<int>& ids,
                           const std::vector<int>& order, const FedConfig& cfg, int round,
                           const std::vector<const Dataset*>& train_sets, Weights& global,
                           Weights& server_control, RunReport& report,
                           const std::vector<std::uint64_t>& extra_uplink, std::uint64_t downlink,
                           Method agg_method, int jobs) {
    const double eta = cfg.local_train.lr;
    std::vector<LocalOutcome> outcomes(ids.size());
    std::vector<Weights> corrections(ids.size());
    if (agg_method == Method::scaffold) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            ClientState& c = clients[(std::size_t)order[(std::size_t)ids[i]]];
            if (c.control.layers() == 0) c.control = Weights::zeros_like(global);
            corrections[i] = server_control - c.control;
        }
    }
    parallel_for(static_cast<int>(ids.size()), jobs, [&](int i) {
        const int id = ids[(std::size_t)i];
        TrainConfig lt = cfg.local_train;
        lt.epochs = cfg.local_epochs;
        lt.seed = derive_seed(cfg.seed, kSeedClientTrain, round, id);
        if (agg_method == Method::fedprox) {
            lt.prox_mu = cfg.prox_mu;
            lt.prox_anchor = &global;
        }
        if (agg_method == Method::scaffold) lt.correction = &corrections[(std::size_t)i];
        try {
            TrainResult res = sgd_train(global, *train_sets[(std::size_t)i], lt);
            if (!res.weights.all_finite()) throw NumericError("non-finite local weights");
            outcomes[(std::size_t)i].result = std::move(res);
            outcomes[(std::size_t)i].ok = true;
        } catch (const NumericError& e) {
            outcomes[(std::size_t)i].error = e.what();
        }
    });

    std::vector<std::size_t> contributors;
    double n_total = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (outcomes[i].ok) {
            contributors.push_back(i);
            n_total += static_cast<double>(train_sets[i]->size());
        } else {
            report.events.push_back("round " + std::to_string(round) + ": client " +
                                    std::to_string(ids[i]) + " excluded (" + outcomes[i].error +
                                    ")");
        }
    }
    if (contributors.empty()) {
        report.events.push_back("round " + std::to_string(round) +
                                " skipped: no client produced a usable update");
        report.ledger.add_round({{}, downlink});
        return;
    }

    const long params = global.param_count();
    RoundVolume vol;
    vol.downlink_bits = downlink;
    if (agg_method == Method::fedavg || agg_method == Method::fedprox) {
        Weights next = Weights::zeros_like(global);
        for (std::size_t i : contributors) {
            const double p = static_cast<double>(train_sets[i]->size()) / n_total;
            next += p * outcomes[i].result.weights;
        }
        global = std::move(next);
    } else if (agg_method == Method::fednova) {
        Weights direction = Weights::zeros_like(global);
        double tau_eff = 0.0;
        for (std::size_t i : contributors) {
            const double p = static_cast<double>(train_sets[i]->size()) / n_total;
            const double tau = static_cast<double>(outcomes[i].result.steps);
            direction += (p / tau) * (global - outcomes[i].result.weights);
            tau_eff += p * tau;
        }
        global -= tau_eff * direction;
    } else if (agg_method == Method::scaffold) {
        Weights delta_w = Weights::zeros_like(global);
        Weights delta_c = Weights::zeros_like(global);
        for (std::size_t i : contributors) {
            ClientState& c = clients[(std::size_t)order[(std::size_t)ids[i]]];
            const double p = static_cast<double>(train_sets[i]->size()) / n_total;
            const double tau = static_cast<double>(outcomes[i].result.steps);
            Weights control_next =
                c.control - server_control + (1.0 / (tau * eta)) * (global - outcomes[i].result.weights);
            delta_w += p * (outcomes[i].result.weights - global);
            delta_c += p * (control_next - c.control);
            c.control = std::move(control_next);
        }
        global += delta_w;  // server learning rate 1
        server_control += delta_c;
    } else {
        throw std::invalid_argument("baseline_round: not an aggregating method");
    }
    for (std::size_t i : contributors)
        vol.client_uplink_bits.push_back(model_uplink_bits(params, agg_method) +
                                         extra_uplink[i]);
    report.ledger.add_round(std::move(vol));
}

}  // namespace detail

/// Multi-round (or one-shot) baseline runner for FedAvg, FedProx, FedNova and
/// SCAFFOLD: broadcast, local epochs, aggregate, evaluate, every round.
inline RunReport run_fl(std::vector<ClientState>& clients, const FedConfig& cfg,
                        const Dataset& test, int jobs = 1) {
    cfg.validate();
    if (is_fedd3(cfg.method) || cfg.hybrid)
        throw std::invalid_argument("run_fl: method must be a weight-averaging baseline");
    detail::check_clients(clients, test);
    const auto order = detail::canonical_client_order(clients);
    const int m = static_cast<int>(clients.size());

    RunReport report;
    report.method = run_method_tag(cfg);
    report.seed = cfg.seed;
    report.ledger.method = report.method;

    Weights global = mlp_init(detail::model_spec_for(cfg, test));
    Weights server_control = Weights::zeros_like(global);
    const std::uint64_t p_bits = 32ull * static_cast<std::uint64_t>(global.param_count());
    const std::uint64_t broadcast_bits = cfg.method == Method::scaffold ? 2 * p_bits : p_bits;

    auto run_round = [&](int round, const std::vector<int>& ids) {
        std::vector<const Dataset*> train_sets;
        for (int id : ids)
            train_sets.push_back(&clients[(std::size_t)order[(std::size_t)id]].data);
        std::vector<std::uint64_t> extra(ids.size(), 0);
        detail::baseline_round(clients, ids, order, cfg, round, train_sets, global,
                               server_control, report,
                               extra, broadcast_bits * ids.size(), cfg.method, jobs);
        report.round_accuracy.push_back(evaluate(global, test));
    };

    if (cfg.pre_aggregation) {
        // warm-up aggregation over all clients before the one-shot round; a
        // real communication round, so it is ledgered like any other
        report.events.push_back("pre-aggregation round executed before the one-shot round");
        std::vector<int> everyone;
        for (int k = 0; k < m; ++k) everyone.push_back(k);
        run_round(0, everyone);
    }
    for (int t = 1; t <= cfg.effective_rounds(); ++t) {
        auto survivors = apply_stragglers(m, cfg.straggler_drop_rate, t, cfg.seed);
        if (survivors.empty()) {
            report.events.push_back("round " + std::to_string(t) +
                                    " skipped: all clients dropped");
            report.ledger.add_round({{}, 0});
            report.round_accuracy.push_back(evaluate(global, test));
            continue;
        }
        run_round(t, survivors);
    }
    report.final_accuracy = report.round_accuracy.back();
    report.final_weights = std::move(global);
    return report;
}

/// Hybrid pipeline: clients distill and upload in round 1, the server ships
/// each client the pool minus its own contribution, and every local epoch of
/// every round trains on own data plus the received pool. FedAvg aggregation.
inline RunReport run_hybrid(std::vector<ClientState>& clients, const FedConfig& cfg,
                            const Dataset& test, int jobs = 1) {
    cfg.validate();
    if (!cfg.hybrid) throw std::invalid_argument("run_hybrid: hybrid flag not set");
    detail::check_clients(clients, test);
    const auto order = detail::canonical_client_order(clients);
    const int m = static_cast<int>(clients.size());

    RunReport report;
    report.method = run_method_tag(cfg);
    report.seed = cfg.seed;
    report.ledger.method = report.method;

    Weights global = mlp_init(detail::model_spec_for(cfg, test));
    Weights server_control = Weights::zeros_like(global);  // unused by fedavg aggregation
    const std::uint64_t p_bits = 32ull * static_cast<std::uint64_t>(global.param_count());

    // distillation happens once, by the survivors of round 1
    const auto first_round = apply_stragglers(m, cfg.straggler_drop_rate, 1, cfg.seed);
    std::vector<DistilledDataset> uploads;
    std::vector<std::uint64_t> upload_bits(static_cast<std::size_t>(m), 0);
    if (!first_round.empty()) {
        uploads = detail::distill_clients(clients, first_round, order, cfg, jobs);
        for (const auto& up : uploads) {
            const std::uint64_t bits = distilled_uplink_bits(up, cfg.channels, cfg.bit_depth);
            upload_bits[(std::size_t)up.client_id] = bits;
            report.distill_stats.push_back(detail::stats_for(up, bits));
        }
    }
    std::uint64_t pool_bits_total = 0;
    for (std::uint64_t b : upload_bits) pool_bits_total += b;

    // per-client training set: own data plus everyone else's distilled points
    std::vector<Dataset> train_sets(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
        std::vector<DistilledDataset> others;
        for (const auto& up : uploads)
            if (up.client_id != k) others.push_back(up);
        Dataset& slot = train_sets[(std::size_t)k];
        const Dataset& own = clients[(std::size_t)order[(std::size_t)k]].data;
        if (others.empty()) {
            slot = own;
        } else {
            DistilledDataset pool = aggregate_distilled(std::move(others));
            slot = detail::concat_datasets(own, pool.as_dataset());
            clients[(std::size_t)order[(std::size_t)k]].received_pool = pool.as_dataset();
        }
    }

    std::vector<char> served(static_cast<std::size_t>(m), 0);
    for (int t = 1; t <= cfg.effective_rounds(); ++t) {
        auto survivors = t == 1 ? first_round
                                : apply_stragglers(m, cfg.straggler_drop_rate, t, cfg.seed);
        if (survivors.empty()) {
            report.events.push_back("round " + std::to_string(t) +
                                    " skipped: all clients dropped");
            report.ledger.add_round({{}, 0});
            report.round_accuracy.push_back(evaluate(global, test));
            continue;
        }
        std::vector<const Dataset*> sets;
        std::vector<std::uint64_t> extra(survivors.size(), 0);
        std::uint64_t downlink = 0;
        for (std::size_t i = 0; i < survivors.size(); ++i) {
            const int id = survivors[i];
            sets.push_back(&train_sets[(std::size_t)id]);
            downlink += p_bits;
            if (!served[(std::size_t)id]) {
                // first participation: the pool minus the client's own upload
                // rides along with the weight broadcast
                downlink += pool_bits_total - upload_bits[(std::size_t)id];
                served[(std::size_t)id] = 1;
            }
            if (t == 1) extra[i] = upload_bits[(std::size_t)id];
        }
        detail::baseline_round(clients, survivors, order, cfg, t, sets, global, server_control,
                               report, extra, downlink, Method::fedavg, jobs);
        report.round_accuracy.push_back(evaluate(global, test));
    }
    report.final_accuracy = report.round_accuracy.back();
    report.final_weights = std::move(global);
    return report;
}

/// Entry point used by the experiment runner.
inline RunReport run_federated(std::vector<ClientState>& clients, const FedConfig& cfg,
                               const Dataset& test, int jobs = 1) {
    cfg.validate();
    if (cfg.hybrid) return run_hybrid(clients, cfg, test, jobs);
    if (is_fedd3(cfg.method)) return run_fedd3(clients, cfg, test, jobs);
    return run_fl(clients, cfg, test, jobs);
}

/// Builds client states from a partition of a training set.
inline std::vector<ClientState> make_clients(const Dataset& train, const Partition& part) {
    std::vector<ClientState> clients;
    clients.reserve(part.assignments.size());
    for (int k = 0; k < part.num_clients(); ++k) {
        ClientState c;
        c.id = k;
        c.data = train.subset(part.assignments[(std::size_t)k]);
        clients.push_back(std::move(c));
    }
    return clients;
}

}  // namespace distillfed
