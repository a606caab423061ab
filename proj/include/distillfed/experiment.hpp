#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "distillfed/federation.hpp"
#include "distillfed/idx.hpp"
#include "distillfed/report.hpp"

namespace distillfed {

struct DataSource {
    enum class Kind { blobs, idx };
    Kind kind = Kind::blobs;
    BlobConfig blobs;  // the seed member is ignored; runs derive data seeds from the run seed
    std::string train_images, train_labels;
    std::string test_images, test_labels;  // optional; empty means split from train
    int num_classes = 0;                   // label-space size for idx sources

    int label_space() const {
        return kind == Kind::blobs ? blobs.num_classes : num_classes;
    }
};

struct SweepAxes {
    std::vector<int> imgs_per_class;
    std::vector<int> clients;
    std::vector<int> classes_per_client;
    std::vector<double> drop_rates;
    int global_distilled = 0;  // client sweep: total distilled points held fixed
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::vector<Method> methods;
    std::vector<std::uint64_t> seeds;
    std::vector<double> gammas{1.0};
    VolumeAccounting accounting = VolumeAccounting::summed_clients;
    DataSource data;
    double test_fraction = 0.2;
    FedConfig fed;  // method field is overridden per cell
    SweepAxes sweep;
    std::string output_dir = "out";

    void validate() const {
        if (methods.empty()) throw std::runtime_error("config: methods: must not be empty");
        if (seeds.empty()) throw std::runtime_error("config: seeds: must not be empty");
        if (gammas.empty()) throw std::runtime_error("config: gammas: must not be empty");
        for (double g : gammas)
            if (!(g > 0.0)) throw std::runtime_error("config: gammas: values must be > 0");
        if (!(test_fraction >= 0.0 && test_fraction < 1.0))
            throw std::runtime_error("config: test_fraction: must lie in [0, 1)");
        if (data.kind == DataSource::Kind::idx) {
            if (data.train_images.empty() || data.train_labels.empty())
                throw std::runtime_error("config: dataset: idx sources need images and labels");
            if (data.num_classes < 1)
                throw std::runtime_error("config: dataset.num_classes: required for idx sources");
            if (data.test_images.empty() != data.test_labels.empty())
                throw std::runtime_error(
                    "config: dataset: test_images and test_labels go together");
            if (data.test_images.empty() && test_fraction == 0.0)
                throw std::runtime_error(
                    "config: test_fraction: needed when no test files are given");
        } else {
            data.blobs.validate();
            if (test_fraction == 0.0)
                throw std::runtime_error("config: test_fraction: blobs runs need a test split");
        }
    }
};

namespace cfgdetail {

[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
    throw std::runtime_error("config: " + where + ": " + what);
}

inline const json* find(const json& j, const std::string& key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

inline const json& need(const json& j, const std::string& key, const std::string& ctx) {
    if (!j.is_object()) fail(ctx, "expected an object");
    const json* f = find(j, key);
    if (!f) fail(ctx + "." + key, "missing required field");
    return *f;
}

inline double num(const json& j, const std::string& where) {
    if (!j.is_number()) fail(where, "expected a number");
    return j.get<double>();
}
inline int integer(const json& j, const std::string& where) {
    if (!j.is_number_integer()) fail(where, "expected an integer");
    return j.get<int>();
}
inline bool boolean(const json& j, const std::string& where) {
    if (!j.is_boolean()) fail(where, "expected true or false");
    return j.get<bool>();
}
inline std::string str(const json& j, const std::string& where) {
    if (!j.is_string()) fail(where, "expected a string");
    return j.get<std::string>();
}

inline double opt_num(const json& j, const std::string& key, const std::string& ctx, double dflt) {
    const json* f = find(j, key);
    return f ? num(*f, ctx + "." + key) : dflt;
}
inline int opt_int(const json& j, const std::string& key, const std::string& ctx, int dflt) {
    const json* f = find(j, key);
    return f ? integer(*f, ctx + "." + key) : dflt;
}
inline bool opt_bool(const json& j, const std::string& key, const std::string& ctx, bool dflt) {
    const json* f = find(j, key);
    return f ? boolean(*f, ctx + "." + key) : dflt;
}
inline std::string opt_str(const json& j, const std::string& key, const std::string& ctx,
                           const std::string& dflt) {
    const json* f = find(j, key);
    return f ? str(*f, ctx + "." + key) : dflt;
}

template <typename T, typename Fn>
std::vector<T> list_of(const json& j, const std::string& where, Fn elem) {
    if (!j.is_array()) fail(where, "expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < j.size(); ++i) elem(j[i], where + "[" + std::to_string(i) + "]", out);
    return out;
}

inline std::vector<int> int_list(const json& j, const std::string& where) {
    return list_of<int>(j, where, [](const json& e, const std::string& w, std::vector<int>& out) {
        out.push_back(integer(e, w));
    });
}
inline std::vector<double> num_list(const json& j, const std::string& where) {
    return list_of<double>(j, where,
                           [](const json& e, const std::string& w, std::vector<double>& out) {
                               out.push_back(num(e, w));
                           });
}

inline TrainConfig train_config(const json& j, const std::string& ctx, const TrainConfig& dflt) {
    TrainConfig out = dflt;
    out.lr = opt_num(j, "lr", ctx, dflt.lr);
    out.momentum = opt_num(j, "momentum", ctx, dflt.momentum);
    out.batch_size = opt_int(j, "batch_size", ctx, dflt.batch_size);
    out.epochs = opt_int(j, "epochs", ctx, dflt.epochs);
    return out;
}

}  // namespace cfgdetail

inline ExperimentConfig experiment_config_from_json(const json& doc) {
    using namespace cfgdetail;
    ExperimentConfig cfg;
    if (!doc.is_object()) fail("(root)", "expected a JSON object");
    cfg.name = opt_str(doc, "name", "(root)", cfg.name);
    cfg.output_dir = opt_str(doc, "output_dir", "(root)", cfg.output_dir);

    const json& methods = need(doc, "methods", "(root)");
    if (!methods.is_array()) fail("methods", "expected an array");
    for (std::size_t i = 0; i < methods.size(); ++i) {
        const std::string where = "methods[" + std::to_string(i) + "]";
        try {
            cfg.methods.push_back(method_from_string(str(methods[i], where)));
        } catch (const std::invalid_argument& e) {
            fail(where, e.what());
        }
    }
    const json& seeds = need(doc, "seeds", "(root)");
    if (!seeds.is_array()) fail("seeds", "expected an array");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const std::string where = "seeds[" + std::to_string(i) + "]";
        if (!seeds[i].is_number_integer() || seeds[i].get<std::int64_t>() < 0)
            fail(where, "expected a nonnegative integer");
        cfg.seeds.push_back(seeds[i].get<std::uint64_t>());
    }
    if (const json* g = find(doc, "gammas")) cfg.gammas = num_list(*g, "gammas");
    if (const json* acct = find(doc, "volume_accounting")) {
        std::string s = str(*acct, "volume_accounting");
        if (s == "summed_clients") cfg.accounting = VolumeAccounting::summed_clients;
        else if (s == "per_client_logs") cfg.accounting = VolumeAccounting::per_client_logs;
        else fail("volume_accounting", "expected summed_clients or per_client_logs");
    }
    cfg.test_fraction = opt_num(doc, "test_fraction", "(root)", cfg.test_fraction);

    const json& data = need(doc, "dataset", "(root)");
    std::string kind = str(need(data, "type", "dataset"), "dataset.type");
    if (kind == "blobs") {
        cfg.data.kind = DataSource::Kind::blobs;
        cfg.data.blobs.num_classes = integer(need(data, "num_classes", "dataset"), "dataset.num_classes");
        cfg.data.blobs.dim = integer(need(data, "dim", "dataset"), "dataset.dim");
        cfg.data.blobs.points_per_class =
            integer(need(data, "points_per_class", "dataset"), "dataset.points_per_class");
        cfg.data.blobs.center_spread =
            opt_num(data, "center_spread", "dataset", cfg.data.blobs.center_spread);
        cfg.data.blobs.within_std = opt_num(data, "within_std", "dataset", cfg.data.blobs.within_std);
    } else if (kind == "idx") {
        cfg.data.kind = DataSource::Kind::idx;
        cfg.data.train_images = str(need(data, "images", "dataset"), "dataset.images");
        cfg.data.train_labels = str(need(data, "labels", "dataset"), "dataset.labels");
        cfg.data.test_images = opt_str(data, "test_images", "dataset", "");
        cfg.data.test_labels = opt_str(data, "test_labels", "dataset", "");
        cfg.data.num_classes = opt_int(data, "num_classes", "dataset", 0);
    } else {
        fail("dataset.type", "expected blobs or idx");
    }

    const json& fed = need(doc, "federation", "(root)");
    std::string shots = opt_str(fed, "shots", "federation", "one_shot");
    if (shots == "one_shot") cfg.fed.shots = Shots::one_shot;
    else if (shots == "multi_shot") cfg.fed.shots = Shots::multi_shot;
    else fail("federation.shots", "expected one_shot or multi_shot");
    cfg.fed.rounds = opt_int(fed, "rounds", "federation", cfg.fed.shots == Shots::one_shot ? 1 : 10);
    cfg.fed.num_clients = opt_int(fed, "num_clients", "federation", 1);
    std::string part = opt_str(fed, "partition", "federation", "iid");
    if (part == "iid") cfg.fed.partition = PartitionMode::iid;
    else if (part == "pathological") cfg.fed.partition = PartitionMode::pathological;
    else fail("federation.partition", "expected iid or pathological");
    cfg.fed.classes_per_client = opt_int(fed, "classes_per_client", "federation", 1);
    cfg.fed.local_epochs = opt_int(fed, "local_epochs", "federation", 1);
    cfg.fed.prox_mu = opt_num(fed, "prox_mu", "federation", cfg.fed.prox_mu);
    cfg.fed.straggler_drop_rate = opt_num(fed, "straggler_drop_rate", "federation", 0.0);
    cfg.fed.hybrid = opt_bool(fed, "hybrid", "federation", false);
    cfg.fed.pre_aggregation = opt_bool(fed, "pre_aggregation", "federation", false);
    cfg.fed.bit_depth = opt_int(fed, "bit_depth", "federation", 8);
    cfg.fed.channels = opt_int(fed, "channels", "federation", 1);
    if (const json* hidden = find(fed, "hidden"))
        cfg.fed.hidden = cfgdetail::int_list(*hidden, "federation.hidden");
    if (const json* local = find(fed, "local"))
        cfg.fed.local_train = cfgdetail::train_config(*local, "federation.local", cfg.fed.local_train);
    if (const json* server = find(fed, "server"))
        cfg.fed.server_train =
            cfgdetail::train_config(*server, "federation.server", cfg.fed.server_train);

    if (const json* distill = find(doc, "distill")) {
        const json& d = *distill;
        cfg.fed.distill.imgs_per_class = opt_int(d, "imgs_per_class", "distill", 1);
        cfg.fed.distill.distill_lr = opt_num(d, "lr", "distill", cfg.fed.distill.distill_lr);
        cfg.fed.distill.max_epochs = opt_int(d, "max_epochs", "distill", cfg.fed.distill.max_epochs);
        cfg.fed.distill.target_batch_frac =
            opt_num(d, "batch_frac", "distill", cfg.fed.distill.target_batch_frac);
        cfg.fed.distill.acc_threshold =
            opt_num(d, "threshold", "distill", cfg.fed.distill.acc_threshold);
        if (const json* kernel = find(d, "kernel")) {
            const json& k = *kernel;
            std::string kk = opt_str(k, "kind", "distill.kernel", "rbf");
            if (kk == "rbf") cfg.fed.distill.kernel.kind = KernelKind::rbf;
            else if (kk == "arccos_ntk") cfg.fed.distill.kernel.kind = KernelKind::arccos_ntk;
            else fail("distill.kernel.kind", "expected rbf or arccos_ntk");
            cfg.fed.distill.kernel.sigma =
                opt_num(k, "sigma", "distill.kernel", cfg.fed.distill.kernel.sigma);
            cfg.fed.distill.kernel.depth =
                opt_int(k, "depth", "distill.kernel", cfg.fed.distill.kernel.depth);
            std::string rm = opt_str(k, "reg_mode", "distill.kernel", "trace_scaled");
            if (rm == "absolute") cfg.fed.distill.kernel.reg_mode = RegMode::absolute;
            else if (rm == "trace_scaled") cfg.fed.distill.kernel.reg_mode = RegMode::trace_scaled;
            else fail("distill.kernel.reg_mode", "expected absolute or trace_scaled");
            cfg.fed.distill.kernel.reg =
                opt_num(k, "reg", "distill.kernel", cfg.fed.distill.kernel.reg);
        }
    }

    if (const json* sweep = find(doc, "sweep")) {
        const json& s = *sweep;
        if (const json* v = find(s, "imgs_per_class"))
            cfg.sweep.imgs_per_class = cfgdetail::int_list(*v, "sweep.imgs_per_class");
        if (const json* v = find(s, "clients"))
            cfg.sweep.clients = cfgdetail::int_list(*v, "sweep.clients");
        if (const json* v = find(s, "classes_per_client"))
            cfg.sweep.classes_per_client = cfgdetail::int_list(*v, "sweep.classes_per_client");
        if (const json* v = find(s, "drop_rates"))
            cfg.sweep.drop_rates = cfgdetail::num_list(*v, "sweep.drop_rates");
        cfg.sweep.global_distilled = opt_int(s, "global_distilled", "sweep", 0);
    }

    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_experiment_config(const std::string& path) {
    return experiment_config_from_json(read_json_file(path));
}

/// Normalized echo of a parsed config. Embedded in every report; parsing the
/// echo reproduces the config exactly.
inline json experiment_config_to_json(const ExperimentConfig& cfg) {
    json doc;
    doc["name"] = cfg.name;
    json methods = json::array();
    for (Method m : cfg.methods) methods.push_back(method_name(m));
    doc["methods"] = std::move(methods);
    doc["seeds"] = cfg.seeds;
    doc["gammas"] = cfg.gammas;
    doc["volume_accounting"] = volume_accounting_name(cfg.accounting);
    doc["output_dir"] = cfg.output_dir;
    doc["test_fraction"] = cfg.test_fraction;
    json data;
    if (cfg.data.kind == DataSource::Kind::blobs) {
        data["type"] = "blobs";
        data["num_classes"] = cfg.data.blobs.num_classes;
        data["dim"] = cfg.data.blobs.dim;
        data["points_per_class"] = cfg.data.blobs.points_per_class;
        data["center_spread"] = cfg.data.blobs.center_spread;
        data["within_std"] = cfg.data.blobs.within_std;
    } else {
        data["type"] = "idx";
        data["images"] = cfg.data.train_images;
        data["labels"] = cfg.data.train_labels;
        if (!cfg.data.test_images.empty()) {
            data["test_images"] = cfg.data.test_images;
            data["test_labels"] = cfg.data.test_labels;
        }
        data["num_classes"] = cfg.data.num_classes;
    }
    doc["dataset"] = std::move(data);
    json fed;
    fed["shots"] = shots_name(cfg.fed.shots);
    fed["rounds"] = cfg.fed.rounds;
    fed["num_clients"] = cfg.fed.num_clients;
    fed["partition"] = partition_name(cfg.fed.partition);
    fed["classes_per_client"] = cfg.fed.classes_per_client;
    fed["local_epochs"] = cfg.fed.local_epochs;
    fed["prox_mu"] = cfg.fed.prox_mu;
    fed["straggler_drop_rate"] = cfg.fed.straggler_drop_rate;
    fed["hybrid"] = cfg.fed.hybrid;
    fed["pre_aggregation"] = cfg.fed.pre_aggregation;
    fed["bit_depth"] = cfg.fed.bit_depth;
    fed["channels"] = cfg.fed.channels;
    fed["hidden"] = cfg.fed.hidden;
    fed["local"] = {{"lr", cfg.fed.local_train.lr},
                    {"momentum", cfg.fed.local_train.momentum},
                    {"batch_size", cfg.fed.local_train.batch_size}};
    fed["server"] = {{"lr", cfg.fed.server_train.lr},
                     {"momentum", cfg.fed.server_train.momentum},
                     {"batch_size", cfg.fed.server_train.batch_size},
                     {"epochs", cfg.fed.server_train.epochs}};
    doc["federation"] = std::move(fed);
    json distill;
    distill["imgs_per_class"] = cfg.fed.distill.imgs_per_class;
    distill["lr"] = cfg.fed.distill.distill_lr;
    distill["max_epochs"] = cfg.fed.distill.max_epochs;
    distill["batch_frac"] = cfg.fed.distill.target_batch_frac;
    distill["threshold"] = cfg.fed.distill.acc_threshold;
    distill["kernel"] = {
        {"kind", cfg.fed.distill.kernel.kind == KernelKind::rbf ? "rbf" : "arccos_ntk"},
        {"sigma", cfg.fed.distill.kernel.sigma},
        {"depth", cfg.fed.distill.kernel.depth},
        {"reg_mode",
         cfg.fed.distill.kernel.reg_mode == RegMode::absolute ? "absolute" : "trace_scaled"},
        {"reg", cfg.fed.distill.kernel.reg}};
    doc["distill"] = std::move(distill);
    json sweep;
    sweep["imgs_per_class"] = cfg.sweep.imgs_per_class;
    sweep["clients"] = cfg.sweep.clients;
    sweep["classes_per_client"] = cfg.sweep.classes_per_client;
    sweep["drop_rates"] = cfg.sweep.drop_rates;
    sweep["global_distilled"] = cfg.sweep.global_distilled;
    doc["sweep"] = std::move(sweep);
    return doc;
}

/// DISTILLFED_SEED replaces the config's seed list with a single seed.
inline bool apply_env_seed(ExperimentConfig& cfg) {
    const char* env = std::getenv("DISTILLFED_SEED");
    if (!env || *env == '\0') return false;
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
        throw std::runtime_error(std::string("DISTILLFED_SEED: not an integer: ") + env);
    cfg.seeds = {static_cast<std::uint64_t>(v)};
    return true;
}

struct Cell {
    std::string label;  // axis tag; "base" when nothing is swept
    double axis = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
    FedConfig fed;  // fully resolved for this cell

    std::string stem() const {
        return label + "_" + run_method_tag(fed) + "_seed" + std::to_string(seed);
    }
};

namespace cfgdetail {

/// Per-cell method resolution: plain fedd3 is always its own one-shot round,
/// hybrid only applies to distilling methods, pre-aggregation only to
/// one-shot baselines.
inline FedConfig resolve_fed(const ExperimentConfig& cfg, Method method) {
    FedConfig fed = cfg.fed;
    fed.method = method;
    if (is_fedd3(method)) {
        fed.pre_aggregation = false;
        if (!fed.hybrid) {
            fed.shots = Shots::one_shot;
            fed.rounds = 1;
        }
        fed.distill.instance = method == Method::fedd3_kip ? DistillInstance::kip
                                                           : DistillInstance::coreset_gmm;
    } else {
        fed.hybrid = false;
        if (fed.pre_aggregation && fed.shots != Shots::one_shot) fed.pre_aggregation = false;
    }
    return fed;
}

inline void append_cells(std::vector<Cell>& cells, const ExperimentConfig& cfg,
                         const std::string& label, double axis, const FedConfig& base) {
    for (Method m : cfg.methods) {
        FedConfig resolved = resolve_fed(cfg, m);
        // carry the sweep-adjusted fields over the method resolution
        resolved.num_clients = base.num_clients;
        resolved.classes_per_client = base.classes_per_client;
        resolved.partition = base.partition;
        resolved.straggler_drop_rate = base.straggler_drop_rate;
        resolved.distill.imgs_per_class = base.distill.imgs_per_class;
        for (std::uint64_t seed : cfg.seeds) {
            Cell cell;
            cell.label = label;
            cell.axis = axis;
            cell.seed = seed;
            cell.fed = resolved;
            cell.fed.seed = seed;
            cell.fed.validate();
            cells.push_back(std::move(cell));
        }
    }
}

inline std::string format_axis(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace cfgdetail

inline std::vector<Cell> plan_run(const ExperimentConfig& cfg) {
    std::vector<Cell> cells;
    cfgdetail::append_cells(cells, cfg, "base", std::numeric_limits<double>::quiet_NaN(), cfg.fed);
    return cells;
}

inline std::vector<Cell> plan_sweep_imgcls(const ExperimentConfig& cfg) {
    if (cfg.sweep.imgs_per_class.empty())
        throw std::runtime_error("config: sweep.imgs_per_class: the imgcls sweep needs values");
    std::vector<Cell> cells;
    for (int imgs : cfg.sweep.imgs_per_class) {
        if (imgs < 1) throw std::runtime_error("config: sweep.imgs_per_class: values must be >= 1");
        FedConfig base = cfg.fed;
        base.distill.imgs_per_class = imgs;
        cfgdetail::append_cells(cells, cfg, "imgs" + std::to_string(imgs), imgs, base);
    }
    return cells;
}

/// Client-count sweep under a fixed global distilled budget: every client
/// distills global/m points, split evenly over the classes it holds.
inline std::vector<Cell> plan_sweep_clients(const ExperimentConfig& cfg) {
    if (cfg.sweep.clients.empty())
        throw std::runtime_error("config: sweep.clients: the client sweep needs values");
    const int global = cfg.sweep.global_distilled;
    if (global < 1)
        throw std::runtime_error(
            "config: sweep.global_distilled: the client sweep needs a positive total");
    const int classes_held = cfg.fed.partition == PartitionMode::pathological
                                 ? cfg.fed.classes_per_client
                                 : cfg.data.label_space();
    auto valid_ms = [&]() {
        std::string list;
        for (int m = 1; m <= global; ++m)
            if (global % m == 0 && (global / m) % classes_held == 0)
                list += (list.empty() ? "" : ", ") + std::to_string(m);
        return list;
    };
    std::vector<Cell> cells;
    for (int m : cfg.sweep.clients) {
        if (m < 1) throw std::runtime_error("config: sweep.clients: values must be >= 1");
        if (global % m != 0)
            throw std::runtime_error("config: sweep.clients: global distilled count " +
                                     std::to_string(global) + " is not divisible by m=" +
                                     std::to_string(m) + "; valid m: " + valid_ms());
        const int per_client = global / m;
        if (per_client % classes_held != 0)
            throw std::runtime_error(
                "config: sweep.clients: per-client count " + std::to_string(per_client) +
                " is not divisible by the " + std::to_string(classes_held) +
                " classes each client holds; valid m: " + valid_ms());
        FedConfig base = cfg.fed;
        base.num_clients = m;
        base.distill.imgs_per_class = per_client / classes_held;
        cfgdetail::append_cells(cells, cfg, "m" + std::to_string(m), m, base);
    }
    return cells;
}

inline std::vector<Cell> plan_sweep_ck(const ExperimentConfig& cfg) {
    if (cfg.sweep.classes_per_client.empty())
        throw std::runtime_error("config: sweep.classes_per_client: the ck sweep needs values");
    std::vector<Cell> cells;
    for (int ck : cfg.sweep.classes_per_client) {
        if (ck < 1)
            throw std::runtime_error("config: sweep.classes_per_client: values must be >= 1");
        FedConfig base = cfg.fed;
        base.partition = PartitionMode::pathological;
        base.classes_per_client = ck;
        cfgdetail::append_cells(cells, cfg, "ck" + std::to_string(ck), ck, base);
    }
    return cells;
}

inline std::vector<Cell> plan_sweep_stragglers(const ExperimentConfig& cfg) {
    if (cfg.sweep.drop_rates.empty())
        throw std::runtime_error("config: sweep.drop_rates: the straggler sweep needs values");
    std::vector<Cell> cells;
    for (double rate : cfg.sweep.drop_rates) {
        if (!(rate >= 0.0 && rate < 1.0))
            throw std::runtime_error("config: sweep.drop_rates: values must lie in [0, 1)");
        FedConfig base = cfg.fed;
        base.straggler_drop_rate = rate;
        cfgdetail::append_cells(cells, cfg, "drop" + cfgdetail::format_axis(rate), rate, base);
    }
    return cells;
}

/// Builds the train/test pair for one cell. Blob data and splits are derived
/// from the run seed; idx data is fixed on disk, only the split is seeded.
inline std::pair<Dataset, Dataset> build_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.data.kind == DataSource::Kind::blobs) {
        BlobConfig blobs = cfg.data.blobs;
        blobs.seed = derive_seed(seed, kSeedData);
        Dataset all = gen_blobs(blobs);
        return split_train_test(all, cfg.test_fraction, derive_seed(seed, kSeedSplit));
    }
    Dataset train = load_idx(cfg.data.train_images, cfg.data.train_labels, cfg.data.num_classes);
    if (!cfg.data.test_images.empty()) {
        Dataset test = load_idx(cfg.data.test_images, cfg.data.test_labels, cfg.data.num_classes);
        return {std::move(train), std::move(test)};
    }
    return split_train_test(train, cfg.test_fraction, derive_seed(seed, kSeedSplit));
}

struct CellResult {
    Cell cell;
    bool ok = false;
    bool resumed = false;
    std::string error;
    double final_accuracy = 0.0;
    std::uint64_t uplink_total = 0;
    double log2_volume = 0.0;
    std::map<std::string, double> gce_values;  // gamma tag -> value; absent when null
};

namespace cfgdetail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline CellResult result_from_report(const Cell& cell, const json& doc) {
    CellResult res;
    res.cell = cell;
    res.ok = true;
    res.final_accuracy = doc.at("final_accuracy").get<double>();
    res.uplink_total = doc.at("uplink_bits_total").get<std::uint64_t>();
    res.log2_volume = doc.at("log2_volume").get<double>();
    for (const auto& [key, value] : doc.at("gce").items())
        if (!value.is_null()) res.gce_values[key] = value.get<double>();
    return res;
}

}  // namespace cfgdetail

/// Executes the planned cells, writing per-cell artifacts plus summary.csv and
/// curves.csv. Existing parseable reports are reused when `resume` is set.
/// Returns the number of failed cells.
inline int run_experiment_cells(const ExperimentConfig& cfg, const std::vector<Cell>& cells,
                                const std::string& out_dir, int jobs, bool resume,
                                std::vector<CellResult>* results_out = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const json echo = experiment_config_to_json(cfg);

    std::vector<CellResult> results(cells.size());
    parallel_for(static_cast<int>(cells.size()), jobs, [&](int i) {
        const Cell& cell = cells[(std::size_t)i];
        CellResult& res = results[(std::size_t)i];
        res.cell = cell;
        const std::string stem = (fs::path(out_dir) / cell.stem()).string();
        if (resume && fs::exists(stem + ".json")) {
            try {
                res = cfgdetail::result_from_report(cell, read_json_file(stem + ".json"));
                res.resumed = true;
                return;
            } catch (const std::exception&) {
                // unreadable leftover; fall through and recompute it
            }
        }
        try {
            auto [train, test] = build_data(cfg, cell.seed);
            Partition part =
                cell.fed.partition == PartitionMode::iid
                    ? partition_iid(train, cell.fed.num_clients,
                                    derive_seed(cell.seed, kSeedPartition))
                    : partition_pathological(train, cell.fed.num_clients,
                                             cell.fed.classes_per_client,
                                             derive_seed(cell.seed, kSeedPartition));
            auto clients = make_clients(train, part);
            const auto t0 = std::chrono::steady_clock::now();
            RunReport report = run_federated(clients, cell.fed, test, 1);
            report.wall_time_sec =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            save_weights(stem + ".weights", report.final_weights);
            const json doc = report_to_json(report, echo, cfg.gammas, cfg.accounting,
                                            cell.stem() + ".weights");
            write_json_file(stem + ".json", doc);
            write_curves_csv(stem + "_curves.csv", report);
            res = cfgdetail::result_from_report(cell, doc);
        } catch (const std::exception& e) {
            res.ok = false;
            res.error = e.what();
            std::ofstream err(stem + ".error.txt");
            err << e.what() << '\n';
            std::fprintf(stderr, "cell %s failed: %s\n", cell.stem().c_str(), e.what());
        }
    });

    // combined curves, one block per successful cell in planning order
    {
        std::ofstream out(fs::path(out_dir) / "curves.csv");
        out << "cell,method,seed,round,cum_uplink_bits,cum_log2_volume,test_acc\n";
        for (const auto& res : results) {
            if (!res.ok) continue;
            const std::string stem = (fs::path(out_dir) / res.cell.stem()).string();
            json doc;
            try {
                doc = read_json_file(stem + ".json");
            } catch (const std::exception&) {
                continue;
            }
            const auto& accs = doc.at("round_accuracy");
            const auto& rounds = doc.at("ledger");
            std::uint64_t cum_bits = 0;
            double cum_log2 = 0.0;
            for (std::size_t t = 0; t < rounds.size(); ++t) {
                const std::uint64_t up = rounds[t].at("uplink_bits").get<std::uint64_t>();
                cum_bits += up;
                cum_log2 += std::log2(static_cast<double>(up) + 1.0);
                out << res.cell.label << ',' << doc.at("method").get<std::string>() << ','
                    << res.cell.seed << ',' << (t + 1) << ',' << cum_bits << ','
                    << cfgdetail::fmt(cum_log2) << ','
                    << cfgdetail::fmt(accs[t].get<double>()) << '\n';
            }
        }
    }

    // seed-aggregated summary in planning order: medians and means per
    // (cell, method, gamma)
    {
        struct Group {
            std::string label;
            double axis;
            std::string method;
            std::vector<double> acc, uplink, log2vol;
            std::map<std::string, std::vector<double>> gce;
        };
        std::vector<Group> groups;
        for (const auto& res : results) {
            if (!res.ok) continue;
            const std::string method = run_method_tag(res.cell.fed);
            Group* g = nullptr;
            for (auto& existing : groups)
                if (existing.label == res.cell.label && existing.method == method) g = &existing;
            if (!g) {
                groups.push_back({res.cell.label, res.cell.axis, method, {}, {}, {}, {}});
                g = &groups.back();
            }
            g->acc.push_back(res.final_accuracy);
            g->uplink.push_back(static_cast<double>(res.uplink_total));
            g->log2vol.push_back(res.log2_volume);
            for (const auto& [gamma, value] : res.gce_values) g->gce[gamma].push_back(value);
        }
        std::ofstream out(fs::path(out_dir) / "summary.csv");
        out << "cell,axis,method,gamma,n_seeds,acc_median,acc_mean,gce_median,gce_mean,"
               "uplink_bits_median,log2_volume_median\n";
        for (const auto& g : groups) {
            for (double gamma : cfg.gammas) {
                const std::string tag = format_gamma(gamma);
                out << g.label << ',';
                if (!std::isnan(g.axis)) out << cfgdetail::format_axis(g.axis);
                out << ',' << g.method << ',' << tag << ',' << g.acc.size() << ','
                    << cfgdetail::fmt(cfgdetail::median_of(g.acc)) << ','
                    << cfgdetail::fmt(cfgdetail::mean_of(g.acc)) << ',';
                auto it = g.gce.find(tag);
                if (it != g.gce.end() && !it->second.empty()) {
                    out << cfgdetail::fmt(cfgdetail::median_of(it->second)) << ','
                        << cfgdetail::fmt(cfgdetail::mean_of(it->second));
                } else {
                    out << ',';
                }
                out << ',' << cfgdetail::fmt(cfgdetail::median_of(g.uplink)) << ','
                    << cfgdetail::fmt(cfgdetail::median_of(g.log2vol)) << '\n';
            }
        }
    }

    int failures = 0;
    for (const auto& res : results)
        if (!res.ok) ++failures;
    if (results_out) *results_out = std::move(results);
    return failures;
}

}  // namespace distillfed
