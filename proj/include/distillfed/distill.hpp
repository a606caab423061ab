#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "distillfed/dataset.hpp"
#include "distillfed/gmm.hpp"
#include "distillfed/kernel.hpp"
#include "distillfed/rng.hpp"

namespace distillfed {

enum class DistillInstance { kip, coreset_gmm };

inline const char* distill_instance_name(DistillInstance inst) {
    return inst == DistillInstance::kip ? "kip" : "coreset_gmm";
}

struct DistillConfig {
    DistillInstance instance = DistillInstance::kip;
    int imgs_per_class = 1;
    double distill_lr = 0.004;
    int max_epochs = 3000;
    double target_batch_frac = 0.10;
    double acc_threshold = 0.999;
    KernelSpec kernel;
    std::uint64_t seed = 0;

    void validate() const {
        if (imgs_per_class < 1) throw std::invalid_argument("DistillConfig: imgs_per_class >= 1");
        if (distill_lr < 0.0) throw std::invalid_argument("DistillConfig: negative learning rate");
        if (max_epochs < 1) throw std::invalid_argument("DistillConfig: max_epochs >= 1");
        if (!(target_batch_frac > 0.0 && target_batch_frac <= 1.0))
            throw std::invalid_argument("DistillConfig: target_batch_frac in (0, 1]");
        if (!(acc_threshold >= 0.0 && acc_threshold <= 1.0))
            throw std::invalid_argument("DistillConfig: acc_threshold in [0, 1]");
        kernel.validate();
    }
};

/// A client's distilled upload plus provenance for reports.
struct DistilledDataset {
    Matrix points;
    std::vector<int> labels;
    int num_classes = 0;

    int client_id = -1;
    std::string instance;
    int epochs_used = 0;
    double accuracy_init = 0.0;   // distill accuracy of the initial support
    double accuracy_final = 0.0;  // accuracy of the returned (best) snapshot
    double accuracy_last = 0.0;   // accuracy after the last epoch run
    std::vector<double> epoch_accuracy;

    Index size() const { return points.rows(); }

    SupportSet support() const {
        SupportSet s;
        s.points = points;
        s.labels = Matrix::Zero(points.rows(), num_classes);
        for (Index i = 0; i < points.rows(); ++i)
            s.labels(i, labels[static_cast<std::size_t>(i)]) = 1.0;
        return s;
    }

    Dataset as_dataset() const {
        Dataset d;
        d.features = points;
        d.labels = labels;
        d.num_classes = num_classes;
        return d;
    }
};

/// Fraction of rows whose argmax KRR prediction matches the true label.
/// Argmax ties resolve to the lowest class index.
inline double distill_accuracy(const SupportSet& support, const Dataset& data,
                               const KernelSpec& spec) {
    Matrix pred = krr_predict(support, data.features, spec);
    Index hits = 0;
    for (Index i = 0; i < pred.rows(); ++i) {
        int arg = 0;
        for (Index c = 1; c < pred.cols(); ++c)
            if (pred(i, c) > pred(i, arg)) arg = static_cast<int>(c);
        if (arg == data.labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pred.rows());
}

/// Seeded support initialization: imgs_per_class rows per owned class, drawn
/// without replacement. A class smaller than imgs_per_class is sampled with
/// replacement and every copy gets Gaussian jitter (std 1e-3) so no raw point
/// leaves the client verbatim.
inline DistilledDataset init_support(const Dataset& client_data, const DistillConfig& cfg) {
    client_data.validate();
    cfg.validate();
    auto rng = make_rng(derive_seed(cfg.seed, kSeedSupportInit));
    std::normal_distribution<double> jitter(0.0, 1e-3);

    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(client_data.num_classes));
    for (Index i = 0; i < client_data.size(); ++i)
        by_class[static_cast<std::size_t>(client_data.labels[static_cast<std::size_t>(i)])].push_back(i);

    DistilledDataset out;
    out.num_classes = client_data.num_classes;
    std::vector<Index> chosen_rows;
    std::vector<bool> jittered_row;
    for (int c = 0; c < client_data.num_classes; ++c) {
        auto& pool = by_class[static_cast<std::size_t>(c)];
        if (pool.empty()) continue;
        if (static_cast<int>(pool.size()) >= cfg.imgs_per_class) {
            std::shuffle(pool.begin(), pool.end(), rng);
            for (int i = 0; i < cfg.imgs_per_class; ++i) {
                chosen_rows.push_back(pool[static_cast<std::size_t>(i)]);
                jittered_row.push_back(false);
                out.labels.push_back(c);
            }
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            for (int i = 0; i < cfg.imgs_per_class; ++i) {
                chosen_rows.push_back(pool[pick(rng)]);
                jittered_row.push_back(true);
                out.labels.push_back(c);
            }
        }
    }

    out.points.resize(static_cast<Index>(chosen_rows.size()), client_data.dim());
    for (std::size_t r = 0; r < chosen_rows.size(); ++r) {
        out.points.row(static_cast<Index>(r)) = client_data.features.row(chosen_rows[r]);
        if (jittered_row[r])
            for (Index j = 0; j < out.points.cols(); ++j) out.points(static_cast<Index>(r), j) += jitter(rng);
    }
    return out;
}

/// Kernel-inducing-point distillation: full-support gradient steps against
/// seeded target batches of ceil(target_batch_frac * n) local points. After
/// each epoch the distill accuracy over the whole local set decides early
/// stopping (>= acc_threshold) and best-snapshot tracking; the best snapshot
/// is returned so a budget-exhausted run stays comparable to an early stop.
inline DistilledDataset distill_kip(const Dataset& client_data, const DistillConfig& cfg) {
    DistilledDataset out = init_support(client_data, cfg);
    out.instance = distill_instance_name(DistillInstance::kip);
    SupportSet support = out.support();
    Matrix one_hot = client_data.one_hot();

    out.accuracy_init = distill_accuracy(support, client_data, cfg.kernel);
    double best_acc = out.accuracy_init;
    Matrix best_points = support.points;
    out.accuracy_last = out.accuracy_init;

    const Index n = client_data.size();
    const Index batch = std::min<Index>(
        n, static_cast<Index>(std::ceil(cfg.target_batch_frac * static_cast<double>(n))));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        auto rng = make_rng(derive_seed(cfg.seed, kSeedDistillStep, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        for (Index start = 0; start < n; start += batch) {
            const Index len = std::min(batch, n - start);
            Matrix xb(len, client_data.dim());
            Matrix yb(len, client_data.num_classes);
            for (Index r = 0; r < len; ++r) {
                xb.row(r) = client_data.features.row(order[static_cast<std::size_t>(start + r)]);
                yb.row(r) = one_hot.row(order[static_cast<std::size_t>(start + r)]);
            }
            Matrix grad;
            try {
                grad = kip_grad(support, xb, yb, cfg.kernel);
            } catch (const NumericError& e) {
                std::ostringstream trace;
                for (double a : out.epoch_accuracy) trace << ' ' << a;
                throw NumericError("distill_kip: epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(start / batch) + ": " + e.what() +
                                   "; epoch accuracy trace:" + trace.str());
            }
            support.points -= cfg.distill_lr * grad;
        }
        out.epochs_used = epoch + 1;
        double acc = distill_accuracy(support, client_data, cfg.kernel);
        out.epoch_accuracy.push_back(acc);
        out.accuracy_last = acc;
        if (acc > best_acc) {
            best_acc = acc;
            best_points = support.points;
        }
        if (acc >= cfg.acc_threshold) break;
    }

    out.points = best_points;
    out.accuracy_final = best_acc;
    return out;
}

/// Coreset distillation: per owned class, the means of an imgs_per_class
/// component GMM. Classes too small for that many components fall back to the
/// init_support jitter rule. Accuracy fields report the KRR readout of the
/// finished coreset under cfg.kernel (there is no iteration here).
inline DistilledDataset distill_coreset_gmm(const Dataset& client_data, const DistillConfig& cfg) {
    client_data.validate();
    cfg.validate();
    DistilledDataset out;
    out.num_classes = client_data.num_classes;
    out.instance = distill_instance_name(DistillInstance::coreset_gmm);

    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(client_data.num_classes));
    for (Index i = 0; i < client_data.size(); ++i)
        by_class[static_cast<std::size_t>(client_data.labels[static_cast<std::size_t>(i)])].push_back(i);

    std::vector<Matrix> blocks;
    for (int c = 0; c < client_data.num_classes; ++c) {
        const auto& pool = by_class[static_cast<std::size_t>(c)];
        if (pool.empty()) continue;
        Matrix block;
        if (static_cast<int>(pool.size()) >= cfg.imgs_per_class) {
            Matrix cls(static_cast<Index>(pool.size()), client_data.dim());
            for (std::size_t r = 0; r < pool.size(); ++r) cls.row(static_cast<Index>(r)) = client_data.features.row(pool[r]);
            GmmModel gmm = fit_gmm(cls, cfg.imgs_per_class,
                                   derive_seed(cfg.seed, kSeedGmm, static_cast<std::uint64_t>(c)));
            block = gmm.means;
        } else {
            auto rng = make_rng(derive_seed(cfg.seed, kSeedGmm, static_cast<std::uint64_t>(c)));
            std::normal_distribution<double> jitter(0.0, 1e-3);
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            block.resize(cfg.imgs_per_class, client_data.dim());
            for (int r = 0; r < cfg.imgs_per_class; ++r) {
                block.row(r) = client_data.features.row(pool[pick(rng)]);
                for (Index j = 0; j < block.cols(); ++j) block(r, j) += jitter(rng);
            }
        }
        blocks.push_back(std::move(block));
        for (int r = 0; r < cfg.imgs_per_class; ++r) out.labels.push_back(c);
    }

    Index rows = 0;
    for (const auto& b : blocks) rows += b.rows();
    out.points.resize(rows, client_data.dim());
    Index at = 0;
    for (const auto& b : blocks) {
        out.points.middleRows(at, b.rows()) = b;
        at += b.rows();
    }

    double acc = distill_accuracy(out.support(), client_data, cfg.kernel);
    out.accuracy_init = acc;
    out.accuracy_final = acc;
    out.accuracy_last = acc;
    out.epochs_used = 0;
    return out;
}

/// Runs the configured distillation instance.
inline DistilledDataset distill(const Dataset& client_data, const DistillConfig& cfg) {
    return cfg.instance == DistillInstance::kip ? distill_kip(client_data, cfg)
                                                : distill_coreset_gmm(client_data, cfg);
}

/// Wire format for uploads: one JSON record per support point.
inline void write_distilled_jsonl(const std::string& path,
                                  const std::vector<DistilledDataset>& uploads) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_distilled_jsonl: cannot create " + path);
    for (const auto& up : uploads) {
        for (Index i = 0; i < up.size(); ++i) {
            nlohmann::ordered_json rec;
            rec["client_id"] = up.client_id;
            rec["class"] = up.labels[static_cast<std::size_t>(i)];
            std::vector<double> v(up.points.cols() > 0 ? static_cast<std::size_t>(up.points.cols()) : 0);
            for (Index j = 0; j < up.points.cols(); ++j) v[static_cast<std::size_t>(j)] = up.points(i, j);
            rec["vector"] = v;
            out << rec.dump() << '\n';
        }
    }
    if (!out) throw std::runtime_error("write_distilled_jsonl: write failed for " + path);
}

struct DistilledRecord {
    int client_id = -1;
    int label = -1;
    Vector point;
};

inline std::vector<DistilledRecord> read_distilled_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_distilled_jsonl: cannot open " + path);
    std::vector<DistilledRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error("read_distilled_jsonl: " + path + ":" +
                                     std::to_string(line_no) + ": " + e.what());
        }
        DistilledRecord r;
        r.client_id = rec.at("client_id").get<int>();
        r.label = rec.at("class").get<int>();
        auto v = rec.at("vector").get<std::vector<double>>();
        r.point = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace distillfed
