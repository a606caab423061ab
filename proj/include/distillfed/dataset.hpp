#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "distillfed/common.hpp"
#include "distillfed/rng.hpp"

namespace distillfed {

/// Labeled feature matrix. Features are unitless; image-backed datasets store
/// raw 8-bit pixels divided by 255 so everything lives in [0, 1].
struct Dataset {
    Matrix features;          // n x d
    std::vector<int> labels;  // values in [0, num_classes)
    int num_classes = 0;

    Index size() const { return features.rows(); }
    Index dim() const { return features.cols(); }

    void validate() const {
        if (features.rows() < 1) throw std::invalid_argument("Dataset: empty feature matrix");
        if (static_cast<Index>(labels.size()) != features.rows())
            throw std::invalid_argument("Dataset: label count does not match row count");
        if (num_classes < 1) throw std::invalid_argument("Dataset: num_classes must be positive");
        for (int y : labels)
            if (y < 0 || y >= num_classes)
                throw std::invalid_argument("Dataset: label out of range [0, num_classes)");
    }

    Dataset subset(const std::vector<Index>& idx) const {
        Dataset out;
        out.num_classes = num_classes;
        out.features.resize(static_cast<Index>(idx.size()), features.cols());
        out.labels.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.features.row(static_cast<Index>(i)) = features.row(idx[i]);
            out.labels[i] = labels[static_cast<std::size_t>(idx[i])];
        }
        return out;
    }

    /// Sorted distinct labels actually present.
    std::vector<int> present_classes() const {
        std::set<int> s(labels.begin(), labels.end());
        return {s.begin(), s.end()};
    }

    /// One-hot label matrix, n x num_classes.
    Matrix one_hot() const {
        Matrix y = Matrix::Zero(size(), num_classes);
        for (Index i = 0; i < size(); ++i) y(i, labels[static_cast<std::size_t>(i)]) = 1.0;
        return y;
    }
};

/// Synthetic Gaussian-blob dataset: a desk-scale stand-in for image corpora.
struct BlobConfig {
    int num_classes = 2;
    int dim = 2;
    int points_per_class = 50;
    double center_spread = 1.0;  // std-dev of class centers
    double within_std = 0.25;    // std-dev around each center
    std::uint64_t seed = 0;

    void validate() const {
        if (num_classes < 1 || dim < 1 || points_per_class < 1)
            throw std::invalid_argument("BlobConfig: counts must be positive");
        if (!(within_std > 0.0))
            throw std::invalid_argument("BlobConfig: within_std must be > 0");
        if (center_spread < 0.0)
            throw std::invalid_argument("BlobConfig: center_spread must be >= 0");
    }
};

/// Draws class centers from N(0, center_spread^2 I), then points_per_class
/// points per class from N(center, within_std^2 I). Deterministic per seed;
/// rows are grouped by class in ascending class order.
inline Dataset gen_blobs(const BlobConfig& cfg) {
    cfg.validate();
    auto rng = make_rng(cfg.seed);
    std::normal_distribution<double> unit(0.0, 1.0);

    Matrix centers(cfg.num_classes, cfg.dim);
    for (int c = 0; c < cfg.num_classes; ++c)
        for (int j = 0; j < cfg.dim; ++j) centers(c, j) = cfg.center_spread * unit(rng);

    Dataset out;
    out.num_classes = cfg.num_classes;
    const Index n = static_cast<Index>(cfg.num_classes) * cfg.points_per_class;
    out.features.resize(n, cfg.dim);
    out.labels.resize(static_cast<std::size_t>(n));
    Index row = 0;
    for (int c = 0; c < cfg.num_classes; ++c) {
        for (int p = 0; p < cfg.points_per_class; ++p, ++row) {
            for (int j = 0; j < cfg.dim; ++j)
                out.features(row, j) = centers(c, j) + cfg.within_std * unit(rng);
            out.labels[static_cast<std::size_t>(row)] = c;
        }
    }
    return out;
}

/// Assignment of dataset indices to m clients plus each client's class set.
struct Partition {
    std::vector<std::vector<Index>> assignments;  // disjoint index lists, one per client
    std::vector<std::vector<int>> class_sets;     // sorted distinct labels per client

    int num_clients() const { return static_cast<int>(assignments.size()); }
};

namespace detail {

inline std::vector<std::vector<int>> class_sets_from(const Dataset& data,
                                                     const std::vector<std::vector<Index>>& assignments) {
    std::vector<std::vector<int>> sets(assignments.size());
    for (std::size_t k = 0; k < assignments.size(); ++k) {
        std::set<int> s;
        for (Index i : assignments[k]) s.insert(data.labels[static_cast<std::size_t>(i)]);
        sets[k].assign(s.begin(), s.end());
    }
    return sets;
}

}  // namespace detail

/// Shuffles indices by seed and deals them round-robin; client sizes differ
/// by at most one.
inline Partition partition_iid(const Dataset& data, int m, std::uint64_t seed) {
    data.validate();
    if (m < 1) throw std::invalid_argument("partition_iid: m must be >= 1");
    if (static_cast<Index>(m) > data.size())
        throw std::invalid_argument("partition_iid: more clients than data points");

    std::vector<Index> perm(static_cast<std::size_t>(data.size()));
    std::iota(perm.begin(), perm.end(), Index{0});
    auto rng = make_rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    Partition part;
    part.assignments.resize(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < perm.size(); ++i)
        part.assignments[i % static_cast<std::size_t>(m)].push_back(perm[i]);
    part.class_sets = detail::class_sets_from(data, part.assignments);
    return part;
}

/// Pathological Non-IID partition: each client holds exactly c_k classes.
///
/// Scheme: group indices by label (dataset order), cut every class into its
/// quota of shards (m*c_k shards in total, spread over classes as evenly as
/// possible; within a class, later shards absorb the remainder), then deal
/// shards so that no client sees the same class twice. The seed drives which
/// client receives which shard.
inline Partition partition_pathological(const Dataset& data, int m, int c_k, std::uint64_t seed) {
    data.validate();
    const int S = data.num_classes;
    if (m < 1 || c_k < 1) throw std::invalid_argument("partition_pathological: m and c_k must be >= 1");
    if (c_k > S) throw std::invalid_argument("partition_pathological: c_k exceeds the number of classes");
    if (static_cast<long long>(m) * c_k < S)
        throw std::invalid_argument(
            "partition_pathological: m*c_k < num_classes, not all classes can be covered");

    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(S));
    for (Index i = 0; i < data.size(); ++i)
        by_class[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].push_back(i);
    for (int c = 0; c < S; ++c)
        if (by_class[static_cast<std::size_t>(c)].empty())
            throw std::invalid_argument("partition_pathological: class " + std::to_string(c) +
                                        " has no points");

    // Shard quota per class: num_shards spread as evenly as possible, the
    // first (num_shards % S) classes take one extra.
    const int num_shards = m * c_k;
    std::vector<int> quota(static_cast<std::size_t>(S), num_shards / S);
    for (int c = 0; c < num_shards % S; ++c) ++quota[static_cast<std::size_t>(c)];
    for (int c = 0; c < S; ++c)
        if (quota[static_cast<std::size_t>(c)] > static_cast<int>(by_class[static_cast<std::size_t>(c)].size()))
            throw std::invalid_argument("partition_pathological: class " + std::to_string(c) +
                                        " has fewer points than shards");

    // Assign classes to clients, one class at a time in descending quota
    // order: all quota[c] shards of a class go to the quota[c] clients with
    // the largest remaining capacity. Laying off a full class onto the
    // highest-capacity clients preserves feasibility (quota[c] <= m and the
    // capacities sum to the shard count), so this never gets stuck. Seeded
    // client order breaks capacity ties.
    auto rng = make_rng(seed);
    std::vector<int> client_order(static_cast<std::size_t>(m));
    std::iota(client_order.begin(), client_order.end(), 0);
    std::shuffle(client_order.begin(), client_order.end(), rng);
    std::vector<int> rank(static_cast<std::size_t>(m));
    for (int pos = 0; pos < m; ++pos) rank[static_cast<std::size_t>(client_order[static_cast<std::size_t>(pos)])] = pos;

    std::vector<int> class_order(static_cast<std::size_t>(S));
    std::iota(class_order.begin(), class_order.end(), 0);
    std::stable_sort(class_order.begin(), class_order.end(),
                     [&](int a, int b) { return quota[static_cast<std::size_t>(a)] > quota[static_cast<std::size_t>(b)]; });

    std::vector<int> capacity(static_cast<std::size_t>(m), c_k);
    std::vector<std::vector<int>> clients_of_class(static_cast<std::size_t>(S));
    for (int cls : class_order) {
        std::vector<int> takers = client_order;
        std::stable_sort(takers.begin(), takers.end(), [&](int a, int b) {
            if (capacity[static_cast<std::size_t>(a)] != capacity[static_cast<std::size_t>(b)])
                return capacity[static_cast<std::size_t>(a)] > capacity[static_cast<std::size_t>(b)];
            return rank[static_cast<std::size_t>(a)] < rank[static_cast<std::size_t>(b)];
        });
        for (int s = 0; s < quota[static_cast<std::size_t>(cls)]; ++s) {
            int k = takers[static_cast<std::size_t>(s)];
            if (capacity[static_cast<std::size_t>(k)] <= 0)
                throw std::logic_error("partition_pathological: shard dealing ran out of capacity");
            clients_of_class[static_cast<std::size_t>(cls)].push_back(k);
            --capacity[static_cast<std::size_t>(k)];
        }
    }

    // Cut each class into quota[c] contiguous shards (later shards absorb the
    // remainder) and hand them to that class's clients in seeded order.
    Partition part;
    part.assignments.resize(static_cast<std::size_t>(m));
    for (int c = 0; c < S; ++c) {
        auto& clients = clients_of_class[static_cast<std::size_t>(c)];
        std::shuffle(clients.begin(), clients.end(), rng);
        const auto& idx = by_class[static_cast<std::size_t>(c)];
        const int t = quota[static_cast<std::size_t>(c)];
        const std::size_t base = idx.size() / static_cast<std::size_t>(t);
        const std::size_t rem = idx.size() % static_cast<std::size_t>(t);
        std::size_t pos = 0;
        for (int s = 0; s < t; ++s) {
            std::size_t len = base + (static_cast<std::size_t>(s) >= static_cast<std::size_t>(t) - rem ? 1 : 0);
            auto& dest = part.assignments[static_cast<std::size_t>(clients[static_cast<std::size_t>(s)])];
            dest.insert(dest.end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                        idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
            pos += len;
        }
    }
    for (auto& a : part.assignments) std::sort(a.begin(), a.end());
    part.class_sets = detail::class_sets_from(data, part.assignments);
    return part;
}

/// Seeded train/test split; the first round(n * test_fraction) shuffled
/// indices form the test set. Index order within each side stays ascending.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                                    std::uint64_t seed) {
    data.validate();
    if (!(test_fraction >= 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split_train_test: test_fraction must be in [0, 1)");
    std::vector<Index> perm(static_cast<std::size_t>(data.size()));
    std::iota(perm.begin(), perm.end(), Index{0});
    auto rng = make_rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(data.size())));
    std::vector<Index> test_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<Index> train_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    return {data.subset(train_idx), data.subset(test_idx)};
}

}  // namespace distillfed
