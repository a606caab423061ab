#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "distillfed/distill.hpp"

using namespace distillfed;
namespace fs = std::filesystem;

namespace {

Dataset two_class_pair(int a, int b, int per_class, int classes, std::uint64_t seed) {
    // A dataset whose points belong to just two of `classes` labels.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    Dataset d;
    d.num_classes = classes;
    d.features.resize(2 * per_class, 2);
    d.labels.resize(static_cast<std::size_t>(2 * per_class));
    for (int i = 0; i < 2 * per_class; ++i) {
        bool first = i < per_class;
        d.features(i, 0) = (first ? -3.0 : 3.0) + 0.3 * unit(rng);
        d.features(i, 1) = 0.3 * unit(rng);
        d.labels[static_cast<std::size_t>(i)] = first ? a : b;
    }
    return d;
}

}  // namespace

TEST_CASE("init_support samples per owned class and keeps raw rows verbatim") {
    Dataset d = two_class_pair(3, 7, 3, 10, 1);
    DistillConfig cfg;
    cfg.imgs_per_class = 1;
    cfg.seed = 5;

    DistilledDataset sup = init_support(d, cfg);
    REQUIRE(sup.size() == 2);
    REQUIRE(sup.labels == std::vector<int>{3, 7});
    Matrix onehot = sup.support().labels;
    REQUIRE(onehot(0, 3) == 1.0);
    REQUIRE(onehot(1, 7) == 1.0);
    REQUIRE(onehot.sum() == 2.0);

    // Each sampled row must be one of the client's raw rows, bit for bit.
    for (Index r = 0; r < sup.size(); ++r) {
        bool found = false;
        for (Index i = 0; i < d.size(); ++i)
            if ((d.features.row(i) - sup.points.row(r)).cwiseAbs().maxCoeff() == 0.0) found = true;
        REQUIRE(found);
    }

    // Full-class support is exactly the class subset.
    cfg.imgs_per_class = 3;
    DistilledDataset full = init_support(d, cfg);
    REQUIRE(full.size() == 6);
    std::set<double> orig, got;
    for (Index i = 0; i < d.size(); ++i) orig.insert(d.features(i, 0));
    for (Index i = 0; i < full.size(); ++i) got.insert(full.points(i, 0));
    REQUIRE(orig == got);

    DistilledDataset again = init_support(d, cfg);
    REQUIRE((again.points - full.points).norm() == 0.0);
}

TEST_CASE("init_support jitters classes smaller than the per-class quota") {
    Dataset d;
    d.features.resize(3, 2);
    d.features << 0.5, 0.5, 10.0, 10.0, 10.1, 9.9;
    d.labels = {0, 1, 1};
    d.num_classes = 2;

    DistillConfig cfg;
    cfg.imgs_per_class = 2;
    cfg.seed = 3;
    DistilledDataset sup = init_support(d, cfg);
    REQUIRE(sup.size() == 4);
    REQUIRE(sup.labels == std::vector<int>{0, 0, 1, 1});

    // Class 0 has one raw point: both copies jittered, never bit-equal to it,
    // never equal to each other, but within a few jitter sigmas.
    for (Index r = 0; r < 2; ++r) {
        double diff = (sup.points.row(r) - d.features.row(0)).cwiseAbs().maxCoeff();
        REQUIRE(diff > 0.0);
        REQUIRE(diff < 1e-2);
    }
    REQUIRE((sup.points.row(0) - sup.points.row(1)).cwiseAbs().maxCoeff() > 0.0);

    // Class 1 has exactly the quota: raw rows, no jitter.
    for (Index r = 2; r < 4; ++r) {
        bool exact = false;
        for (Index i = 1; i < 3; ++i)
            if ((d.features.row(i) - sup.points.row(r)).cwiseAbs().maxCoeff() == 0.0) exact = true;
        REQUIRE(exact);
    }
}

TEST_CASE("distill_kip with zero learning rate returns the initial support bit-exactly") {
    // Heavily overlapping classes: accuracy stays far below the stop
    // threshold, so all epochs run and the support must still not move.
    std::mt19937_64 rng(9);
    std::normal_distribution<double> unit(0.0, 1.0);
    Dataset d;
    d.num_classes = 2;
    d.features.resize(40, 2);
    d.labels.resize(40);
    for (Index i = 0; i < 40; ++i) {
        d.features(i, 0) = unit(rng);
        d.features(i, 1) = unit(rng);
        d.labels[static_cast<std::size_t>(i)] = static_cast<int>(i) % 2;
    }
    DistillConfig cfg;
    cfg.imgs_per_class = 1;
    cfg.distill_lr = 0.0;
    cfg.max_epochs = 3;
    cfg.seed = 21;

    DistilledDataset base = init_support(d, cfg);
    DistilledDataset run = distill_kip(d, cfg);
    REQUIRE((run.points - base.points).norm() == 0.0);
    REQUIRE(run.accuracy_final == run.accuracy_init);
    REQUIRE(run.epochs_used == 3);
}

TEST_CASE("distill_kip with a zero accuracy threshold stops after one epoch") {
    Dataset d = two_class_pair(0, 1, 20, 2, 9);
    DistillConfig cfg;
    cfg.imgs_per_class = 1;
    cfg.acc_threshold = 0.0;
    cfg.max_epochs = 500;
    cfg.seed = 2;
    DistilledDataset run = distill_kip(d, cfg);
    REQUIRE(run.epochs_used == 1);
    REQUIRE(run.epoch_accuracy.size() == 1);
}

TEST_CASE("distill_kip never returns a worse snapshot than its start") {
    Dataset d = two_class_pair(0, 1, 30, 2, 13);
    DistillConfig cfg;
    cfg.imgs_per_class = 1;
    cfg.max_epochs = 200;
    cfg.distill_lr = 0.01;
    cfg.kernel.sigma = 1.5;
    cfg.seed = 4;

    DistilledDataset run = distill_kip(d, cfg);
    REQUIRE(run.accuracy_final >= run.accuracy_init);
    REQUIRE(run.accuracy_last == run.epoch_accuracy.back());
    double best = run.accuracy_init;
    for (double a : run.epoch_accuracy) best = std::max(best, a);
    REQUIRE(run.accuracy_final == best);

    DistilledDataset rerun = distill_kip(d, cfg);
    REQUIRE((rerun.points - run.points).norm() == 0.0);
    REQUIRE(rerun.epoch_accuracy == run.epoch_accuracy);
}

TEST_CASE("kip-distilled blobs classify held-out data over five seeds") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        BlobConfig bc;
        bc.num_classes = 4;
        bc.dim = 8;
        bc.points_per_class = 60;
        bc.center_spread = 2.0;
        bc.within_std = 0.4;
        bc.seed = seed;
        Dataset all = gen_blobs(bc);
        auto [train, test] = split_train_test(all, 0.2, seed + 100);

        DistillConfig cfg;
        cfg.imgs_per_class = 1;
        cfg.max_epochs = 150;
        cfg.distill_lr = 0.01;
        cfg.kernel.sigma = 2.0;
        cfg.seed = seed;
        DistilledDataset run = distill_kip(train, cfg);
        REQUIRE(run.size() == 4);

        double held_out = distill_accuracy(run.support(), test, cfg.kernel);
        CAPTURE(seed, run.accuracy_final);
        REQUIRE(held_out >= 0.90);
    }
}

TEST_CASE("coreset distillation reduces to class means and finds sub-centers") {
    Dataset d = two_class_pair(0, 1, 50, 2, 31);
    DistillConfig cfg;
    cfg.instance = DistillInstance::coreset_gmm;
    cfg.imgs_per_class = 1;
    cfg.seed = 8;

    DistilledDataset core = distill(d, cfg);
    REQUIRE(core.instance == "coreset_gmm");
    REQUIRE(core.size() == 2);
    Vector m0 = d.features.topRows(50).colwise().mean().transpose();
    Vector m1 = d.features.bottomRows(50).colwise().mean().transpose();
    REQUIRE((core.points.row(0).transpose() - m0).cwiseAbs().maxCoeff() < 1e-9);
    REQUIRE((core.points.row(1).transpose() - m1).cwiseAbs().maxCoeff() < 1e-9);

    // Two sub-clusters per class, two components per class: all four true
    // sub-centers must be recovered.
    std::mt19937_64 rng(77);
    std::normal_distribution<double> unit(0.0, 1.0);
    Dataset multi;
    multi.num_classes = 2;
    multi.features.resize(6400, 2);
    multi.labels.assign(6400, 0);
    std::vector<std::pair<double, double>> centers = {{-3, 0}, {3, 0}, {0, -3}, {0, 3}};
    for (int g = 0; g < 4; ++g) {
        for (int i = 0; i < 1600; ++i) {
            Index row = static_cast<Index>(g) * 1600 + i;
            multi.features(row, 0) = centers[static_cast<std::size_t>(g)].first + 0.3 * unit(rng);
            multi.features(row, 1) = centers[static_cast<std::size_t>(g)].second + 0.3 * unit(rng);
            multi.labels[static_cast<std::size_t>(row)] = g / 2;
        }
    }
    cfg.imgs_per_class = 2;
    DistilledDataset sub = distill_coreset_gmm(multi, cfg);
    REQUIRE(sub.size() == 4);
    REQUIRE(sub.labels == std::vector<int>{0, 0, 1, 1});
    for (const auto& c : centers) {
        double best = 1e300;
        for (Index r = 0; r < 4; ++r) {
            double dx = sub.points(r, 0) - c.first, dy = sub.points(r, 1) - c.second;
            best = std::min(best, std::sqrt(dx * dx + dy * dy));
        }
        REQUIRE(best < 0.03);  // a tenth of the sub-cluster spread
    }

    DistilledDataset rerun = distill_coreset_gmm(multi, cfg);
    REQUIRE((rerun.points - sub.points).norm() == 0.0);
}

TEST_CASE("identical class points distill to that point") {
    Dataset d;
    d.features = Matrix::Constant(6, 3, 0.25);
    d.labels = {0, 0, 0, 0, 0, 0};
    d.num_classes = 1;
    DistillConfig cfg;
    cfg.instance = DistillInstance::coreset_gmm;
    cfg.imgs_per_class = 1;
    DistilledDataset core = distill_coreset_gmm(d, cfg);
    REQUIRE(core.size() == 1);
    REQUIRE((core.points.array() == 0.25).all());
}

TEST_CASE("distillation never invents classes and fills the per-class quota") {
    Dataset d = two_class_pair(1, 2, 25, 4, 3);
    for (DistillInstance inst : {DistillInstance::kip, DistillInstance::coreset_gmm}) {
        DistillConfig cfg;
        cfg.instance = inst;
        cfg.imgs_per_class = 3;
        cfg.max_epochs = 5;
        cfg.seed = 10;
        DistilledDataset out = distill(d, cfg);
        REQUIRE(out.size() == 6);
        REQUIRE(std::count(out.labels.begin(), out.labels.end(), 1) == 3);
        REQUIRE(std::count(out.labels.begin(), out.labels.end(), 2) == 3);
    }
}

TEST_CASE("distilled uploads survive the JSONL wire format bit-exactly") {
    Dataset d = two_class_pair(0, 1, 10, 2, 55);
    DistillConfig cfg;
    cfg.imgs_per_class = 2;
    cfg.max_epochs = 3;
    cfg.seed = 1;

    std::vector<DistilledDataset> uploads;
    for (int k = 0; k < 2; ++k) {
        cfg.seed = 100 + static_cast<std::uint64_t>(k);
        DistilledDataset up = distill_kip(d, cfg);
        up.client_id = k;
        uploads.push_back(std::move(up));
    }

    fs::path path = fs::temp_directory_path() / "distillfed_uploads.jsonl";
    write_distilled_jsonl(path.string(), uploads);
    auto records = read_distilled_jsonl(path.string());
    fs::remove(path);

    REQUIRE(records.size() == 8);
    std::size_t at = 0;
    for (const auto& up : uploads) {
        for (Index i = 0; i < up.size(); ++i, ++at) {
            REQUIRE(records[at].client_id == up.client_id);
            REQUIRE(records[at].label == up.labels[static_cast<std::size_t>(i)]);
            REQUIRE((records[at].point.transpose() - up.points.row(i)).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}
