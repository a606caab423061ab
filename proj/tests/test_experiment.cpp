// Experiment layer: config parsing with field diagnostics, cell planning for
// the sweep families, and the cell executor's artifacts (reports, curves,
// summary) including resume and worker-count determinism.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "distillfed/experiment.hpp"

using namespace distillfed;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

json tiny_doc() {
    json doc;
    doc["name"] = "tiny";
    doc["methods"] = json::array({"fedavg", "fedd3_coreset"});
    doc["seeds"] = json::array({1, 2});
    doc["gammas"] = json::array({1.0});
    doc["test_fraction"] = 0.25;
    doc["dataset"] = {{"type", "blobs"}, {"num_classes", 2},      {"dim", 4},
                      {"points_per_class", 30}, {"center_spread", 2.0}, {"within_std", 0.3}};
    doc["federation"] = {{"shots", "one_shot"},
                         {"rounds", 1},
                         {"num_clients", 2},
                         {"hidden", json::array({8})},
                         {"local", {{"lr", 0.05}, {"batch_size", 16}}},
                         {"server", {{"lr", 0.05}, {"batch_size", 16}, {"epochs", 20}}}};
    doc["distill"] = {{"imgs_per_class", 2},
                      {"max_epochs", 20},
                      {"kernel", {{"kind", "rbf"}, {"sigma", 2.0}}}};
    return doc;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

// report JSON with the timing field dropped, for payload comparisons
std::string payload_without_walltime(const fs::path& path) {
    json doc = read_json_file(path.string());
    doc.erase("wall_time_sec");
    return doc.dump(2);
}

}  // namespace

TEST_CASE("experiment config parses and the echo round-trips") {
    ExperimentConfig cfg = experiment_config_from_json(tiny_doc());
    CHECK(cfg.name == "tiny");
    REQUIRE(cfg.methods.size() == 2);
    CHECK(cfg.methods[0] == Method::fedavg);
    CHECK(cfg.methods[1] == Method::fedd3_coreset);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(cfg.gammas == std::vector<double>{1.0});
    CHECK(cfg.accounting == VolumeAccounting::summed_clients);
    CHECK(cfg.test_fraction == 0.25);
    CHECK(cfg.data.kind == DataSource::Kind::blobs);
    CHECK(cfg.data.blobs.num_classes == 2);
    CHECK(cfg.data.blobs.dim == 4);
    CHECK(cfg.fed.num_clients == 2);
    CHECK(cfg.fed.hidden == std::vector<int>{8});
    CHECK(cfg.fed.local_train.lr == 0.05);
    CHECK(cfg.fed.local_train.momentum == 0.9);  // untouched default
    CHECK(cfg.fed.server_train.epochs == 20);
    CHECK(cfg.fed.distill.imgs_per_class == 2);
    CHECK(cfg.fed.distill.kernel.sigma == 2.0);

    // parsing the echo must reproduce the echo byte for byte
    json echo = experiment_config_to_json(cfg);
    ExperimentConfig again = experiment_config_from_json(echo);
    CHECK(experiment_config_to_json(again).dump(2) == echo.dump(2));
}

TEST_CASE("config errors name the offending field") {
    SECTION("missing required field") {
        json doc = tiny_doc();
        doc.erase("methods");
        REQUIRE_THROWS_WITH(experiment_config_from_json(doc),
                            ContainsSubstring("methods") && ContainsSubstring("missing"));
    }
    SECTION("unknown method string") {
        json doc = tiny_doc();
        doc["methods"] = json::array({"fedavg", "fedsgd"});
        REQUIRE_THROWS_WITH(experiment_config_from_json(doc), ContainsSubstring("methods[1]"));
    }
    SECTION("wrong type deep in the tree") {
        json doc = tiny_doc();
        doc["federation"]["local"]["lr"] = "fast";
        REQUIRE_THROWS_WITH(experiment_config_from_json(doc),
                            ContainsSubstring("federation.local.lr"));
    }
    SECTION("negative seed") {
        json doc = tiny_doc();
        doc["seeds"] = json::array({1, -3});
        REQUIRE_THROWS_WITH(experiment_config_from_json(doc), ContainsSubstring("seeds[1]"));
    }
    SECTION("bad enum values") {
        json doc = tiny_doc();
        doc["volume_accounting"] = "total";
        REQUIRE_THROWS_WITH(experiment_config_from_json(doc),
                            ContainsSubstring("volume_accounting"));
        doc = tiny_doc();
        doc["federation"]["partition"] = "dirichlet";
        REQUIRE_THROWS_WITH(experiment_config_from_json(doc),
                            ContainsSubstring("federation.partition"));
        doc = tiny_doc();
        doc["distill"]["kernel"]["kind"] = "poly";
        REQUIRE_THROWS_WITH(experiment_config_from_json(doc),
                            ContainsSubstring("distill.kernel.kind"));
    }
    SECTION("idx sources need a label-space size") {
        json doc = tiny_doc();
        doc["dataset"] = {{"type", "idx"}, {"images", "a.idx"}, {"labels", "b.idx"}};
        REQUIRE_THROWS_WITH(experiment_config_from_json(doc),
                            ContainsSubstring("dataset.num_classes"));
    }
    SECTION("test_fraction bounds") {
        json doc = tiny_doc();
        doc["test_fraction"] = 1.0;
        REQUIRE_THROWS_WITH(experiment_config_from_json(doc), ContainsSubstring("test_fraction"));
    }
}

TEST_CASE("environment seed override replaces the seed list") {
    ExperimentConfig cfg = experiment_config_from_json(tiny_doc());
    ::setenv("DISTILLFED_SEED", "77", 1);
    CHECK(apply_env_seed(cfg));
    CHECK(cfg.seeds == std::vector<std::uint64_t>{77});

    ::setenv("DISTILLFED_SEED", "7x", 1);
    REQUIRE_THROWS_WITH(apply_env_seed(cfg), ContainsSubstring("DISTILLFED_SEED"));

    ::unsetenv("DISTILLFED_SEED");
    cfg.seeds = {1, 2};
    CHECK_FALSE(apply_env_seed(cfg));
    CHECK(cfg.seeds.size() == 2);
}

TEST_CASE("cell planning covers methods x seeds and resolves per-method configs") {
    ExperimentConfig cfg = experiment_config_from_json(tiny_doc());
    auto cells = plan_run(cfg);
    REQUIRE(cells.size() == 4);  // 2 methods x 2 seeds
    CHECK(cells[0].stem() == "base_fedavg_seed1");
    CHECK(cells[1].stem() == "base_fedavg_seed2");
    CHECK(cells[2].stem() == "base_fedd3_coreset_seed1");
    CHECK(cells[3].stem() == "base_fedd3_coreset_seed2");
    for (const auto& cell : cells) {
        CHECK(cell.label == "base");
        CHECK(std::isnan(cell.axis));
        CHECK(cell.fed.seed == cell.seed);
    }
    CHECK(cells[2].fed.method == Method::fedd3_coreset);
    CHECK(cells[2].fed.distill.instance == DistillInstance::coreset_gmm);

    SECTION("plain distilling methods always run as their own one-shot round") {
        json doc = tiny_doc();
        doc["federation"]["shots"] = "multi_shot";
        doc["federation"]["rounds"] = 3;
        auto mixed = plan_run(experiment_config_from_json(doc));
        REQUIRE(mixed.size() == 4);
        CHECK(mixed[0].fed.shots == Shots::multi_shot);
        CHECK(mixed[0].fed.rounds == 3);
        CHECK(mixed[2].fed.shots == Shots::one_shot);
        CHECK(mixed[2].fed.rounds == 1);
    }
    SECTION("hybrid applies to distilling methods only") {
        json doc = tiny_doc();
        doc["methods"] = json::array({"fedd3_kip", "fedavg"});
        doc["federation"]["shots"] = "multi_shot";
        doc["federation"]["rounds"] = 3;
        doc["federation"]["hybrid"] = true;
        auto mixed = plan_run(experiment_config_from_json(doc));
        CHECK(mixed[0].fed.hybrid);
        CHECK(mixed[0].fed.rounds == 3);
        CHECK(mixed[0].stem() == "base_hybrid_kip_seed1");
        CHECK_FALSE(mixed[2].fed.hybrid);
        CHECK(mixed[2].stem() == "base_fedavg_seed1");
    }
    SECTION("pre-aggregation sticks to one-shot baselines") {
        json doc = tiny_doc();
        doc["federation"]["pre_aggregation"] = true;
        auto planned = plan_run(experiment_config_from_json(doc));
        CHECK(planned[0].fed.pre_aggregation);        // one-shot fedavg
        CHECK_FALSE(planned[2].fed.pre_aggregation);  // distilling method
    }
}

TEST_CASE("client sweep splits a fixed distilled budget") {
    json doc = tiny_doc();
    doc["sweep"] = {{"clients", json::array({5, 10, 20})}, {"global_distilled", 40}};
    ExperimentConfig cfg = experiment_config_from_json(doc);
    auto cells = plan_sweep_clients(cfg);
    REQUIRE(cells.size() == 12);  // 3 m-values x 2 methods x 2 seeds

    // iid clients hold all 2 classes: imgs_per_class = (40/m)/2
    auto find_cell = [&](const std::string& stem) -> const Cell& {
        for (const auto& c : cells)
            if (c.stem() == stem) return c;
        FAIL("missing cell " + stem);
        return cells.front();
    };
    CHECK(find_cell("m5_fedd3_coreset_seed1").fed.distill.imgs_per_class == 4);
    CHECK(find_cell("m10_fedd3_coreset_seed1").fed.distill.imgs_per_class == 2);
    CHECK(find_cell("m20_fedd3_coreset_seed1").fed.distill.imgs_per_class == 1);
    CHECK(find_cell("m5_fedavg_seed1").fed.num_clients == 5);
    CHECK(find_cell("m20_fedavg_seed2").fed.num_clients == 20);
    CHECK(find_cell("m10_fedd3_coreset_seed2").axis == 10.0);

    SECTION("indivisible client counts are rejected with the valid options") {
        doc["sweep"]["clients"] = json::array({3});
        REQUIRE_THROWS_WITH(plan_sweep_clients(experiment_config_from_json(doc)),
                            ContainsSubstring("not divisible by m=3") &&
                                ContainsSubstring("valid m: 1, 2, 4, 5, 10, 20"));
        // m=8 divides 40 but leaves 5 points for 2 classes
        doc["sweep"]["clients"] = json::array({8});
        REQUIRE_THROWS_WITH(plan_sweep_clients(experiment_config_from_json(doc)),
                            ContainsSubstring("per-client count 5") &&
                                ContainsSubstring("2 classes"));
    }
    SECTION("pathological partitions divide by classes held, not the label space") {
        doc["federation"]["partition"] = "pathological";
        doc["federation"]["classes_per_client"] = 1;
        doc["sweep"]["clients"] = json::array({8});
        auto path_cells = plan_sweep_clients(experiment_config_from_json(doc));
        CHECK(path_cells.front().fed.distill.imgs_per_class == 5);  // 40/8 points, 1 class
    }
    SECTION("the sweep needs a positive budget") {
        doc["sweep"] = {{"clients", json::array({5})}};
        REQUIRE_THROWS_WITH(plan_sweep_clients(experiment_config_from_json(doc)),
                            ContainsSubstring("global_distilled"));
    }
}

TEST_CASE("the remaining sweep planners set exactly their axis") {
    json doc = tiny_doc();
    doc["sweep"] = {{"imgs_per_class", json::array({1, 5})},
                    {"classes_per_client", json::array({1, 2})},
                    {"drop_rates", json::array({0.0, 0.25})}};
    ExperimentConfig cfg = experiment_config_from_json(doc);

    auto imgs = plan_sweep_imgcls(cfg);
    REQUIRE(imgs.size() == 8);
    CHECK(imgs.front().label == "imgs1");
    CHECK(imgs.back().label == "imgs5");
    CHECK(imgs.back().fed.distill.imgs_per_class == 5);
    CHECK(imgs.front().fed.num_clients == cfg.fed.num_clients);

    auto ck = plan_sweep_ck(cfg);
    REQUIRE(ck.size() == 8);
    CHECK(ck.front().label == "ck1");
    CHECK(ck.front().fed.partition == PartitionMode::pathological);
    CHECK(ck.front().fed.classes_per_client == 1);
    CHECK(ck.back().fed.classes_per_client == 2);

    auto drops = plan_sweep_stragglers(cfg);
    REQUIRE(drops.size() == 8);
    CHECK(drops.front().label == "drop0");
    CHECK(drops.back().label == "drop0.25");
    CHECK(drops.back().fed.straggler_drop_rate == 0.25);
    CHECK(drops.front().fed.straggler_drop_rate == 0.0);

    SECTION("empty axes are rejected") {
        ExperimentConfig bare = experiment_config_from_json(tiny_doc());
        REQUIRE_THROWS_WITH(plan_sweep_imgcls(bare), ContainsSubstring("imgs_per_class"));
        REQUIRE_THROWS_WITH(plan_sweep_ck(bare), ContainsSubstring("classes_per_client"));
        REQUIRE_THROWS_WITH(plan_sweep_stragglers(bare), ContainsSubstring("drop_rates"));
    }
}

TEST_CASE("report payloads order keys and handle the metric pole") {
    RunReport rep;
    rep.method = "fedavg";
    rep.seed = 7;
    rep.round_accuracy = {0.5, 1.0};
    rep.final_accuracy = 1.0;
    rep.ledger.method = "fedavg";
    rep.ledger.add_round({{10}, 3});
    rep.ledger.add_round({{20}, 0});
    rep.events.push_back("note");
    rep.wall_time_sec = 1.25;

    json doc = report_to_json(rep, json::object(), {1.0, 2.0},
                              VolumeAccounting::summed_clients, "x.weights");
    std::vector<std::string> keys;
    for (const auto& [key, value] : doc.items()) keys.push_back(key);
    REQUIRE(keys.size() >= 2);
    CHECK(keys.front() == "method");
    CHECK(keys.back() == "wall_time_sec");  // payload comparisons drop the last field

    // accuracy 1.0 sits on the metric's pole, so the values are null
    CHECK(doc.at("gce").at("1").is_null());
    CHECK(doc.at("gce").at("2").is_null());
    CHECK(doc.at("uplink_bits_total").get<std::uint64_t>() == 30);
    CHECK(doc.at("downlink_bits_total").get<std::uint64_t>() == 3);
    REQUIRE(doc.at("ledger").size() == 2);
    CHECK(doc.at("ledger")[0].at("round").get<int>() == 1);
    CHECK(doc.at("ledger")[0].at("uplink_bits").get<std::uint64_t>() == 10);

    SECTION("away from the pole the map matches the metric") {
        rep.final_accuracy = 0.5;
        json ok = report_to_json(rep, json::object(), {1.0}, VolumeAccounting::summed_clients, "");
        GceParams params;
        params.gamma = 1.0;
        CHECK(ok.at("gce").at("1").get<double>() == gce(0.5, params, rep.ledger));
    }

    SECTION("curves accumulate bits and per-round log terms") {
        fs::path path = fs::temp_directory_path() / "distillfed_test_curves.csv";
        write_curves_csv(path.string(), rep);
        std::istringstream in(slurp(path));
        std::string line;
        std::getline(in, line);
        CHECK(line == "round,cum_uplink_bits,cum_log2_volume,test_acc");
        std::getline(in, line);
        CHECK(line.substr(0, 5) == "1,10,");
        CHECK(line.find(",0.5") != std::string::npos);
        std::getline(in, line);
        CHECK(line.substr(0, 5) == "2,30,");
        // cumulative log term log2(11) + log2(21)
        const double expect = std::log2(11.0) + std::log2(21.0);
        const auto comma = line.find(',', 5);
        CHECK(std::abs(std::stod(line.substr(5, comma - 5)) - expect) < 1e-9);
        fs::remove(path);
    }

    SECTION("length mismatches are caught before writing") {
        rep.round_accuracy.pop_back();
        REQUIRE_THROWS_AS(write_curves_csv("/tmp/never_written.csv", rep), std::logic_error);
    }
}

TEST_CASE("the executor writes per-cell artifacts plus summary and curves") {
    ExperimentConfig cfg = experiment_config_from_json(tiny_doc());
    auto cells = plan_run(cfg);
    fs::path dir = fresh_dir("distillfed_exp_run");
    std::vector<CellResult> results;
    const int failures = run_experiment_cells(cfg, cells, dir.string(), 2, false, &results);
    CHECK(failures == 0);
    REQUIRE(results.size() == 4);

    for (const auto& cell : cells) {
        CAPTURE(cell.stem());
        CHECK(fs::exists(dir / (cell.stem() + ".json")));
        CHECK(fs::exists(dir / (cell.stem() + ".weights")));
        CHECK(fs::exists(dir / (cell.stem() + "_curves.csv")));
    }
    for (const auto& res : results) {
        CHECK(res.ok);
        CHECK_FALSE(res.resumed);
        CHECK(res.final_accuracy >= 0.0);
        CHECK(res.uplink_total > 0);
    }

    // report payload carries the ledger, the config echo, and a weights pointer
    json doc = read_json_file((dir / "base_fedavg_seed1.json").string());
    CHECK(doc.at("method").get<std::string>() == "fedavg");
    CHECK(doc.at("seed").get<std::uint64_t>() == 1);
    CHECK(doc.at("weights_file").get<std::string>() == "base_fedavg_seed1.weights");
    CHECK(doc.at("config") == experiment_config_to_json(cfg));
    Weights w = load_weights((dir / "base_fedavg_seed1.weights").string());
    CHECK(w.all_finite());

    const std::string summary = slurp(dir / "summary.csv");
    CHECK(summary.rfind("cell,axis,method,gamma,n_seeds,acc_median,acc_mean,", 0) == 0);
    // one row per (cell group, method, gamma): 2 methods x 1 gamma
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
    CHECK(summary.find("base,,fedavg,1,2,") != std::string::npos);
    CHECK(summary.find("base,,fedd3_coreset,1,2,") != std::string::npos);

    const std::string curves = slurp(dir / "curves.csv");
    CHECK(curves.rfind("cell,method,seed,round,", 0) == 0);
    // every run here is one round: header + 4 rows
    CHECK(std::count(curves.begin(), curves.end(), '\n') == 5);
    CHECK(curves.find("base,fedd3_coreset,2,1,") != std::string::npos);

    SECTION("worker count does not change any payload") {
        fs::path serial = fresh_dir("distillfed_exp_serial");
        run_experiment_cells(cfg, cells, serial.string(), 1, false);
        for (const auto& cell : cells) {
            CAPTURE(cell.stem());
            CHECK(payload_without_walltime(dir / (cell.stem() + ".json")) ==
                  payload_without_walltime(serial / (cell.stem() + ".json")));
            CHECK(slurp(dir / (cell.stem() + "_curves.csv")) ==
                  slurp(serial / (cell.stem() + "_curves.csv")));
            CHECK(slurp(dir / (cell.stem() + ".weights")) ==
                  slurp(serial / (cell.stem() + ".weights")));
        }
        CHECK(slurp(dir / "summary.csv") == slurp(serial / "summary.csv"));
        CHECK(slurp(dir / "curves.csv") == slurp(serial / "curves.csv"));
        fs::remove_all(serial);
    }

    SECTION("resume reuses parseable reports and recomputes the rest") {
        const std::string before = payload_without_walltime(dir / "base_fedavg_seed2.json");
        fs::remove(dir / "base_fedavg_seed2.json");
        std::vector<CellResult> second;
        const int rc = run_experiment_cells(cfg, cells, dir.string(), 2, true, &second);
        CHECK(rc == 0);
        int resumed = 0, computed = 0;
        for (const auto& res : second) (res.resumed ? resumed : computed) += 1;
        CHECK(resumed == 3);
        CHECK(computed == 1);
        CHECK(payload_without_walltime(dir / "base_fedavg_seed2.json") == before);
        CHECK(slurp(dir / "summary.csv").rfind("cell,axis,", 0) == 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("distilled-size sweep curves carry nondecreasing uplink per seed") {
    json doc = tiny_doc();
    doc["methods"] = json::array({"fedd3_coreset"});
    doc["seeds"] = json::array({1});
    doc["sweep"] = {{"imgs_per_class", json::array({1, 2, 4})}};
    ExperimentConfig cfg = experiment_config_from_json(doc);
    fs::path dir = fresh_dir("distillfed_exp_imgcls");
    REQUIRE(run_experiment_cells(cfg, plan_sweep_imgcls(cfg), dir.string(), 2, false) == 0);

    std::istringstream in(slurp(dir / "curves.csv"));
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::uint64_t> uplink;
    while (std::getline(in, line)) {
        // cell,method,seed,round,cum_uplink_bits,...
        std::istringstream row(line);
        std::string field;
        for (int i = 0; i < 5; ++i) std::getline(row, field, ',');
        uplink.push_back(std::stoull(field));
    }
    REQUIRE(uplink.size() == 3);  // one one-round cell per sweep value
    CHECK(uplink[0] < uplink[1]);
    CHECK(uplink[1] < uplink[2]);
    // doubling the points per class doubles the per-point payload exactly
    CHECK(uplink[1] == 2 * uplink[0]);
    CHECK(uplink[2] == 4 * uplink[0]);
    fs::remove_all(dir);
}

TEST_CASE("failing cells are recorded and the run continues") {
    json doc = tiny_doc();
    doc["methods"] = json::array({"fedavg"});
    doc["dataset"] = {{"type", "idx"},
                      {"images", "/nonexistent/images.idx"},
                      {"labels", "/nonexistent/labels.idx"},
                      {"num_classes", 2}};
    ExperimentConfig cfg = experiment_config_from_json(doc);
    auto cells = plan_run(cfg);
    fs::path dir = fresh_dir("distillfed_exp_fail");
    std::vector<CellResult> results;
    const int failures = run_experiment_cells(cfg, cells, dir.string(), 1, false, &results);
    CHECK(failures == 2);  // one per seed, but the call itself returns normally
    for (const auto& res : results) {
        CHECK_FALSE(res.ok);
        CHECK_THAT(res.error, ContainsSubstring("cannot open"));
    }
    CHECK(fs::exists(dir / "base_fedavg_seed1.error.txt"));
    CHECK_THAT(slurp(dir / "base_fedavg_seed1.error.txt"), ContainsSubstring("cannot open"));
    // summary still appears, just with no data rows
    CHECK(std::count_if(fs::directory_iterator(dir), fs::directory_iterator{},
                        [](const fs::directory_entry& e) {
                            return e.path().extension() == ".json";
                        }) == 0);
    CHECK(slurp(dir / "summary.csv").rfind("cell,axis,", 0) == 0);
    fs::remove_all(dir);
}
