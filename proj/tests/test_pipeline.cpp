#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stvsa/dataset.hpp"
#include "stvsa/errors.hpp"
#include "stvsa/metrics.hpp"
#include "stvsa/pipeline.hpp"

using namespace stvsa;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("stvsa-pipe-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// Small, fast experiment: reduced grid, tiny models, no trajectory dump.
pipeline::ExperimentConfig tiny_config(std::uint64_t seed = 21) {
    pipeline::ExperimentConfig c;
    c.seed = seed;
    c.seed_set = true;
    c.dataset.target_count = 100;
    c.dataset.otw = 0.03;
    c.dataset.write_trajectories = false;
    c.labeling.max_iterations = 60;
    c.balancing.method = pipeline::BalanceMethod::ros;
    c.model.d_model = 8;
    c.model.heads = 2;
    c.model.layers = 1;
    c.model.ffn_hidden = 16;
    c.model.dropout = 0.0;
    c.model.hidden = 8;
    c.model.epochs = 2;
    c.model.batch = 32;
    c.model.lr = 1e-3;
    return c;
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parser handles the documented key-value format") {
    std::string text =
        "# experiment file\n"
        "seed = 99\n"
        "dataset.target_count = 150\n"
        "dataset.load_levels = 0.8, 1.2\n"
        "dataset.otw = 0.04\n"
        "dataset.imbalance_ratio = 10:1\n"
        "dataset.snr_db = none\n"
        "labeling.fuzziness = 2.5\n"
        "balancing.method = smote\n"
        "balancing.k = 3\n"
        "model.classifier = recurrent\n"
        "model.epochs = 7\n"
        "evaluation.metrics = acc, mcc\n";
    auto cfg = pipeline::parse_config_text(text);
    CHECK(cfg.seed == 99);
    CHECK(cfg.seed_set);
    CHECK(cfg.dataset.target_count == 150);
    CHECK(cfg.dataset.load_levels == std::vector<double>{0.8, 1.2});
    CHECK(cfg.dataset.otw == 0.04);
    REQUIRE(cfg.dataset.imbalance_ratio.has_value());
    CHECK(*cfg.dataset.imbalance_ratio == 10.0);
    CHECK(!cfg.dataset.snr_db.has_value());
    CHECK(cfg.labeling.fuzziness == 2.5);
    CHECK(cfg.balancing.method == pipeline::BalanceMethod::smote);
    CHECK(cfg.balancing.k == 3);
    CHECK(cfg.model.classifier == pipeline::ClassifierKind::recurrent);
    CHECK(cfg.model.epochs == 7);
    CHECK(cfg.evaluation.metrics == std::vector<std::string>{"acc", "mcc"});

    CHECK_THROWS_AS(pipeline::parse_config_text("bogus.key = 1\n"), ConfigError);
    CHECK_THROWS_AS(pipeline::parse_config_text("seed = notanumber\n"),
                    ConfigError);
    CHECK_THROWS_AS(pipeline::parse_config_text("balancing.method = magic\n"),
                    ConfigError);
    CHECK_THROWS_AS(pipeline::parse_config_text("model.classifier = mlp\n"),
                    ConfigError);
    CHECK_THROWS_AS(
        pipeline::parse_config_text("evaluation.metrics = acc, bogus\n"),
        ConfigError);
    CHECK_THROWS_AS(pipeline::parse_config_text("seed 42\n"), ConfigError);
}

TEST_CASE("canonical config text is order-invariant and value-sensitive") {
    auto a = pipeline::parse_config_text(
        "seed = 7\nmodel.epochs = 3\ndataset.otw = 0.05\n");
    auto b = pipeline::parse_config_text(
        "dataset.otw = 0.05\nseed = 7\nmodel.epochs = 3\n");
    CHECK(pipeline::canonical_config_text(a) ==
          pipeline::canonical_config_text(b));
    CHECK(pipeline::config_hash(a) == pipeline::config_hash(b));

    auto c = pipeline::parse_config_text(
        "seed = 7\nmodel.epochs = 4\ndataset.otw = 0.05\n");
    CHECK(pipeline::config_hash(a) != pipeline::config_hash(c));

    // Round trip: canonical text parses back to the same canonical text.
    auto back = pipeline::parse_config_text(pipeline::canonical_config_text(a));
    CHECK(pipeline::canonical_config_text(back) ==
          pipeline::canonical_config_text(a));
}

TEST_CASE("simulate writes a verifiable manifest and reproduces bit-for-bit") {
    TempDir ta, tb;
    auto cfg = tiny_config();
    auto out_a = pipeline::run_simulate(cfg, ta.path);
    CHECK(out_a.warnings.empty());
    REQUIRE(fs::exists(ta.path / "dataset.csv"));
    REQUIRE(fs::exists(ta.path / "norm.json"));
    auto man_a = pipeline::load_manifest(ta.path);
    CHECK(man_a.config_hash == pipeline::config_hash(cfg));
    CHECK(man_a.status == "ok");
    CHECK(man_a.timings_ms.count("simulate") == 1);
    pipeline::verify_manifest(ta.path, man_a);

    pipeline::run_simulate(cfg, tb.path);
    auto man_b = pipeline::load_manifest(tb.path);
    CHECK(man_a.artifact_hash.at("dataset") == man_b.artifact_hash.at("dataset"));

    auto d = data::load_csv((ta.path / "dataset.csv").string());
    CHECK(d.samples.size() == 100);

    // Requested imbalance is honored on the rule labels within one sample.
    TempDir tc;
    auto ratio_cfg = cfg;
    ratio_cfg.dataset.imbalance_ratio = 8.0;
    pipeline::run_simulate(ratio_cfg, tc.path);
    auto dr = data::load_csv((tc.path / "dataset.csv").string());
    auto st = data::count_label(dr, data::label_stable);
    auto un = data::count_label(dr, data::label_unstable);
    auto target = static_cast<std::size_t>(
        std::llround(static_cast<double>(st) / 8.0));
    CHECK(un >= (target > 0 ? target - 1 : 0));
    CHECK(un <= target + 1);
}

TEST_CASE("simulate surfaces composition warnings and strict config demands") {
    TempDir t;
    auto cfg = tiny_config();
    cfg.dataset.load_levels = {0.8};       // mild-only grid: no unstable cases
    cfg.dataset.clearing_times = {0.05};
    cfg.dataset.fault_locations = {0.0};
    auto out = pipeline::run_simulate(cfg, t.path);
    CHECK(!out.warnings.empty());

    auto unseeded = tiny_config();
    unseeded.seed_set = false;
    TempDir t2;
    CHECK_THROWS_AS(pipeline::run_simulate(unseeded, t2.path), ConfigError);
}

TEST_CASE("label fills every row, locks seeds, and reports silhouettes") {
    TempDir t;
    auto cfg = tiny_config();
    pipeline::run_simulate(cfg, t.path);
    auto before = data::load_csv((t.path / "dataset.csv").string());
    pipeline::run_label(cfg, t.path);
    auto after = data::load_csv((t.path / "labeled.csv").string());
    REQUIRE(after.samples.size() == before.samples.size());
    for (std::size_t i = 0; i < after.samples.size(); ++i) {
        CHECK(after.samples[i].label != data::label_unlabeled);
        if (before.samples[i].label != data::label_unlabeled)
            CHECK(after.samples[i].label == before.samples[i].label);
    }
    auto sc = read_json(t.path / "sc_report.json");
    CHECK(std::isfinite(sc.at("sc_sfcm").get<double>()));
    CHECK(std::isfinite(sc.at("sc_engineering").get<double>()));
    pipeline::verify_manifest(t.path, pipeline::load_manifest(t.path));

    // A grid with no unstable seeds cannot anchor both clusters.
    TempDir t2;
    auto mild = tiny_config();
    mild.dataset.load_levels = {0.8};
    mild.dataset.clearing_times = {0.05};
    mild.dataset.fault_locations = {0.0};
    pipeline::run_simulate(mild, t2.path);
    CHECK_THROWS_AS(pipeline::run_label(mild, t2.path), ConfigError);
}

TEST_CASE("fuzzy labels score at least the rule labels on default-shaped data") {
    TempDir t;
    auto cfg = tiny_config(17);
    cfg.dataset.target_count = 360;
    pipeline::run_simulate(cfg, t.path);
    pipeline::run_label(cfg, t.path);
    auto sc = read_json(t.path / "sc_report.json");
    double sfcm_sc = sc.at("sc_sfcm").get<double>();
    double eng_sc = sc.at("sc_engineering").get<double>();
    CHECK(sfcm_sc >= eng_sc);
}

TEST_CASE("balance reaches the ratio on train rows and never touches test") {
    TempDir t;
    auto cfg = tiny_config();
    cfg.dataset.target_count = 160;
    cfg.dataset.imbalance_ratio = 10.0;
    pipeline::run_simulate(cfg, t.path);
    pipeline::run_label(cfg, t.path);
    auto labeled = data::load_csv((t.path / "labeled.csv").string());
    pipeline::run_balance(cfg, t.path);
    auto balanced = data::load_csv((t.path / "balanced.csv").string());

    std::size_t train_st = 0, train_un = 0;
    for (const auto& s : balanced.samples) {
        if (s.split == "test") {
            CHECK(!s.synthetic);
            continue;
        }
        if (s.label == data::label_stable) ++train_st;
        if (s.label == data::label_unstable) ++train_un;
        if (s.synthetic) CHECK(s.provenance == "ros");
    }
    CHECK(train_un >= train_st - 1);
    CHECK(train_un <= train_st + 1);

    // Test rows ride through byte-identically.
    std::vector<const data::Sample*> lab_test, bal_test;
    for (const auto& s : labeled.samples)
        if (s.split == "test") lab_test.push_back(&s);
    for (const auto& s : balanced.samples)
        if (s.split == "test") bal_test.push_back(&s);
    REQUIRE(lab_test.size() == bal_test.size());
    for (std::size_t i = 0; i < lab_test.size(); ++i) {
        CHECK(lab_test[i]->features == bal_test[i]->features);
        CHECK(lab_test[i]->label == bal_test[i]->label);
    }

    // Ids stay unique after synthesis.
    std::vector<std::int64_t> ids;
    for (const auto& s : balanced.samples) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());

    // Passthrough copies the labeled set unchanged.
    TempDir t2;
    auto none_cfg = cfg;
    none_cfg.balancing.method = pipeline::BalanceMethod::none;
    pipeline::run_simulate(none_cfg, t2.path);
    pipeline::run_label(none_cfg, t2.path);
    pipeline::run_balance(none_cfg, t2.path);
    CHECK(data::fnv1a_file((t2.path / "balanced.csv").string()) ==
          data::fnv1a_file((t2.path / "labeled.csv").string()));

    // The guard refuses any non-training row outright.
    data::Dataset with_test = labeled;
    CHECK_THROWS_AS(
        pipeline::balance_training_split(cfg, with_test, nullptr), ConfigError);
}

TEST_CASE("gan balancing emits a finite three-way distance report") {
    TempDir t;
    auto cfg = tiny_config(5);
    cfg.dataset.target_count = 120;
    cfg.dataset.imbalance_ratio = 5.0;  // guarantees a minority to synthesize
    cfg.balancing.method = pipeline::BalanceMethod::cwgan_gp;
    cfg.balancing.epochs = 2;
    cfg.balancing.batch = 16;
    cfg.balancing.noise_dim = 8;
    pipeline::run_simulate(cfg, t.path);
    pipeline::run_label(cfg, t.path);
    pipeline::run_balance(cfg, t.path);
    auto rep = read_json(t.path / "distance_report.json");
    CHECK(std::isfinite(rep.at("wd").get<double>()));
    CHECK(std::isfinite(rep.at("mmd").get<double>()));
    CHECK(std::isfinite(rep.at("fid").get<double>()));
    CHECK(fs::exists(t.path / "gan_generator.ckpt"));
    auto balanced = data::load_csv((t.path / "balanced.csv").string());
    bool saw_synthetic = false;
    for (const auto& s : balanced.samples) {
        if (!s.synthetic) continue;
        saw_synthetic = true;
        CHECK(s.split == "train");
        CHECK(s.provenance == "cwgan_gp");
        for (double f : s.features) {
            CHECK(f >= 0.0);
            CHECK(f <= 1.0);
        }
    }
    CHECK(saw_synthetic);
}

TEST_CASE("train writes a loadable checkpoint and a loss row per epoch") {
    TempDir t;
    auto cfg = tiny_config();
    pipeline::run_simulate(cfg, t.path);
    pipeline::run_label(cfg, t.path);
    pipeline::run_balance(cfg, t.path);
    pipeline::run_train(cfg, t.path);
    REQUIRE(fs::exists(t.path / "model.ckpt"));
    auto loss_text = read_text(t.path / "loss.csv");
    std::size_t rows = 0;
    for (char ch : loss_text)
        if (ch == '\n') ++rows;
    CHECK(rows == cfg.model.epochs + 1);  // header + one row per epoch
    pipeline::verify_manifest(t.path, pipeline::load_manifest(t.path));
}

TEST_CASE("non-finite training input marks the manifest failed and raises") {
    TempDir t;
    auto cfg = tiny_config();
    pipeline::run_simulate(cfg, t.path);
    pipeline::run_label(cfg, t.path);
    pipeline::run_balance(cfg, t.path);
    auto d = data::load_csv((t.path / "balanced.csv").string());
    for (auto& s : d.samples)
        if (s.split == "train") {
            s.features[0] = std::numeric_limits<double>::quiet_NaN();
            break;
        }
    data::save_csv(d, (t.path / "balanced.csv").string());
    CHECK_THROWS_AS(pipeline::run_train(cfg, t.path), NumericFault);
    auto man = pipeline::load_manifest(t.path);
    CHECK(man.status.rfind("failed", 0) == 0);
}

TEST_CASE("evaluate reports the metric suite consistent with its confusion") {
    TempDir t;
    auto cfg = tiny_config();
    pipeline::run_simulate(cfg, t.path);
    pipeline::run_label(cfg, t.path);
    pipeline::run_balance(cfg, t.path);
    pipeline::run_train(cfg, t.path);
    pipeline::run_evaluate(cfg, t.path);

    auto rep = read_json(t.path / "eval_report.json");
    auto cm = rep.at("confusion");
    metrics::ConfusionMatrix m;
    m.n_ss = cm.at("predicted_stable_actual_stable").get<std::size_t>();
    m.n_su = cm.at("predicted_stable_actual_unstable").get<std::size_t>();
    m.n_us = cm.at("predicted_unstable_actual_stable").get<std::size_t>();
    m.n_uu = cm.at("predicted_unstable_actual_unstable").get<std::size_t>();
    auto want = metrics::classification_metrics(m);
    CHECK(rep.at("acc").get<double>() == doctest::Approx(want.acc).epsilon(1e-12));
    CHECK(rep.at("mis").get<double>() == doctest::Approx(want.mis).epsilon(1e-12));
    CHECK(rep.at("fal").get<double>() == doctest::Approx(want.fal).epsilon(1e-12));
    CHECK(rep.contains("train_acc"));
    CHECK(rep.at("n_test").get<std::size_t>() == m.total());

    auto lat = read_json(t.path / "latency.json");
    CHECK(lat.at("latency_ms_per_sample").get<double>() >= 0.0);

    // Confusion CSV re-derives the same counts.
    auto csv = read_text(t.path / "confusion.csv");
    CHECK(csv.find("predicted") != std::string::npos);

    // A checkpoint trained at one window length refuses a different one.
    auto wide = cfg;
    wide.dataset.otw = 0.05;
    TempDir t2;
    pipeline::run_simulate(wide, t2.path);
    pipeline::run_label(wide, t2.path);
    fs::copy_file(t.path / "model.ckpt", t2.path / "model.ckpt");
    try {
        pipeline::run_evaluate(wide, t2.path);
        FAIL("expected a shape mismatch");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("900") != std::string::npos);   // checkpoint dim
        CHECK(msg.find("1500") != std::string::npos);  // dataset dim
    }
}

TEST_CASE("recurrent and convolutional baselines run end to end") {
    for (auto kind : {pipeline::ClassifierKind::recurrent,
                      pipeline::ClassifierKind::conv}) {
        TempDir t;
        auto cfg = tiny_config(31);
        cfg.model.classifier = kind;
        cfg.model.epochs = 2;
        pipeline::run_simulate(cfg, t.path);
        pipeline::run_label(cfg, t.path);
        pipeline::run_balance(cfg, t.path);
        pipeline::run_train(cfg, t.path);
        pipeline::run_evaluate(cfg, t.path);
        auto rep = read_json(t.path / "eval_report.json");
        double acc = rep.at("acc").get<double>();
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
    }
}

TEST_CASE("identical seeds reproduce dataset hashes and the eval report") {
    TempDir ta, tb;
    auto cfg = tiny_config(77);
    for (const auto* dir : {&ta.path, &tb.path}) {
        pipeline::run_simulate(cfg, *dir);
        pipeline::run_label(cfg, *dir);
        pipeline::run_balance(cfg, *dir);
        pipeline::run_train(cfg, *dir);
        pipeline::run_evaluate(cfg, *dir);
    }
    auto man_a = pipeline::load_manifest(ta.path);
    auto man_b = pipeline::load_manifest(tb.path);
    CHECK(man_a.artifact_hash.at("dataset") == man_b.artifact_hash.at("dataset"));
    CHECK(man_a.artifact_hash.at("labeled") == man_b.artifact_hash.at("labeled"));
    CHECK(man_a.artifact_hash.at("balanced") ==
          man_b.artifact_hash.at("balanced"));
    CHECK(read_text(ta.path / "eval_report.json") ==
          read_text(tb.path / "eval_report.json"));
}

TEST_CASE("sweep merges rows, skips finished work, and survives failures") {
    TempDir t;
    auto cfg = tiny_config(13);
    auto res = pipeline::run_sweep(cfg, "snr", {"none", "30"}, t.path);
    REQUIRE(res.rows.size() == 2);
    CHECK(!res.any_failed);
    for (const auto& r : res.rows) {
        CHECK(r.ok);
        CHECK(!r.skipped);
    }
    REQUIRE(fs::exists(t.path / "sweep_snr.csv"));
    auto csv = read_text(t.path / "sweep_snr.csv");
    std::size_t lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 3);  // header + 2 rows

    // Rerun: both rows already complete under the same config hash.
    auto again = pipeline::run_sweep(cfg, "snr", {"none", "30"}, t.path);
    for (const auto& r : again.rows) {
        CHECK(r.ok);
        CHECK(r.skipped);
    }

    // An impossible ratio fails its row but the sweep finishes.
    TempDir t2;
    auto res2 = pipeline::run_sweep(cfg, "imbalance", {"4", "100000"}, t2.path);
    REQUIRE(res2.rows.size() == 2);
    CHECK(res2.rows[0].ok);
    CHECK(!res2.rows[1].ok);
    CHECK(res2.any_failed);
    CHECK(!res2.rows[1].error.empty());
    auto csv2 = read_text(t2.path / "sweep_imbalance.csv");
    CHECK(csv2.find("failed") != std::string::npos);
}

TEST_CASE("stage boundaries reject synthetic rows in the test split") {
    TempDir t;
    auto cfg = tiny_config();
    pipeline::run_simulate(cfg, t.path);
    pipeline::run_label(cfg, t.path);
    pipeline::run_balance(cfg, t.path);
    auto poisoned = data::load_csv((t.path / "balanced.csv").string());
    auto rogue = poisoned.samples.front();
    rogue.id = data::next_id(poisoned);
    rogue.split = "test";
    rogue.synthetic = true;
    poisoned.samples.push_back(rogue);
    data::save_csv(poisoned, (t.path / "balanced.csv").string());
    CHECK_THROWS_AS(pipeline::run_train(cfg, t.path), ContractError);
}

TEST_CASE("manifest verification detects artifact drift") {
    TempDir t;
    auto cfg = tiny_config();
    pipeline::run_simulate(cfg, t.path);
    auto man = pipeline::load_manifest(t.path);
    std::ofstream(t.path / "dataset.csv", std::ios::app) << "tampered\n";
    CHECK_THROWS_AS(pipeline::verify_manifest(t.path, man), ContractError);
}

TEST_CASE("report aggregates whatever the manifest lists") {
    TempDir t;
    auto cfg = tiny_config();
    pipeline::run_simulate(cfg, t.path);
    pipeline::run_label(cfg, t.path);
    pipeline::run_balance(cfg, t.path);
    pipeline::run_train(cfg, t.path);
    pipeline::run_evaluate(cfg, t.path);
    auto rep = pipeline::run_report(t.path);
    CHECK(rep.contains("config_hash"));
    CHECK(rep.contains("timings_ms"));
    CHECK(rep.at("eval").contains("acc"));
    CHECK(fs::exists(t.path / "report.json"));
}

#ifdef STVSA_CLI_PATH
TEST_CASE("command line binary maps outcomes to exit codes") {
    auto run = [](const std::string& args) {
        std::string cmd = std::string(STVSA_CLI_PATH) + " " + args +
                          " > /dev/null 2>&1";
        int rc = std::system(cmd.c_str());
        return WEXITSTATUS(rc);
    };
    CHECK(run("--help") == 0);
    CHECK(run("simulate") == 1);                       // missing --config
    CHECK(run("simulate --config /nonexistent.cfg --out /tmp/x") == 1);

    TempDir t;
    std::ofstream(t.path / "exp.cfg")
        << "seed = 3\n"
        << "dataset.target_count = 100\n"
        << "dataset.otw = 0.03\n"
        << "dataset.write_trajectories = false\n"
        << "balancing.method = ros\n"
        << "model.d_model = 8\nmodel.heads = 2\nmodel.layers = 1\n"
        << "model.ffn_hidden = 16\nmodel.dropout = 0\nmodel.epochs = 1\n"
        << "model.lr = 0.001\n";
    auto cfgflag = " --config " + (t.path / "exp.cfg").string() + " --out " +
                   (t.path / "run").string();
    CHECK(run("simulate" + cfgflag) == 0);
    CHECK(run("label" + cfgflag) == 0);
    CHECK(run("balance" + cfgflag) == 0);
    CHECK(run("train" + cfgflag) == 0);
    CHECK(run("evaluate" + cfgflag) == 0);
    CHECK(run("report --out " + (t.path / "run").string()) == 0);
    CHECK(fs::exists(t.path / "run" / "eval_report.json"));

    // Strict mode turns composition warnings into a refusal.
    std::ofstream(t.path / "mild.cfg")
        << "seed = 3\ndataset.target_count = 100\n"
        << "dataset.load_levels = 0.8\ndataset.clearing_times = 0.05\n"
        << "dataset.fault_locations = 0\n"
        << "dataset.write_trajectories = false\n";
    CHECK(run("simulate --config " + (t.path / "mild.cfg").string() +
              " --out " + (t.path / "mild_run").string() + " --strict") != 0);
}
#endif

}  // TEST_SUITE
