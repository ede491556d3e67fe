#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stvsa/datagen.hpp"
#include "stvsa/dataset.hpp"
#include "stvsa/sfcm.hpp"

namespace stvsa::pipeline {

/// Balancing back ends selectable per experiment.
enum class BalanceMethod { none, ros, smote, adasyn, cwgan_gp };

BalanceMethod balance_method_from(const std::string& name);
std::string to_string(BalanceMethod m);

enum class ClassifierKind { staat, recurrent, conv };

ClassifierKind classifier_from(const std::string& name);
std::string to_string(ClassifierKind k);

/// Experiment settings grouped the way the config file spells them
/// (dotted keys, one `section.key = value` pair per line).
struct ExperimentConfig {
    std::uint64_t seed = 0;
    bool seed_set = false;

    struct {
        std::vector<double> load_levels = {0.8, 1.0, 1.2};
        std::vector<double> motor_ratios = {0.7, 0.8, 0.9};
        std::vector<double> fault_locations = {0.0, 0.25, 0.5, 0.75};
        std::vector<double> clearing_times = {0.05, 0.1};
        std::size_t target_count = 720;
        std::size_t buses = 10;
        double otw = 0.05;
        double test_fraction = 0.2;
        std::optional<double> imbalance_ratio;
        std::optional<double> snr_db;  // absent means noise-free
        bool write_trajectories = true;
    } dataset;

    struct {
        double stable_floor = 0.9;
        double unstable_ceiling = 0.7;
        double fuzziness = 2.0;
        double tolerance = 1e-5;
        std::size_t max_iterations = 300;
    } labeling;

    struct {
        BalanceMethod method = BalanceMethod::cwgan_gp;
        double target_ratio = 1.0;
        std::size_t k = 5;  // SMOTE/ADASYN neighborhood
        std::size_t epochs = 200;
        std::size_t batch = 64;
        double lambda = 10.0;
        double lr = 1e-4;
        std::size_t n_critic = 5;
        std::size_t noise_dim = 100;
    } balancing;

    struct {
        ClassifierKind classifier = ClassifierKind::staat;
        std::size_t d_model = 64;
        std::size_t heads = 4;
        std::size_t layers = 2;
        std::size_t ffn_hidden = 128;
        double dropout = 0.1;
        std::size_t hidden = 64;  // recurrent/conv baseline width
        std::size_t epochs = 40;
        std::size_t batch = 64;
        double lr = 1e-4;
    } model;

    struct {
        std::vector<std::string> metrics = {"acc", "mcc", "f1",
                                            "gmean", "mis", "fal"};
        std::size_t latency_repeats = 1;
    } evaluation;
};

/// Parses the key-value config format; unknown keys and malformed values
/// throw. The seed may come from the file or the --seed override, but one
/// of them is required before a stage runs.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical one-line-per-key rendering: equal configs produce equal text,
/// and its hash keys sweep restartability.
std::string canonical_config_text(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// On-disk record of what a run produced: artifact paths with content hashes,
/// per-stage wall-clock timings, and the config hash everything belongs to.
struct RunManifest {
    std::uint64_t config_hash = 0;
    std::string status = "ok";  // "ok" or "failed: <reason>"
    std::map<std::string, std::string> artifacts;        // name -> path
    std::map<std::string, std::uint64_t> artifact_hash;  // name -> fnv1a
    std::map<std::string, double> timings_ms;            // stage -> wall time
    int format_version = 1;
};

RunManifest load_manifest(const std::filesystem::path& dir);
void save_manifest(const std::filesystem::path& dir, const RunManifest& m);

/// Re-hashes every listed artifact; any missing file or mismatch throws.
void verify_manifest(const std::filesystem::path& dir, const RunManifest& m);

/// Throws if any test-split sample is synthetic; called on every dataset
/// that crosses a stage boundary.
void assert_no_synthetic_test(const data::Dataset& d);

struct StageOutcome {
    std::vector<std::string> warnings;
};

/// Stage entry points. Each reads its inputs from `out` (as written by the
/// previous stage), writes its artifacts there, and updates manifest.json.
StageOutcome run_simulate(const ExperimentConfig& cfg,
                          const std::filesystem::path& out);
StageOutcome run_label(const ExperimentConfig& cfg,
                       const std::filesystem::path& out);
StageOutcome run_balance(const ExperimentConfig& cfg,
                         const std::filesystem::path& out);
StageOutcome run_train(const ExperimentConfig& cfg,
                       const std::filesystem::path& out);
StageOutcome run_evaluate(const ExperimentConfig& cfg,
                          const std::filesystem::path& out);

/// Balances only training rows; refuses a request containing test rows.
data::Dataset balance_training_split(const ExperimentConfig& cfg,
                                     const data::Dataset& train_only,
                                     nlohmann::json* distance_report);

struct SweepRow {
    std::string value;
    bool ok = false;
    bool skipped = false;  // completed earlier under the same config hash
    std::string error;
    nlohmann::json report;  // EvalReport of the row when ok
};

struct SweepResult {
    std::vector<SweepRow> rows;
    bool any_failed = false;
};

/// One full pipeline per axis value under out/<axis>_<value>/, merged into
/// out/sweep_<axis>.csv. Rows that fail are marked and the sweep continues;
/// rows already completed under the same config hash are skipped.
SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values,
                      const std::filesystem::path& out);

/// Summarizes everything the manifest lists into report.json.
nlohmann::json run_report(const std::filesystem::path& out);

}  // namespace stvsa::pipeline
