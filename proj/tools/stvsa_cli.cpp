#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stvsa/errors.hpp"
#include "stvsa/pipeline.hpp"

namespace pl = stvsa::pipeline;

namespace {

std::vector<std::string> split_values(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    for (char c : text) {
        if (c == ',') {
            out.push_back(item);
            item.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            item += c;
        }
    }
    out.push_back(item);
    return out;
}

// Returns 1 when --strict turns warnings fatal, 0 otherwise.
int report_warnings(const pl::StageOutcome& outcome, bool strict) {
    for (const auto& w : outcome.warnings)
        std::cerr << "warning: " << w << "\n";
    if (strict && !outcome.warnings.empty()) {
        std::cerr << "error: warnings are fatal under --strict\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Short-term voltage stability assessment pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, axis, values_text;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool strict = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config file")
            ->required();
        cmd->add_option("--out", out_dir, "run directory")->required();
        cmd->add_option("--seed", seed, "overrides the config seed")
            ->each([&](const std::string&) { seed_given = true; });
        cmd->add_flag("--strict", strict, "treat warnings as errors");
    };

    auto* c_simulate =
        app.add_subcommand("simulate", "build the scenario dataset");
    auto* c_label =
        app.add_subcommand("label", "fill in labels with semi-supervised FCM");
    auto* c_balance =
        app.add_subcommand("balance", "rebalance the training split");
    auto* c_train = app.add_subcommand("train", "fit the classifier");
    auto* c_evaluate =
        app.add_subcommand("evaluate", "score the test split and report");
    auto* c_sweep =
        app.add_subcommand("sweep", "one full pipeline per axis value");
    auto* c_report =
        app.add_subcommand("report", "summarize a finished run directory");
    for (auto* cmd : {c_simulate, c_label, c_balance, c_train, c_evaluate})
        add_common(cmd);
    add_common(c_sweep);
    c_sweep
        ->add_option("--axis", axis,
                     "imbalance, otw, snr, resampler or classifier")
        ->required();
    c_sweep->add_option("--values", values_text, "comma-separated axis values")
        ->required();
    c_report->add_option("--out", out_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (c_report->parsed()) {
            pl::run_report(out_dir);
            std::cout << "report: wrote " << out_dir << "/report.json\n";
            return 0;
        }

        auto cfg = pl::load_config(config_path);
        if (seed_given) {
            cfg.seed = seed;
            cfg.seed_set = true;
        }

        if (c_sweep->parsed()) {
            auto res = pl::run_sweep(cfg, axis, split_values(values_text),
                                     out_dir);
            for (const auto& row : res.rows)
                std::cout << axis << "=" << row.value << ": "
                          << (row.ok ? (row.skipped ? "skipped (complete)"
                                                    : "ok")
                                     : "failed: " + row.error)
                          << "\n";
            std::cout << "sweep: wrote " << out_dir << "/sweep_" << axis
                      << ".csv\n";
            return res.any_failed ? 3 : 0;
        }

        pl::StageOutcome outcome;
        const char* wrote = nullptr;
        if (c_simulate->parsed()) {
            outcome = pl::run_simulate(cfg, out_dir);
            wrote = "dataset.csv";
        } else if (c_label->parsed()) {
            outcome = pl::run_label(cfg, out_dir);
            wrote = "labeled.csv";
        } else if (c_balance->parsed()) {
            outcome = pl::run_balance(cfg, out_dir);
            wrote = "balanced.csv";
        } else if (c_train->parsed()) {
            outcome = pl::run_train(cfg, out_dir);
            wrote = "model.ckpt";
        } else {
            outcome = pl::run_evaluate(cfg, out_dir);
            wrote = "eval_report.json";
        }
        std::cout << app.get_subcommands().front()->get_name() << ": wrote "
                  << out_dir << "/" << wrote << "\n";
        return report_warnings(outcome, strict);
    } catch (const stvsa::NumericFault& e) {
        std::cerr << "numeric fault: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
