// ccar: config-driven front end for training, sweeps, diagnostics, attacks
// and theory checks.

#include "ccar/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

enum ExitCode : int { kOk = 0, kAssertion = 1, kUsage = 2, kIo = 3 };

int exit_code_for(ccar::Errc e) {
    switch (e) {
    case ccar::Errc::Config:
    case ccar::Errc::MinTrials:
        return kUsage;
    case ccar::Errc::Io:
    case ccar::Errc::BadMagic:
    case ccar::Errc::TruncatedFile:
    case ccar::Errc::LabelRangeError:
    case ccar::Errc::VersionMismatch:
    case ccar::Errc::CorruptCheckpoint:
        return kIo;
    default:
        return kAssertion;
    }
}

struct Args {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
};

void add_common(CLI::App* cmd, Args& a) {
    cmd->add_option("config", a.config, "experiment config file (INI)")->required();
    cmd->add_option("--seed", a.seed, "override the seed list with a single seed");
    cmd->add_option("--output-dir", a.output_dir, "override experiment.output_dir");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CCAR desk-scale laboratory"};
    app.require_subcommand(1);
    Args args;
    auto* train = app.add_subcommand("train", "train one model; writes checkpoint, history CSV, report");
    auto* sweep = app.add_subcommand("noise-sweep", "label-noise sweep with linear probing");
    auto* diagnose = app.add_subcommand("diagnose", "geometry diagnostics for a checkpoint");
    auto* attack = app.add_subcommand("attack", "input-perturbation evaluation of a checkpoint");
    auto* theory = app.add_subcommand("verify-theory", "Monte-Carlo checks of the theoretical results");
    auto* ablate = app.add_subcommand("ablate", "noise sweep over all five penalties");
    for (auto* c : {train, sweep, diagnose, attack, theory, ablate}) add_common(c, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        ccar::ExperimentConfig cfg = ccar::load_config(args.config);
        ccar::apply_overrides(cfg, args.seed, args.output_dir);
        const std::string out = cfg.output_dir;
        if (*train) {
            const auto r = ccar::cmd_train(cfg);
            std::cout << "train: test accuracy " << r.metrics.head_accuracy << ", linear probe "
                      << r.metrics.probe.begin()->second << " -> " << out << "\n";
        } else if (*sweep) {
            const auto runs = ccar::cmd_noise_sweep(cfg);
            std::cout << "noise-sweep: " << runs.size() << " runs -> " << out << "/noise_sweep.csv\n";
        } else if (*ablate) {
            const auto runs = ccar::cmd_ablate(cfg);
            std::cout << "ablate: " << runs.size() << " runs -> " << out << "/ablation.csv\n";
        } else if (*diagnose) {
            const auto r = ccar::cmd_diagnose(cfg);
            std::cout << "diagnose: sparsity " << r.sparsity << ", fisher " << r.fisher_ratio << ", ccr " << r.ccr
                      << " -> " << out << "/diagnostics.json\n";
        } else if (*attack) {
            const auto rs = ccar::cmd_attack(cfg);
            std::cout << "attack: " << rs.size() << " specs -> " << out << "/attacks.csv\n";
        } else if (*theory) {
            const auto o = ccar::cmd_verify_theory(cfg);
            if (!o.passed) {
                std::cerr << "verify-theory: FAIL: " << o.first_failure << "\n";
                return kAssertion;
            }
            std::cout << "verify-theory: all checks passed -> " << out << "/theory.json\n";
        }
    } catch (const ccar::Error& e) {
        std::cerr << "error [" << ccar::errc_name(e.code()) << "]: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kAssertion;
    }
    return kOk;
}
