// Command-line front end: one subcommand per pipeline stage plus run-all.
//
//   hpylori run-all --config pipeline.ini --workdir out --seed 7 --deterministic
//   hpylori train --workdir out --set train.epochs=20
//   hpylori print-config > pipeline.ini
//
// Exit codes: 0 success, 1 unexpected failure, 2 invalid configuration or
// usage, 3 missing input, 4 model/config/version mismatch, 5 bad data.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hpylori/config.hpp"
#include "hpylori/error.hpp"
#include "hpylori/pipeline.hpp"

namespace {

int exit_code(hpylori::ErrorKind kind) {
    using hpylori::ErrorKind;
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::InvalidArgument:
            return 2;
        case ErrorKind::MissingInput:
        case ErrorKind::MissingFile:
            return 3;
        case ErrorKind::VersionMismatch:
        case ErrorKind::ConfigMismatch:
        case ErrorKind::ShapeMismatch:
        case ErrorKind::CorruptFile:
            return 4;
        case ErrorKind::MalformedFile:
        case ErrorKind::UnsupportedFormat:
        case ErrorKind::NoTissue:
        case ErrorKind::SlideTooSmall:
        case ErrorKind::EmptyInput:
        case ErrorKind::DegenerateRoc:
        case ErrorKind::TooFewPatients:
        case ErrorKind::NonFiniteLoss:
            return 5;
        case ErrorKind::Io:
            return 1;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised H. pylori detection on stained slides"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    std::string config_file;
    std::vector<std::string> overrides;
    std::string workdir;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool deterministic = false;
    bool resume = false;
    bool quiet = false;

    app.add_option("-c,--config", config_file, "INI configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "Override a config key, e.g. --set train.epochs=10");
    app.add_option("-w,--workdir", workdir, "Work directory (overrides paths.workdir)");
    app.add_option("--seed", seed, "Root seed (overrides seeds.seed)");
    app.add_option("-j,--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--deterministic", deterministic, "Single-threaded strict mode");
    app.add_flag("-q,--quiet", quiet, "Suppress progress output");

    std::vector<std::pair<CLI::App*, hpylori::Stage>> stage_cmds;
    for (auto [name, stage, help] : {
             std::tuple{"synth", hpylori::Stage::Synth, "Generate the synthetic cohort"},
             std::tuple{"segment", hpylori::Stage::Segment, "Detect tissue and trace its borders"},
             std::tuple{"sample", hpylori::Stage::Sample, "Draw training windows from negative slides"},
             std::tuple{"train", hpylori::Stage::Train, "Train the autoencoder"},
             std::tuple{"score", hpylori::Stage::Score, "Score inference windows"},
             std::tuple{"diagnose", hpylori::Stage::Diagnose, "Aggregate window scores per slide"},
             std::tuple{"evaluate", hpylori::Stage::Evaluate, "Cross-validated evaluation report"},
         }) {
        stage_cmds.emplace_back(app.add_subcommand(name, help), stage);
    }
    auto* run_all = app.add_subcommand("run-all", "Run every stage in order");
    run_all->add_flag("--resume", resume, "Skip stages already completed under this config");
    auto* print_config = app.add_subcommand("print-config", "Print the effective configuration as INI");

    CLI11_PARSE(app, argc, argv);

    try {
        hpylori::PipelineConfig cfg = config_file.empty() ? hpylori::PipelineConfig{}
                                                          : hpylori::load_config(config_file);
        for (const auto& o : overrides) hpylori::apply_override(cfg, o);
        if (!workdir.empty()) cfg.paths.workdir = workdir;
        if (seed) cfg.seed = *seed;
        cfg.validate();

        if (print_config->parsed()) {
            std::cout << cfg.to_ini();
            return 0;
        }

        hpylori::RunOptions opts;
        opts.threads = threads;
        opts.deterministic = deterministic;
        opts.log = quiet ? nullptr : &std::cerr;

        if (run_all->parsed()) {
            hpylori::run_all(cfg, opts, resume);
            return 0;
        }
        for (auto& [cmd, stage] : stage_cmds) {
            if (cmd->parsed()) hpylori::run_stage(stage, cfg, opts);
        }
        return 0;
    } catch (const hpylori::Error& e) {
        std::cerr << "error (" << hpylori::to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
