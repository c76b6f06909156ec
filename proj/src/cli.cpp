#include "pgan/cli.hpp"

#include "pgan/checkpoint.hpp"
#include "pgan/error.hpp"
#include "pgan/experiments.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

namespace pgan {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string input;  // run directory or checkpoint file
};

TrainConfig load_config(const Options& o) {
    auto cfg = TrainConfig::load(o.config);
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    return cfg;
}

void write_config(const TrainConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    std::ofstream os(out / "config.txt");
    os << cfg.to_text();
}

void print_summary(const Summary& s, std::ostream& out) { out << s.text(); }

void cmd_train(const Options& o, std::ostream& out) {
    const auto cfg = load_config(o);
    fs::create_directories(o.out);
    Trainer trainer(cfg, load_dataset(cfg));
    const auto log = trainer.train(o.out);
    print_summary(emit_figures(log, o.out), out);
}

void cmd_histograms(const Options& o, std::ostream& out) {
    auto cfg = load_config(o);
    cfg.histogram_every = 1;
    fs::create_directories(o.out);
    Trainer trainer(cfg, load_dataset(cfg));
    const auto log = trainer.train(o.out);
    emit_figures(log, o.out);
    Summary s;
    s.set("loss", log.loss);
    for (const auto& e : log.epochs) {
        char key[48];
        std::snprintf(key, sizeof key, "epoch%03zu_histogram_overlap", e.epoch);
        s.set(key, e.histogram_overlap);
    }
    s.write(fs::path(o.out) / "summary.txt");
    print_summary(s, out);
}

void cmd_fixed_generator(const Options& o, std::ostream& out) {
    const auto cfg = load_config(o);
    write_config(cfg, o.out);
    print_summary(fixed_generator_experiment(cfg, o.out).summary, out);
}

void cmd_toy_landscape(const Options& o, std::ostream& out) {
    const auto cfg = load_config(o);
    write_config(cfg, o.out);
    print_summary(toy_landscape_experiment(cfg, o.out).summary, out);
}

void cmd_freeze(const Options& o, std::ostream& out) {
    auto cfg = load_config(o);
    if (std::none_of(cfg.freeze.begin(), cfg.freeze.end(), [](const auto& f) { return f.player == Player::Gen; })) {
        cfg.freeze.push_back({Player::Gen, 5, 15});
        cfg.validate();
    }
    write_config(cfg, o.out);
    print_summary(freeze_experiment(cfg, o.out).summary, out);
}

void cmd_emit_figures(const Options& o, std::ostream& out) {
    const fs::path dir = o.out.empty() ? fs::path(o.input) : fs::path(o.out);
    print_summary(emit_figures(RunLog::read(fs::path(o.input) / "runlog.ndjson"), dir), out);
}

void cmd_inspect(const Options& o, std::ostream& out) {
    std::ostringstream report;
    for (const auto& r : load_checkpoint(o.input)) {
        double lo = INFINITY, hi = -INFINITY, sum = 0, sq = 0;
        for (double v : r.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        const double n = static_cast<double>(std::max<std::size_t>(r.data.size(), 1));
        const double mean = sum / n;
        for (double v : r.data) sq += (v - mean) * (v - mean);
        report << r.name << " " << shape_str(r.shape) << " min=" << format_double(lo) << " max=" << format_double(hi)
               << " mean=" << format_double(mean) << " std=" << format_double(std::sqrt(sq / n)) << '\n';
    }
    out << report.str();
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        std::ofstream(fs::path(o.out) / "inspect.txt") << report.str();
    }
}

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const MissingDatasetError*>(&e)) return "missing-dataset";
    if (dynamic_cast<const TrainingAborted*>(&e)) return "aborted";
    if (dynamic_cast<const FormatError*>(&e)) return "format";
    if (dynamic_cast<const IoError*>(&e)) return "io";
    if (dynamic_cast<const NumericError*>(&e)) return "numeric";
    return "internal";
}

int exit_code(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
    if (dynamic_cast<const MissingDatasetError*>(&e)) return kExitMissingData;
    if (dynamic_cast<const TrainingAborted*>(&e)) return kExitAborted;
    return kExitError;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Probabilistic GAN training and diagnostics", "pgan"};
    app.require_subcommand(1);
    Options o;
    std::function<void(const Options&, std::ostream&)> action;

    auto experiment = [&](const std::string& name, const std::string& help, auto fn) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "Experiment config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory")->required();
        sub->add_option("--seed", o.seed, "Override the config seed");
        sub->callback([&action, fn] { action = fn; });
    };
    experiment("train", "Train one model", cmd_train);
    experiment("toy-landscape", "Train PGAN and LSGAN on toy2d and compare discriminator landscapes",
               cmd_toy_landscape);
    experiment("freeze-experiment", "Freeze the generator for an epoch interval and record gradient norms",
               cmd_freeze);
    experiment("fixed-generator", "Train only the discriminator against a fixed generator, for both losses",
               cmd_fixed_generator);
    experiment("histograms", "Train and record bottleneck histograms every epoch", cmd_histograms);

    auto* emit = app.add_subcommand("emit-figures", "Write CSV curves and a summary from a run directory");
    emit->add_option("run", o.input, "Run directory holding runlog.ndjson")->required()->check(CLI::ExistingDirectory);
    emit->add_option("--out", o.out, "Output directory (default: the run directory)");
    emit->callback([&] { action = cmd_emit_figures; });

    auto* inspect = app.add_subcommand("inspect-checkpoint", "Print tensor names, shapes and statistics");
    inspect->add_option("checkpoint", o.input, "Checkpoint file")->required()->check(CLI::ExistingFile);
    inspect->add_option("--out", o.out, "Also write the report to this directory");
    inspect->callback([&] { action = cmd_inspect; });

    if (!args.empty() && !args[0].starts_with('-') && !app.get_subcommand_no_throw(args[0])) {
        err << "pgan: error[usage]: unknown command '" << args[0] << "'\n" << app.help();
        return kExitUsage;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "pgan: error[usage]: " << one_line(e.what()) << '\n' << app.help();
        return kExitUsage;
    }

    try {
        action(o, out);
    } catch (const std::exception& e) {
        err << "pgan: error[" << error_kind(e) << "]: " << one_line(e.what()) << '\n';
        return exit_code(e);
    }
    return kExitOk;
}

}  // namespace pgan
