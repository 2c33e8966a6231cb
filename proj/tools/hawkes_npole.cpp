#include "npole/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

namespace {

using npole::ExperimentConfig;
using npole::ExperimentKind;

// Flags shared by every experiment subcommand. Values are applied on top of
// the config file and scale preset only when given on the command line.
struct CommonFlags {
    std::string config;
    bool desk = false;
    bool paper = false;
    int threads = 0;
    bool check = false;
    std::uint64_t seed = 0;
    std::string output;
    double horizon = 0.0;
    std::size_t trials = 0;
    std::string model;
    std::string events;
    double poisson_rate = 0.0;
    int poisson_dims = 0;
    std::string preset;
    double delta = 0.0;
    double zeta = 0.0;
    std::string fit_model;
    std::size_t instances = 0;
    std::size_t seeds = 0;
    std::string mark_mode;
    std::size_t cells = 0;
    std::size_t event = 0;
    double shift = 0.0;
    bool quiet = false;

    CLI::App* app = nullptr;
};

bool given(const CLI::App* app, const std::string& name) {
    try {
        return app->get_option(name)->count() > 0;
    } catch (const CLI::OptionNotFound&) {
        return false;
    }
}

void add_common(CLI::App* sub, CommonFlags& f) {
    f.app = sub;
    sub->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
    auto* desk = sub->add_flag("--desk", f.desk, "T = 1e4, 10 trials");
    sub->add_flag("--paper", f.paper, "T = 1e5, 100 trials")->excludes(desk);
    sub->add_option("--threads", f.threads, "thread cap (0: runtime default)");
    sub->add_flag("--check", f.check, "exit 3 when the acceptance threshold is missed");
    sub->add_option("--seed", f.seed, "base seed");
    sub->add_option("-o,--output", f.output, "output directory");
    sub->add_option("-T,--horizon", f.horizon, "observation horizon in seconds");
    sub->add_option("--trials", f.trials, "number of trials");
    sub->add_flag("-q,--quiet", f.quiet, "suppress progress lines");
}

void add_model(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--model", f.model, "benchmark5 | poisson | from-file");
    sub->add_option("--events", f.events, "event CSV (implies --model from-file)");
    sub->add_option("--poisson-rate", f.poisson_rate, "rate of each Poisson dimension");
    sub->add_option("--poisson-dims", f.poisson_dims, "number of Poisson dimensions");
}

void add_hyper(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--preset", f.preset, "experiment | sweep | theorem | custom");
    sub->add_option("--delta", f.delta, "grid spacing");
    sub->add_option("--zeta", f.zeta, "Tikhonov weight for f and mu");
}

ExperimentConfig build_config(ExperimentKind kind, const CommonFlags& f) {
    const CLI::App* a = f.app;
    ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : npole::load_config(f.config);
    c.kind = kind;
    if (f.desk) c.apply_scale("desk");
    if (f.paper) c.apply_scale("paper");
    if (given(a, "--threads")) c.threads = f.threads;
    if (f.check) c.check = true;
    if (given(a, "--seed")) c.seed = f.seed;
    if (given(a, "--output")) c.output = f.output;
    if (given(a, "--horizon")) c.horizon = f.horizon;
    if (given(a, "--trials")) c.trials = f.trials;
    if (given(a, "--model")) c.model = f.model;
    if (given(a, "--events")) {
        c.events = f.events;
        c.model = "from-file";
    }
    if (given(a, "--poisson-rate")) c.poisson_rate = f.poisson_rate;
    if (given(a, "--poisson-dims")) c.poisson_dims = f.poisson_dims;
    if (given(a, "--preset") || given(a, "--delta") || given(a, "--zeta")) {
        const std::string preset = given(a, "--preset") ? f.preset : c.preset;
        const double delta = given(a, "--delta") ? f.delta : c.hyper.delta;
        const double zeta = given(a, "--zeta") ? f.zeta : c.hyper.zeta;
        c.preset = preset;
        c.hyper = npole::preset_hyper(preset, delta, zeta);
    }
    if (given(a, "--fit-model")) c.fit_model = f.fit_model;
    if (given(a, "--instances")) c.prop1_instances = f.instances;
    if (given(a, "--seeds")) c.regret_seeds = f.seeds;
    if (given(a, "--mode")) c.mark_mode = f.mark_mode;
    if (given(a, "--cells")) c.spatial_cells = f.cells;
    if (given(a, "--event")) c.stability_event = f.event;
    if (given(a, "--shift")) c.stability_shift = f.shift;
    return c;
}

int run_experiment(ExperimentKind kind, const CommonFlags& f) {
    const ExperimentConfig c = build_config(kind, f);
    npole::Progress progress;
    if (!f.quiet) progress = [](const std::string& line) { std::cerr << line << '\n'; };
    const auto outcome = npole::run(c, progress);
    for (const auto& line : outcome.lines) std::cout << line << '\n';
    std::cout << "artifacts in " << c.output << '\n';
    if (outcome.exit_code == 3) std::cout << "CHECK FAILED\n";
    return outcome.exit_code;
}

int evaluate(const std::string& dir, const std::string& truth, double z, double step, const std::string& out) {
    const npole::Snapshot est = npole::load_fit_artifacts(dir);
    if (!out.empty()) {
        std::ofstream o(out);
        if (!o) throw npole::ConfigError("cannot write " + out);
        npole::write_function_dump(o, est, z, step);
    }
    for (std::size_t i = 0; i < est.mu.size(); ++i) std::cout << "mu_" << (i + 1) << " = " << est.mu[i] << '\n';
    if (!truth.empty()) {
        npole::HawkesModel m;
        if (truth == "benchmark5") {
            m = npole::HawkesModel::benchmark5();
        } else {
            throw npole::ConfigError("unknown ground truth: " + truth);
        }
        if (m.dim() != est.mu.size()) throw npole::ConfigError("estimate and ground truth differ in dimension");
        const auto r = npole::l1_report(m, est, z);
        for (std::size_t i = 0; i < r.p; ++i) {
            for (std::size_t j = 0; j < r.p; ++j) std::cout << (j ? " " : "") << r.pairs[i * r.p + j];
            std::cout << '\n';
        }
        std::cout << "average L1 error " << r.total << '\n';
    }
    return 0;
}

int ingest(const std::string& path, bool sort, double horizon, int dims, const std::string& out) {
    npole::ReadOptions o;
    o.sort = sort;
    o.horizon = horizon;
    o.p = dims;
    const npole::EventStream s = npole::read_events_file(path, o);
    for (const auto& line : npole::ingest_summary(s)) std::cout << line << '\n';
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw npole::ConfigError("cannot write " + out);
        npole::write_events(f, s);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online nonparametric estimation of multivariate Hawkes processes"};
    app.require_subcommand(1);

    struct Entry {
        ExperimentKind kind;
        const char* name;
        const char* help;
    };
    const Entry experiments[] = {
        {ExperimentKind::kSimulate, "simulate", "simulate a ground-truth model and write events.csv"},
        {ExperimentKind::kFit, "fit", "fit NPOLE-MHP (or --fit-model exp) to simulated or ingested events"},
        {ExperimentKind::kTable1, "table1", "L1 error over the delta x zeta grid"},
        {ExperimentKind::kProp1Check, "prop1-check", "discretization error against its bound on random models"},
        {ExperimentKind::kRegret, "regret", "normalized regret traces of the benchmark model"},
        {ExperimentKind::kMismatch, "mismatch", "NPOLE-MHP against the exponential baseline on pair (1,4)"},
        {ExperimentKind::kMarked, "marked", "marked fit on a model with exponential mark effect"},
        {ExperimentKind::kSpatial, "spatial", "spatial fit on a grid of cells"},
        {ExperimentKind::kStability, "stability", "change in loss after moving one event"},
    };
    std::vector<std::unique_ptr<CommonFlags>> flags;
    std::vector<std::pair<CLI::App*, ExperimentKind>> subs;
    for (const auto& e : experiments) {
        auto* sub = app.add_subcommand(e.name, e.help);
        flags.push_back(std::make_unique<CommonFlags>());
        CommonFlags& f = *flags.back();
        add_common(sub, f);
        switch (e.kind) {
            case ExperimentKind::kSimulate:
                add_model(sub, f);
                break;
            case ExperimentKind::kFit:
                add_model(sub, f);
                add_hyper(sub, f);
                sub->add_option("--fit-model", f.fit_model, "npole | exp");
                break;
            case ExperimentKind::kProp1Check:
                sub->add_option("--instances", f.instances, "number of random models");
                break;
            case ExperimentKind::kRegret:
                sub->add_option("--seeds", f.seeds, "number of seeds");
                break;
            case ExperimentKind::kMarked:
                sub->add_option("--mode", f.mark_mode, "joint | separable");
                break;
            case ExperimentKind::kSpatial:
                sub->add_option("--cells", f.cells, "cells per axis");
                break;
            case ExperimentKind::kStability:
                add_model(sub, f);
                add_hyper(sub, f);
                sub->add_option("--event", f.event, "1-based event to move (0: most isolated)");
                sub->add_option("--shift", f.shift, "time shift of the moved event");
                break;
            default:
                break;
        }
        subs.emplace_back(sub, e.kind);
    }

    auto* eval = app.add_subcommand("evaluate", "load a fitted estimate and report it");
    std::string eval_dir, eval_truth, eval_out;
    double eval_z = 3.0, eval_step = 0.01;
    eval->add_option("estimate", eval_dir, "estimate directory written by fit")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--truth", eval_truth, "ground truth for L1 errors (benchmark5)");
    eval->add_option("--z", eval_z, "support window");
    eval->add_option("--step", eval_step, "sampling step of the function dump");
    eval->add_option("-o,--output", eval_out, "long-format function CSV");

    auto* ing = app.add_subcommand("ingest", "validate an event CSV and print summary statistics");
    std::string ing_path, ing_out;
    bool ing_sort = false;
    double ing_horizon = -1.0;
    int ing_dims = 0;
    ing->add_option("path", ing_path, "event CSV")->required();
    ing->add_flag("--sort", ing_sort, "sort by time instead of rejecting unsorted rows");
    ing->add_option("-T,--horizon", ing_horizon, "horizon (default: last event time)");
    ing->add_option("--dims", ing_dims, "number of dimensions (default: largest in file)");
    ing->add_option("-o,--output", ing_out, "write the validated stream");

    auto* cfg = app.add_subcommand("config", "print defaults or validate a config file");
    bool cfg_defaults = false;
    std::string cfg_validate;
    cfg->add_flag("--defaults", cfg_defaults, "print the default configuration");
    cfg->add_option("--validate", cfg_validate, "config file to validate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        for (std::size_t k = 0; k < subs.size(); ++k) {
            if (subs[k].first->parsed()) return run_experiment(subs[k].second, *flags[k]);
        }
        if (eval->parsed()) return evaluate(eval_dir, eval_truth, eval_z, eval_step, eval_out);
        if (ing->parsed()) return ingest(ing_path, ing_sort, ing_horizon, ing_dims, ing_out);
        if (cfg->parsed()) {
            if (!cfg_validate.empty()) {
                npole::validate_config(npole::load_config(cfg_validate));
                std::cout << cfg_validate << ": ok\n";
                return 0;
            }
            (void)cfg_defaults;
            std::cout << npole::config_to_json(ExperimentConfig{}).dump(2) << '\n';
            return 0;
        }
    } catch (const npole::EventFormatError& e) {
        std::cerr << "error: line " << e.line() << ": " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
