#pragma once

#include "npole/baselines.hpp"
#include "npole/extensions.hpp"
#include "npole/metrics.hpp"
#include "npole/npole.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace npole {

/// Invalid configuration or input; maps to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ExperimentKind { kSimulate, kFit, kTable1, kProp1Check, kRegret, kMismatch, kMarked, kSpatial, kStability };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view text);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::kFit;
    std::string model = "benchmark5";  // benchmark5 | poisson | from-file
    std::string events;                // event CSV when model is from-file
    double poisson_rate = 1.0;
    int poisson_dims = 1;
    std::string preset = "experiment";  // experiment | sweep | theorem | custom
    HyperParams hyper = HyperParams::experiment();
    std::string fit_model = "npole";  // npole | exp
    double horizon = 1e4;
    std::size_t trials = 10;
    std::uint64_t seed = 7;
    std::string output = "hawkes-out";
    int threads = 0;
    bool check = false;

    std::vector<double> table1_deltas{0.01, 0.05, 0.1, 0.5, 1.0};
    std::vector<double> table1_zetas{1e-8, 1e-6, 1e-4, 1e-2, 1.0};
    std::size_t prop1_instances = 50;
    double prop1_horizon = 200.0;
    std::size_t regret_seeds = 5;
    std::string mark_mode = "joint";
    std::size_t spatial_cells = 2;  // per axis
    std::size_t stability_event = 0;  // 0: the event farthest from its neighbours
    double stability_shift = 1e-6;

    /// desk: T = 1e4 and 10 trials; paper: T = 1e5 and 100 trials.
    void apply_scale(const std::string& scale);
};

nlohmann::json config_to_json(const ExperimentConfig& config);
/// Unknown keys and ill-typed values raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
/// Checks ranges and that referenced files exist.
void validate_config(const ExperimentConfig& config);

/// Preset hyperparameters by name.
HyperParams preset_hyper(const std::string& name, double delta = 0.05, double zeta = 1e-8);

/// Progress lines go here; the default writes nothing.
using Progress = std::function<void(const std::string&)>;

// ------------------------------------------------------------ experiments

Table1 table1_experiment(const HawkesModel& model, double horizon, std::size_t trials, std::uint64_t seed,
                         const std::vector<double>& deltas, const std::vector<double>& zetas, int threads = 0,
                         const Progress& progress = {});

struct Table1Check {
    bool in_band = false;    // (0.05, 1e-8) in [1.5, 2.5]
    bool ratio = false;      // (1, 1e-8) >= 2 x (0.05, 1e-8)
    bool monotone = false;   // non-decreasing over 0.05, 0.1, 0.5, 1 at 1e-8
    double base = 0.0;
    double coarse = 0.0;
    bool passed() const { return in_band && ratio && monotone; }
};
/// Needs deltas {0.05, 0.1, 0.5, 1} and zeta 1e-8 among the table's axes.
Table1Check check_table1(const Table1& table);

struct Prop1Instance {
    std::size_t p = 0;
    std::size_t dim = 0;  // worst row
    double delta = 0.0;
    double z = 0.0;
    double error = 0.0;   // |L_delta(lambda^z) - L_exact|
    double bound = 0.0;
};

struct Prop1Summary {
    std::vector<Prop1Instance> instances;
    std::size_t violations = 0;
    double max_ratio = 0.0;  // error / bound
    double min_slack = 0.0;  // bound - error
};

/// Random exponential models with radius < 0.7; every row is checked.
Prop1Summary prop1_experiment(std::size_t instances, double horizon, std::uint64_t seed);

struct MismatchTrial {
    double npole_l1 = 0.0;  // pair (0, 3), the delayed Gaussian bump
    double exp_l1 = 0.0;
    double npole_total = 0.0;
    double exp_total = 0.0;
    double npole_loss = 0.0;  // cumulative discretized loss
    double exp_loss = 0.0;
};

struct MismatchSummary {
    std::vector<MismatchTrial> trials;
    std::size_t wins = 0;  // npole_l1 < exp_l1
};

MismatchSummary mismatch_experiment(std::size_t trials, double horizon, std::uint64_t seed, int threads = 0,
                                    const Progress& progress = {});

struct RegretSummary {
    std::vector<RegretTrace> traces;
    std::vector<double> final_over_max;
    double worst = 0.0;
    /// normalized regret at the end over its value at the midpoint
    std::vector<double> late_growth;
};

RegretSummary regret_experiment(std::size_t seeds, double horizon, std::uint64_t seed, int threads = 0,
                                const Progress& progress = {});

struct SpatialSummary {
    std::size_t events = 0;
    double l1_error = 0.0;
    double l1_norm = 0.0;
    double ratio = 0.0;
    double mu = 0.0;
    double seconds = 0.0;
};

SpatialSummary spatial_experiment(std::size_t cells_per_axis, double horizon, std::uint64_t seed);

struct MarkedSummary {
    std::size_t events = 0;
    double l1_at_mean_mark = 0.0;  // |f(t, mean) - f_true(t, mean)| over [0, z]
    double l1_norm = 0.0;
    std::vector<double> mu;
};

/// 1-dim model with f(t, v) = 0.6 exp(-2 t) exp(-v / 2), Exp(1) marks.
MarkedSummary marked_experiment(MarkMode mode, double horizon, std::uint64_t seed);

// ------------------------------------------------------------ artifacts

/// mu.csv, f_<i>_<j>.csv (expansions, 1-based) and estimate.json in dir.
void write_fit_artifacts(const std::string& dir, const Snapshot& estimate, double z);
Snapshot load_fit_artifacts(const std::string& dir);
/// Long-format `i,j,t,value` on t = 0, step, ..., z.
void write_function_dump(std::ostream& out, const Snapshot& estimate, double z, double step = 0.01);

// ------------------------------------------------------------ orchestration

struct RunOutcome {
    int exit_code = 0;  // 0 ok, 3 when a --check gate failed
    MetricReport report;
    std::vector<std::string> lines;  // human-readable summary
};

/// Runs one experiment and writes report.json, manifest.json and the
/// experiment's data files into config.output.
RunOutcome run(const ExperimentConfig& config, const Progress& progress = {});

/// Ingest summary: "p=..., N=..., T=..., rate_i=...".
std::vector<std::string> ingest_summary(const EventStream& stream);

/// HAWKES_NPOLE_THREADS overrides `requested` when set to a positive integer.
int resolve_threads(int requested);

}  // namespace npole
