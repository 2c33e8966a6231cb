#pragma once

#include "npole/discretize.hpp"
#include "npole/npole.hpp"
#include "npole/process.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace npole {

/// Adaptive Simpson on [a, b] to absolute tolerance tol, starting from
/// `panels` equal pieces so narrow features are not skipped.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        std::size_t panels = 32);

/// int_0^z |f_true - f_hat| dt.
double l1_error(const GroundTruthFn& truth, const std::function<double(double)>& estimate, double z,
                double tol = 1e-6);
double l1_error(const GroundTruthFn& truth, const TriggerEstimate& estimate, double z, double tol = 1e-6);

struct L1Report {
    std::size_t p = 0;
    std::vector<double> pairs;  // p * p, row-major
    double total = 0.0;         // sum over pairs
};

L1Report l1_report(const HawkesModel& truth, const Snapshot& estimate, double z, double tol = 1e-6);
L1Report l1_report(const HawkesModel& truth, const std::function<double(std::size_t, std::size_t, double)>& estimate,
                   double z, double tol = 1e-6);

struct LossSeries {
    std::vector<double> instantaneous;  // per epoch, summed over dimensions
    std::vector<double> cumulative;
};

/// dt_k lambda_{i,k} - x_{i,k} log lambda_{i,k} summed over i, from an
/// epochs * p intensity trace (FitResult::intensity).
LossSeries stepwise_loss(const UpdateGrid& grid, std::span<const double> intensity);

/// Discretized NLL of a fixed estimate on a stream, summed over dimensions.
/// Each estimate is evaluated at the true (unsnapped) lags within z.
double estimate_nll(const EventStream& stream, const UpdateGrid& grid, const Snapshot& estimate, double z);

struct StabilityReport {
    double difference = 0.0;  // |L(f) - L(f')| / t
    double bound = 0.0;       // 2 C_L^2 delta / t sum zeta^{-1}
    double c_l = 0.0;
    std::size_t kappa1 = 0;
    std::size_t kappa_z = 0;
};

/// Refits on the stream with event `index` moved to `new_time` and compares
/// the two final estimates on the original stream. Throws
/// std::invalid_argument if the move breaks time order or leaves [0, T].
StabilityReport stability_probe(const EventStream& stream, const HyperParams& hyper, std::size_t index,
                                double new_time, const FitOptions& options = {});

/// (1 / delta + kappa_1) kappa_z |delta - 1 / mu_min|.
double stability_constant(double delta, double kappa1, double kappa_z, double mu_min);

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};
MeanStderr mean_stderr(std::span<const double> values);

struct MetricReport {
    std::string experiment;
    std::uint64_t seed = 0;
    std::string config_fingerprint;
    std::size_t trials = 0;
    std::size_t p = 0;
    std::vector<double> l1_pairs;  // mean over trials, p * p
    double l1_total = 0.0;         // mean over trials of the per-trial sum
    double l1_stderr = 0.0;
    std::vector<double> nll;       // per trial
    std::optional<RegretTrace> regret;
    nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json to_json(const MetricReport& report);
void write_report(const std::string& path, const MetricReport& report);

/// Average L1 errors on a delta x zeta grid; rows delta, columns log10 zeta.
struct Table1 {
    std::vector<double> deltas;
    std::vector<double> zetas;
    std::size_t trials = 0;
    std::vector<double> mean;  // deltas.size() * zetas.size()
    std::vector<double> stderr_;

    double at(std::size_t d, std::size_t z) const { return mean[d * zetas.size() + z]; }
};

void write_table1_csv(std::ostream& out, const Table1& table);

/// FNV-1a 64 of the text, as 16 hex digits.
std::string fingerprint(const std::string& text);

}  // namespace npole
