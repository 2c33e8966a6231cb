#pragma once

#include "npole/discretize.hpp"
#include "npole/kernels.hpp"
#include "npole/process.hpp"
#include "npole/projection.hpp"

#include <span>
#include <string>
#include <vector>

namespace npole {

enum class ProjectionMode { kGridClip, kSquareTransform, kPolySdp };
enum class StepRule {
    kExperimental,  // 1 / (k delta / 20 + offset)
    kTheorem,       // 1 / (zeta_min k + offset)
    kCustom,        // 1 / (slope k + offset)
};

std::string to_string(ProjectionMode mode);
ProjectionMode parse_projection_mode(std::string_view text);
std::string to_string(StepRule rule);
StepRule parse_step_rule(std::string_view text);

struct HyperParams {
    double delta = 0.05;
    double z = 3.0;
    double zeta = 1e-8;
    std::vector<double> zeta_matrix;  // optional p * p override, row-major
    double omega = 1e-8;
    std::vector<double> omega_vector;  // optional p override
    double mu_min = 0.01;
    double mu_init = 0.0;  // <= 0 means 10 * mu_min
    StepRule step_rule = StepRule::kExperimental;
    double step_slope = 0.0;
    double step_offset = 100.0;
    Kernel kernel = Kernel::gaussian(0.2);
    std::size_t budget = KernelExpansion::kUnbounded;
    ProjectionMode projection = ProjectionMode::kGridClip;
    double snap_step = 0.0;  // <= 0: 0.02 z / 3, or z / 11 for PolySdp
    std::size_t clip_points = 61;
    double projection_tol = 1e-6;  // KKT tolerance of the grid-clip dual
    double square_init = 0.1;  // initial level of g in SquareTransform mode
    std::size_t snapshot_stride = 1000;

    double zeta_at(std::size_t i, std::size_t j, std::size_t p) const;
    double omega_at(std::size_t i) const;
    double zeta_min(std::size_t p) const;
    /// eta_k for k >= 1.
    double step(std::size_t k, std::size_t p) const;
    double resolved_snap_step() const;
    double resolved_mu_init() const { return mu_init > 0.0 ? mu_init : 10.0 * mu_min; }
    NnqpOptions projection_options() const { return {projection_tol, 1e-10, 20000}; }

    /// Throws std::invalid_argument on an inconsistent setting.
    void validate(std::size_t p) const;

    /// Goodness-of-fit setting: delta 0.05, z 3, eta_k = 1 / (k delta / 20 + 100),
    /// zeta 1e-8, Gaussian h = 0.2, f = g^2 on lags snapped to 0.02.
    static HyperParams experiment();
    /// Hyperparameter sweep setting: eta_k = 1 / (k / 2000 + 10).
    static HyperParams sweep(double delta, double zeta);
};

/// A fitted triggering function: the expansion itself, or its square.
struct TriggerEstimate {
    KernelExpansion g;
    bool squared = false;

    double operator()(double t) const;
    double operator()(std::span<const double> x) const;
};

/// dt - x / lambda. Throws std::domain_error when lambda < mu_min.
double rho(double dt, int x, double lambda, double mu_min);

/// max(mu - eta (rho + omega mu), mu_min).
double mu_step(double mu, double rho, double eta, double omega, double mu_min);

/// rho * sum_n K(snap(lag_n), .) + zeta * f, as a delta expansion. snap_step <= 0
/// leaves lags unsnapped.
KernelExpansion f_gradient(const KernelExpansion& f, std::span<const double> lags, double rho, double zeta,
                           double snap_step);

/// The step direction for g when f = g^2: rho * sum_n 2 g(l_n) K(l_n, .) + zeta * g,
/// with l_n the (snapped) lags.
KernelExpansion square_gradient(const KernelExpansion& g, std::span<const double> lags, double rho, double zeta,
                                double snap_step);

struct Snapshot {
    std::size_t epoch = 0;  // updates applied
    double time = 0.0;
    std::vector<double> mu;
    std::vector<TriggerEstimate> f;  // p * p, row-major

    const TriggerEstimate& at(std::size_t i, std::size_t j) const { return f[i * mu.size() + j]; }
};

struct FitOptions {
    bool parallel = true;  // rows run concurrently under OpenMP
    int threads = 0;       // 0: runtime default
    bool trace_risk = false;
    const HawkesModel* reference = nullptr;  // enables the comparator risk trace
    bool check_invariants = false;
};

struct FitDiagnostics {
    double min_mu = 0.0;
    double min_constraint_value = 0.0;  // GridClip only
    double max_norm_ratio = 0.0;        // max ||f_ij|| / (kappa_z |delta - 1/mu_min| / zeta_ij)
    std::size_t projections = 0;
    std::size_t projection_failures = 0;
    std::size_t intensity_clamps = 0;
    std::size_t dropped_centers = 0;
    std::size_t kappa_z = 0;
    double seconds = 0.0;
};

struct FitResult {
    std::size_t p = 0;
    HyperParams hyper;
    UpdateGrid grid;
    std::vector<Snapshot> snapshots;  // stride snapshots, last is final
    std::vector<double> risk;          // epochs * p when traced, row-major by epoch
    std::vector<double> intensity;     // estimated lambda at each epoch, same layout
    std::vector<double> reference_risk;
    FitDiagnostics diag;

    const Snapshot& final_state() const { return snapshots.back(); }
};

/// NPOLE-MHP over a whole stream on [0, stream.horizon]. Uses a fixed lag
/// dictionary with precomputed Gramian; rows are independent and run in
/// parallel when requested, with identical results either way.
FitResult fit(const EventStream& stream, const HyperParams& hyper, const FitOptions& options = {});

/// Straightforward serial implementation on plain kernel expansions, kept as
/// a reference for fit().
FitResult fit_reference(const EventStream& stream, const HyperParams& hyper, const FitOptions& options = {});

struct RegretTrace {
    std::vector<std::size_t> epochs;
    std::vector<double> regret;      // cumulative, summed over rows
    std::vector<double> normalized;  // regret / (1 + log M)
    double c1 = 0.0;                 // 2 (1 + p kappa_z^2) zeta^{-1} |delta - 1/mu_min|^2
    double final_over_max = 0.0;
};

/// Cumulative regret of a fit run with a reference model, sampled every
/// `stride` epochs and at the end.
RegretTrace regret_trace(const FitResult& result, std::size_t stride = 100);

double regret_constant(std::size_t p, double kappa_z, double zeta, double delta, double mu_min);

}  // namespace npole
