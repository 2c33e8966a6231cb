#include "npole/npole.hpp"

#include "engine.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace npole {

std::string to_string(ProjectionMode mode) {
    switch (mode) {
        case ProjectionMode::kGridClip:
            return "grid-clip";
        case ProjectionMode::kSquareTransform:
            return "square";
        case ProjectionMode::kPolySdp:
            return "poly-sdp";
    }
    return {};
}

ProjectionMode parse_projection_mode(std::string_view text) {
    if (text == "grid-clip") return ProjectionMode::kGridClip;
    if (text == "square") return ProjectionMode::kSquareTransform;
    if (text == "poly-sdp") return ProjectionMode::kPolySdp;
    throw std::invalid_argument("unknown projection mode: " + std::string(text));
}

std::string to_string(StepRule rule) {
    switch (rule) {
        case StepRule::kExperimental:
            return "experimental";
        case StepRule::kTheorem:
            return "theorem";
        case StepRule::kCustom:
            return "custom";
    }
    return {};
}

StepRule parse_step_rule(std::string_view text) {
    if (text == "experimental") return StepRule::kExperimental;
    if (text == "theorem") return StepRule::kTheorem;
    if (text == "custom") return StepRule::kCustom;
    throw std::invalid_argument("unknown step rule: " + std::string(text));
}

double HyperParams::zeta_at(std::size_t i, std::size_t j, std::size_t p) const {
    return zeta_matrix.empty() ? zeta : zeta_matrix[i * p + j];
}

double HyperParams::omega_at(std::size_t i) const { return omega_vector.empty() ? omega : omega_vector[i]; }

double HyperParams::zeta_min(std::size_t p) const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p; ++i) {
        m = std::min(m, omega_at(i));
        for (std::size_t j = 0; j < p; ++j) m = std::min(m, zeta_at(i, j, p));
    }
    return m;
}

double HyperParams::step(std::size_t k, std::size_t p) const {
    const auto kd = static_cast<double>(k);
    switch (step_rule) {
        case StepRule::kExperimental:
            return 1.0 / (kd * delta / 20.0 + step_offset);
        case StepRule::kTheorem:
            return 1.0 / (zeta_min(p) * kd + step_offset);
        case StepRule::kCustom:
            return 1.0 / (step_slope * kd + step_offset);
    }
    return 0.0;
}

double HyperParams::resolved_snap_step() const {
    if (snap_step > 0.0) return snap_step;
    return projection == ProjectionMode::kPolySdp ? z / 11.0 : 0.02 * z / 3.0;
}

void HyperParams::validate(std::size_t p) const {
    if (!(delta > 0.0) || delta > 1.0) throw std::invalid_argument("delta must satisfy 0 < delta <= 1");
    if (!(z > delta)) throw std::invalid_argument("window z must exceed delta");
    if (!(mu_min > 0.0)) throw std::invalid_argument("mu_min must be positive");
    if (!(projection_tol > 0.0)) throw std::invalid_argument("projection tolerance must be positive");
    if (!(step_offset > 0.0)) throw std::invalid_argument("step offset must be positive");
    if (step_slope < 0.0) throw std::invalid_argument("step slope must be nonnegative");
    if (zeta < 0.0 || omega < 0.0) throw std::invalid_argument("regularization must be nonnegative");
    if (!zeta_matrix.empty() && zeta_matrix.size() != p * p) throw std::invalid_argument("zeta matrix must be p x p");
    if (!omega_vector.empty() && omega_vector.size() != p) throw std::invalid_argument("omega vector must have p entries");
    for (double v : zeta_matrix) {
        if (v < 0.0) throw std::invalid_argument("regularization must be nonnegative");
    }
    for (double v : omega_vector) {
        if (v < 0.0) throw std::invalid_argument("regularization must be nonnegative");
    }
    if (snapshot_stride == 0) throw std::invalid_argument("snapshot stride must be positive");
    if (budget == 0) throw std::invalid_argument("budget must be positive");
    kernel.validate();
    if (kernel.kind == Kernel::Kind::kProduct) throw std::invalid_argument("time kernel must be one-dimensional");
    if (projection == ProjectionMode::kPolySdp && kernel.kind != Kernel::Kind::kPolynomial) {
        throw UnsupportedModel("poly-sdp projection needs a polynomial kernel");
    }
    if (resolved_snap_step() > z) throw std::invalid_argument("snap step exceeds the window");
}

HyperParams HyperParams::experiment() {
    HyperParams h;
    h.projection = ProjectionMode::kSquareTransform;
    h.snap_step = 0.02;
    return h;
}

HyperParams HyperParams::sweep(double delta, double zeta) {
    HyperParams h = experiment();
    h.delta = delta;
    h.zeta = zeta;
    h.omega = zeta;
    h.step_rule = StepRule::kCustom;
    h.step_slope = 1.0 / 2000.0;
    h.step_offset = 10.0;
    return h;
}

double TriggerEstimate::operator()(double t) const {
    const double v = g(t);
    return squared ? v * v : v;
}

double TriggerEstimate::operator()(std::span<const double> x) const {
    const double v = g(x);
    return squared ? v * v : v;
}

double rho(double dt, int x, double lambda, double mu_min) {
    if (lambda < mu_min) throw std::domain_error("truncated intensity below mu_min");
    return dt - x / lambda;
}

double mu_step(double mu, double rho_k, double eta, double omega, double mu_min) {
    return std::max(mu - eta * (rho_k + omega * mu), mu_min);
}

KernelExpansion f_gradient(const KernelExpansion& f, std::span<const double> lags, double rho_k, double zeta,
                           double snap_step) {
    KernelExpansion delta(f.kernel(), f.dim(), KernelExpansion::kUnbounded, f.support_window());
    if (zeta != 0.0) {
        for (std::size_t s = 0; s < f.size(); ++s) delta.add(f.center(s), zeta * f.coefficient(s));
    }
    for (double lag : lags) delta.add(snap_step > 0.0 ? snap_center(lag, snap_step) : lag, rho_k);
    return delta;
}

KernelExpansion square_gradient(const KernelExpansion& g, std::span<const double> lags, double rho_k, double zeta,
                                double snap_step) {
    KernelExpansion delta(g.kernel(), g.dim(), KernelExpansion::kUnbounded, g.support_window());
    if (zeta != 0.0) {
        for (std::size_t s = 0; s < g.size(); ++s) delta.add(g.center(s), zeta * g.coefficient(s));
    }
    for (double lag : lags) {
        const double l = snap_step > 0.0 ? snap_center(lag, snap_step) : lag;
        delta.add(l, 2.0 * rho_k * g(l));
    }
    return delta;
}

namespace {

// Trigger storage on the precomputed dictionary.
class DictStore {
public:
    DictStore(const Dictionary& dict, std::size_t p) : dict_(&dict), f_(p, DictionaryFunction(&dict)) {}

    double value(std::size_t j, std::size_t lag) const { return f_[j].value(lag); }
    void scale(std::size_t j, double s) { f_[j].scale(s); }
    void add(std::size_t j, std::size_t lag, double w) { f_[j].add(lag, w); }
    void fill(std::size_t j, double c) { f_[j].fill(c); }
    double norm_sq(std::size_t j) const { return f_[j].norm_sq(); }
    ProjectionStats project_clip(std::size_t j, const NnqpOptions& o) { return f_[j].project(o); }
    bool project_sdp(std::size_t j) {
        auto res = project_poly_sdp(with_all_centers(j));
        f_[j].assign(res.f);
        return !res.fallback;
    }
    double min_constraint(std::size_t j) const { return f_[j].min_constraint_value(); }
    std::size_t truncate(std::size_t j, std::size_t budget) { return f_[j].truncate(budget); }
    KernelExpansion expansion(std::size_t j) const { return f_[j].to_expansion(); }

private:
    KernelExpansion with_all_centers(std::size_t j) const {
        KernelExpansion e(dict_->kernel(), 1, KernelExpansion::kUnbounded, dict_->config().z);
        for (std::size_t l = 0; l < dict_->lag_count(); ++l) e.append(dict_->center(l), f_[j].coefficient(l));
        return e;
    }

    const Dictionary* dict_;
    std::vector<DictionaryFunction> f_;
};

// Trigger storage on plain expansions, evaluated by direct kernel sums.
class ExpansionStore {
public:
    ExpansionStore(const Dictionary& dict, std::size_t p)
        : dict_(&dict),
          f_(p, KernelExpansion(dict.kernel(), 1, KernelExpansion::kUnbounded, dict.config().z)) {
        for (std::size_t l = 0; l < dict.lag_count(); ++l) lags_.push_back(dict.lag(l));
        for (std::size_t d : dict.constraints()) grid_.push_back(dict.lag(d));
    }

    double value(std::size_t j, std::size_t lag) const { return f_[j].raw(std::span<const double>(&lags_[lag], 1)); }
    void scale(std::size_t j, double s) { f_[j].scale(s); }
    void add(std::size_t j, std::size_t lag, double w) { f_[j].add(dict_->lag(lag), w); }
    void fill(std::size_t j, double c) {
        f_[j].clear();
        for (std::size_t l = 0; l < dict_->lag_count(); ++l) f_[j].add(dict_->lag(l), c);
    }
    double norm_sq(std::size_t j) const { return rkhs_norm_sq(f_[j]); }
    ProjectionStats project_clip(std::size_t j, const NnqpOptions& o) {
        auto res = project_grid_clip(f_[j], grid_, o);
        f_[j] = std::move(res.f);
        return {res.changed, res.converged, res.min_grid_value};
    }
    bool project_sdp(std::size_t j) {
        for (std::size_t l = 0; l < dict_->lag_count(); ++l) {
            if (f_[j].find(std::span<const double>(&lags_[l], 1)) == f_[j].size()) f_[j].add(dict_->lag(l), 0.0);
        }
        auto res = project_poly_sdp(f_[j]);
        f_[j] = std::move(res.f);
        return !res.fallback;
    }
    double min_constraint(std::size_t j) const {
        double m = std::numeric_limits<double>::infinity();
        for (double t : grid_) m = std::min(m, f_[j].raw(std::span<const double>(&t, 1)));
        return m;
    }
    std::size_t truncate(std::size_t j, std::size_t budget) {
        f_[j].set_budget(budget);
        auto res = truncate_budget(f_[j]);
        f_[j] = std::move(res.expansion);
        f_[j].set_budget(KernelExpansion::kUnbounded);
        return res.dropped;
    }
    KernelExpansion expansion(std::size_t j) const {
        KernelExpansion e(f_[j].kernel(), 1, KernelExpansion::kUnbounded, f_[j].support_window());
        for (std::size_t s = 0; s < f_[j].size(); ++s) {
            if (f_[j].coefficient(s) != 0.0) e.append(f_[j].center(s), f_[j].coefficient(s));
        }
        return e;
    }

private:
    const Dictionary* dict_;
    std::vector<KernelExpansion> f_;
    std::vector<double> lags_;
    std::vector<double> grid_;
};

struct RowOutput {
    std::vector<double> mu;  // one per snapshot
    std::vector<std::vector<TriggerEstimate>> f;
    std::vector<double> risk;
    std::vector<double> intensity;
    std::vector<double> reference_risk;
    FitDiagnostics diag;
};

struct RowContext {
    const EventStream& stream;
    const UpdateGrid& grid;
    const HyperParams& hyper;
    const FitOptions& options;
    const Dictionary& dict;
    std::span<const std::size_t> event_aux;  // empty: every event on aux point 0
    std::size_t p;
    std::vector<std::size_t> snapshot_epochs;
};

template <class Store>
RowOutput run_row(const RowContext& ctx, std::size_t i) {
    const auto& s = ctx.stream;
    const auto& grid = ctx.grid;
    const auto& h = ctx.hyper;
    const std::size_t p = ctx.p;
    const bool square = h.projection == ProjectionMode::kSquareTransform;
    Store store(ctx.dict, p);
    if (square) {
        // Spread g evenly so it starts near square_init; g = 0 is a stationary point of g^2.
        double mass = 0.0;
        const std::size_t mid = ctx.dict.index(ctx.dict.lag_count() / 2, ctx.dict.aux_count() / 2);
        for (std::size_t d = 0; d < ctx.dict.size(); ++d) mass += ctx.dict.k(d, mid);
        for (std::size_t j = 0; j < p; ++j) store.fill(j, h.square_init / mass);
    }
    const double omega = h.omega_at(i);
    std::vector<double> zeta(p);
    for (std::size_t j = 0; j < p; ++j) zeta[j] = h.zeta_at(i, j, p);
    const double rho_bound = std::abs(h.delta - 1.0 / h.mu_min);
    const HawkesModel* ref = ctx.options.reference;

    RowOutput out;
    out.diag.min_mu = std::numeric_limits<double>::infinity();
    out.diag.min_constraint_value = std::numeric_limits<double>::infinity();
    out.diag.kappa_z = measure_kappa(s, h.z);
    if (ctx.options.trace_risk) {
        out.risk.resize(grid.size());
        out.intensity.resize(grid.size());
    }
    if (ref) out.reference_risk.resize(grid.size());

    double mu = h.resolved_mu_init();
    std::size_t lo = 0;
    std::size_t next_snapshot = 0;
    std::vector<std::size_t> ev_dim;
    std::vector<std::size_t> ev_lag;
    std::vector<double> ev_val;
    std::vector<char> touched(p);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double t = grid.epoch(k);
        const double dt = grid.dt(k);
        const int x = grid.count(k, i);
        std::size_t end = grid.event_end[k];
        while (end > 0 && s.times[end - 1] >= t) --end;
        while (lo < end && t - s.times[lo] >= h.z) ++lo;

        ev_dim.clear();
        ev_lag.clear();
        ev_val.clear();
        double lambda = mu;
        double lambda_ref = ref ? ref->mu[i] : 0.0;
        for (std::size_t n = lo; n < end; ++n) {
            const auto j = static_cast<std::size_t>(s.dims[n]);
            const double lag = t - s.times[n];
            const std::size_t aux = ctx.event_aux.empty() ? 0 : ctx.event_aux[n];
            const std::size_t d = ctx.dict.index(ctx.dict.snap(lag), aux);
            const double v = store.value(j, d);
            ev_dim.push_back(j);
            ev_lag.push_back(d);
            ev_val.push_back(v);
            lambda += square ? v * v : v;
            if (ref) lambda_ref += ref->f(i, j)(lag);
        }
        if (lambda < h.mu_min) {
            if (lambda < h.mu_min - 1e-8) {
                throw std::domain_error("estimated intensity fell below mu_min at epoch " + std::to_string(k));
            }
            lambda = h.mu_min;
            ++out.diag.intensity_clamps;
        }
        if (ctx.options.trace_risk) {
            double r = dt * lambda - x * std::log(lambda) + 0.5 * omega * mu * mu;
            for (std::size_t j = 0; j < p; ++j) {
                if (zeta[j] != 0.0) r += 0.5 * zeta[j] * store.norm_sq(j);
            }
            out.risk[k] = r;
            out.intensity[k] = lambda;
        }
        if (ref) {
            const double mref = ref->mu[i];
            out.reference_risk[k] = dt * lambda_ref - x * std::log(lambda_ref) + 0.5 * omega * mref * mref;
        }

        const double r = dt - x / lambda;
        const double eta = h.step(k + 1, p);
        mu = mu_step(mu, r, eta, omega, h.mu_min);
        out.diag.min_mu = std::min(out.diag.min_mu, mu);
        for (std::size_t j = 0; j < p; ++j) {
            if (zeta[j] != 0.0) store.scale(j, 1.0 - eta * zeta[j]);
        }
        std::fill(touched.begin(), touched.end(), 0);
        for (std::size_t e = 0; e < ev_dim.size(); ++e) {
            const double chain = square ? 2.0 * ev_val[e] : 1.0;
            store.add(ev_dim[e], ev_lag[e], -eta * r * chain);
            touched[ev_dim[e]] = 1;
        }
        for (std::size_t j = 0; j < p; ++j) {
            if (!touched[j]) continue;
            if (h.projection == ProjectionMode::kGridClip) {
                const auto st = store.project_clip(j, h.projection_options());
                if (st.projected) ++out.diag.projections;
                if (!st.converged) ++out.diag.projection_failures;
            } else if (h.projection == ProjectionMode::kPolySdp) {
                ++out.diag.projections;
                if (!store.project_sdp(j)) ++out.diag.projection_failures;
            }
            if (h.budget != KernelExpansion::kUnbounded) out.diag.dropped_centers += store.truncate(j, h.budget);
        }
        if (ctx.options.check_invariants) {
            for (std::size_t j = 0; j < p; ++j) {
                if (h.projection == ProjectionMode::kGridClip) {
                    out.diag.min_constraint_value = std::min(out.diag.min_constraint_value, store.min_constraint(j));
                }
                if (zeta[j] > 0.0 && out.diag.kappa_z > 0) {
                    const double bound = static_cast<double>(out.diag.kappa_z) * rho_bound / zeta[j];
                    out.diag.max_norm_ratio = std::max(out.diag.max_norm_ratio, std::sqrt(store.norm_sq(j)) / bound);
                }
            }
        }
        if (next_snapshot < ctx.snapshot_epochs.size() && ctx.snapshot_epochs[next_snapshot] == k + 1) {
            out.mu.push_back(mu);
            std::vector<TriggerEstimate> row;
            for (std::size_t j = 0; j < p; ++j) row.push_back({store.expansion(j), square});
            out.f.push_back(std::move(row));
            ++next_snapshot;
        }
    }
    return out;
}

template <class Store>
FitResult fit_impl(const EventStream& stream, const HyperParams& hyper, const FitOptions& options, bool parallel,
                   const Dictionary& dict, std::span<const std::size_t> event_aux) {
    const auto start = std::chrono::steady_clock::now();
    stream.validate();
    const auto p = static_cast<std::size_t>(stream.p);
    hyper.validate(p);
    if (options.reference && options.reference->dim() != p) {
        throw std::invalid_argument("reference model dimension differs from the stream");
    }
    FitResult result;
    result.p = p;
    result.hyper = hyper;
    result.grid = build_grid(stream, hyper.delta, stream.horizon);
    if (!event_aux.empty() && event_aux.size() != stream.size()) {
        throw std::invalid_argument("one aux index per event expected");
    }
    RowContext ctx{stream, result.grid, hyper, options, dict, event_aux, p, {}};
    const std::size_t m = result.grid.size();
    for (std::size_t e = hyper.snapshot_stride; e < m; e += hyper.snapshot_stride) ctx.snapshot_epochs.push_back(e);
    if (m > 0) ctx.snapshot_epochs.push_back(m);

    std::vector<RowOutput> rows(p);
    std::vector<std::string> errors(p);
    const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (parallel)
    for (std::size_t i = 0; i < p; ++i) {
        try {
            rows[i] = run_row<Store>(ctx, i);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw std::domain_error(e);
    }

    for (std::size_t s = 0; s < ctx.snapshot_epochs.size(); ++s) {
        Snapshot snap;
        snap.epoch = ctx.snapshot_epochs[s];
        snap.time = result.grid.epoch(snap.epoch - 1);
        for (std::size_t i = 0; i < p; ++i) {
            snap.mu.push_back(rows[i].mu[s]);
            for (auto& f : rows[i].f[s]) snap.f.push_back(std::move(f));
        }
        result.snapshots.push_back(std::move(snap));
    }
    if (result.snapshots.empty()) {
        Snapshot snap;
        snap.mu.assign(p, hyper.resolved_mu_init());
        for (std::size_t k = 0; k < p * p; ++k) {
            snap.f.push_back({KernelExpansion(dict.kernel(), dict.center_dim(), KernelExpansion::kUnbounded, hyper.z),
                              hyper.projection == ProjectionMode::kSquareTransform});
        }
        result.snapshots.push_back(std::move(snap));
    }
    auto interleave = [&](auto member, std::vector<double>& dst) {
        if ((rows.empty()) || (rows[0].*member).empty()) return;
        dst.assign(m * p, 0.0);
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t k = 0; k < m; ++k) dst[k * p + i] = (rows[i].*member)[k];
        }
    };
    interleave(&RowOutput::risk, result.risk);
    interleave(&RowOutput::intensity, result.intensity);
    interleave(&RowOutput::reference_risk, result.reference_risk);

    auto& d = result.diag;
    d.min_mu = std::numeric_limits<double>::infinity();
    d.min_constraint_value = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
        d.min_mu = std::min(d.min_mu, r.diag.min_mu);
        d.min_constraint_value = std::min(d.min_constraint_value, r.diag.min_constraint_value);
        d.max_norm_ratio = std::max(d.max_norm_ratio, r.diag.max_norm_ratio);
        d.projections += r.diag.projections;
        d.projection_failures += r.diag.projection_failures;
        d.intensity_clamps += r.diag.intensity_clamps;
        d.dropped_centers += r.diag.dropped_centers;
        d.kappa_z = r.diag.kappa_z;
    }
    d.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace

namespace detail {

Dictionary make_dictionary(const HyperParams& h, Kernel aux_kernel, std::vector<double> aux_points,
                           std::size_t aux_dim) {
    Dictionary::Config c;
    c.time_kernel = h.kernel;
    c.z = h.z;
    c.snap_step = h.resolved_snap_step();
    c.clip_points = h.projection == ProjectionMode::kGridClip ? h.clip_points : 0;
    c.aux_kernel = std::move(aux_kernel);
    c.aux_points = std::move(aux_points);
    c.aux_dim = aux_dim;
    return Dictionary(c);
}

FitResult fit_on_dictionary(const EventStream& stream, const HyperParams& hyper, const FitOptions& options,
                            const Dictionary& dict, std::span<const std::size_t> event_aux) {
    if (hyper.projection == ProjectionMode::kPolySdp && dict.aux_count() != 1) {
        throw UnsupportedModel("poly-sdp projection is only available for unmarked fits");
    }
    return fit_impl<DictStore>(stream, hyper, options, options.parallel, dict, event_aux);
}

}  // namespace detail

FitResult fit(const EventStream& stream, const HyperParams& hyper, const FitOptions& options) {
    hyper.validate(static_cast<std::size_t>(stream.p));
    const Dictionary dict = detail::make_dictionary(hyper);
    return fit_impl<DictStore>(stream, hyper, options, options.parallel, dict, {});
}

FitResult fit_reference(const EventStream& stream, const HyperParams& hyper, const FitOptions& options) {
    hyper.validate(static_cast<std::size_t>(stream.p));
    const Dictionary dict = detail::make_dictionary(hyper);
    return fit_impl<ExpansionStore>(stream, hyper, options, false, dict, {});
}

double regret_constant(std::size_t p, double kappa_z, double zeta, double delta, double mu_min) {
    const double r = delta - 1.0 / mu_min;
    return 2.0 * (1.0 + static_cast<double>(p) * kappa_z * kappa_z) / zeta * r * r;
}

RegretTrace regret_trace(const FitResult& result, std::size_t stride) {
    if (result.risk.empty() || result.reference_risk.empty()) {
        throw std::invalid_argument("regret needs a fit traced with a reference model");
    }
    if (stride == 0) throw std::invalid_argument("stride must be positive");
    RegretTrace out;
    const std::size_t p = result.p;
    const std::size_t m = result.grid.size();
    out.c1 = regret_constant(p, static_cast<double>(result.diag.kappa_z), result.hyper.zeta_min(p),
                             result.hyper.delta, result.hyper.mu_min);
    double acc = 0.0;
    double peak = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < p; ++i) acc += result.risk[k * p + i] - result.reference_risk[k * p + i];
        if ((k + 1) % stride == 0 || k + 1 == m) {
            const double norm = acc / (1.0 + std::log(static_cast<double>(k + 1)));
            out.epochs.push_back(k + 1);
            out.regret.push_back(acc);
            out.normalized.push_back(norm);
            peak = std::max(peak, std::abs(norm));
        }
    }
    out.final_over_max = peak > 0.0 ? out.normalized.back() / peak : 0.0;
    return out;
}

}  // namespace npole
