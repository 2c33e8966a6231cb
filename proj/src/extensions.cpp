#include "npole/extensions.hpp"

#include "engine.hpp"
#include "npole/format.hpp"
#include "npole/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace npole {

std::string to_string(MarkMode mode) { return mode == MarkMode::kJoint ? "joint" : "separable"; }

MarkMode parse_mark_mode(std::string_view text) {
    if (text == "joint") return MarkMode::kJoint;
    if (text == "separable") return MarkMode::kSeparable;
    throw std::invalid_argument("unknown mark mode: " + std::string(text));
}

std::vector<double> standardize_marks(std::span<const double> marks, std::size_t warmup, MarkScaler* frozen) {
    std::vector<double> out;
    out.reserve(marks.size());
    double mean = 0.0;
    double m2 = 0.0;
    MarkScaler scaler;
    for (std::size_t n = 0; n < marks.size(); ++n) {
        if (n < warmup) {
            const double d = marks[n] - mean;
            mean += d / static_cast<double>(n + 1);
            m2 += d * (marks[n] - mean);
            scaler.mean = mean;
            const double sd = std::sqrt(m2 / static_cast<double>(n + 1));
            scaler.scale = sd > 1e-12 ? sd : 1.0;
        }
        out.push_back(scaler(marks[n]));
    }
    if (frozen) *frozen = scaler;
    return out;
}

std::vector<double> MarkedHyper::resolved_lattice() const {
    if (!mark_lattice.empty()) return mark_lattice;
    std::vector<double> v;
    for (int k = -6; k <= 6; ++k) v.push_back(0.5 * k);
    return v;
}

double MarkedTrigger::operator()(double t, double mark) const {
    const double v = scaler(mark);
    if (mode == MarkMode::kJoint) {
        const double x[2] = {t, v};
        const double r = joint(std::span<const double>(x, 2));
        return squared ? r * r : r;
    }
    return g(t) * h.raw(std::span<const double>(&v, 1));
}

KernelExpansion mmhp_gradient_joint(const KernelExpansion& f, std::span<const double> lags,
                                    std::span<const double> marks, double rho_k, double zeta) {
    if (marks.size() != lags.size()) throw std::invalid_argument("every window event needs a mark");
    if (f.dim() != 2) throw std::invalid_argument("joint marked trigger needs (lag, mark) centers");
    KernelExpansion delta(f.kernel(), 2, KernelExpansion::kUnbounded, f.support_window());
    if (zeta != 0.0) {
        for (std::size_t s = 0; s < f.size(); ++s) delta.add(f.center(s), zeta * f.coefficient(s));
    }
    for (std::size_t n = 0; n < lags.size(); ++n) {
        const double c[2] = {lags[n], marks[n]};
        delta.add(std::span<const double>(c, 2), rho_k);
    }
    return delta;
}

SeparableDelta mmhp_gradient_separable(const KernelExpansion& g, const KernelExpansion& h,
                                       std::span<const double> lags, std::span<const double> marks, double rho_k,
                                       double zeta) {
    if (marks.size() != lags.size()) throw std::invalid_argument("every window event needs a mark");
    SeparableDelta d{KernelExpansion(g.kernel(), 1, KernelExpansion::kUnbounded, g.support_window()),
                     KernelExpansion(h.kernel(), 1, KernelExpansion::kUnbounded, h.support_window())};
    if (zeta != 0.0) {
        for (std::size_t s = 0; s < g.size(); ++s) d.g.add(g.center(s), zeta * g.coefficient(s));
        for (std::size_t s = 0; s < h.size(); ++s) d.h.add(h.center(s), zeta * h.coefficient(s));
    }
    for (std::size_t n = 0; n < lags.size(); ++n) {
        d.g.add(lags[n], rho_k * h.raw(marks.subspan(n, 1)));
        d.h.add(marks[n], rho_k * g(lags[n]));
    }
    return d;
}

namespace {

// h on a fixed mark lattice with values kept up to date.
class LatticeFunction {
public:
    explicit LatticeFunction(const Eigen::MatrixXd* k)
        : k_(k), a_(static_cast<std::size_t>(k->rows()), 0.0), v_(a_.size(), 0.0) {}

    double value(std::size_t q) const { return v_[q]; }
    void add(std::size_t q, double w) {
        if (w == 0.0) return;
        a_[q] += w;
        const double* col = k_->col(static_cast<Eigen::Index>(q)).data();
        for (std::size_t r = 0; r < v_.size(); ++r) v_[r] += w * col[r];
    }
    void scale(double s) {
        for (double& x : a_) x *= s;
        for (double& x : v_) x *= s;
    }
    ProjectionStats project(const NnqpOptions& options) {
        ProjectionStats st;
        st.min_value = *std::min_element(v_.begin(), v_.end());
        if (st.min_value >= -options.feas_tol) return st;
        ImplicitDual dual;
        dual.size = v_.size();
        dual.value = [&](std::size_t q) { return v_[q]; };
        dual.diag = [&](std::size_t q) { return (*k_)(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q)); };
        dual.step = [&](std::size_t q, double s) { add(q, s); };
        const auto sol = solve_nonneg_dual(dual, options);
        st.projected = true;
        st.converged = sol.converged;
        st.min_value = *std::min_element(v_.begin(), v_.end());
        return st;
    }
    KernelExpansion to_expansion(const Kernel& kernel, std::span<const double> lattice) const {
        KernelExpansion e(kernel, 1);
        for (std::size_t q = 0; q < a_.size(); ++q) {
            if (a_[q] != 0.0) e.append(lattice.subspan(q, 1), a_[q]);
        }
        return e;
    }

private:
    const Eigen::MatrixXd* k_;
    std::vector<double> a_;
    std::vector<double> v_;
};

std::size_t nearest(std::span<const double> lattice, double v) {
    std::size_t best = 0;
    for (std::size_t q = 1; q < lattice.size(); ++q) {
        if (std::abs(lattice[q] - v) < std::abs(lattice[best] - v)) best = q;
    }
    return best;
}

struct SeparableRow {
    double mu = 0.0;
    std::vector<KernelExpansion> g;
    std::vector<KernelExpansion> h;
    FitDiagnostics diag;
};

SeparableRow separable_row(const EventStream& s, const UpdateGrid& grid, const MarkedHyper& hyper,
                           const Dictionary& dict, const Eigen::MatrixXd& ka, std::span<const double> lattice,
                           std::span<const std::size_t> aux, std::size_t i) {
    const auto& h = hyper.base;
    const std::size_t p = static_cast<std::size_t>(s.p);
    std::vector<DictionaryFunction> gf(p, DictionaryFunction(&dict));
    std::vector<LatticeFunction> hf(p, LatticeFunction(&ka));
    // h starts near 1 so g receives the unmarked gradient at first.
    const std::size_t mid = lattice.size() / 2;
    double mass = 0.0;
    for (std::size_t q = 0; q < lattice.size(); ++q) mass += ka(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(mid));
    for (auto& f : hf) {
        for (std::size_t q = 0; q < lattice.size(); ++q) f.add(q, 1.0 / mass);
    }
    std::vector<double> zeta(p);
    for (std::size_t j = 0; j < p; ++j) zeta[j] = h.zeta_at(i, j, p);
    const double omega = h.omega_at(i);

    SeparableRow out;
    out.diag.min_mu = std::numeric_limits<double>::infinity();
    double mu = h.resolved_mu_init();
    std::size_t lo = 0;
    std::vector<std::size_t> ev_dim, ev_lag, ev_aux;
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
        ev_aux.clear();
        double lambda = mu;
        for (std::size_t n = lo; n < end; ++n) {
            const auto j = static_cast<std::size_t>(s.dims[n]);
            ev_dim.push_back(j);
            ev_lag.push_back(dict.snap(t - s.times[n]));
            ev_aux.push_back(aux[n]);
            lambda += gf[j].value(ev_lag.back()) * hf[j].value(aux[n]);
        }
        if (lambda < h.mu_min) {
            if (lambda < h.mu_min - 1e-8) {
                throw std::domain_error("estimated intensity fell below mu_min at epoch " + std::to_string(k));
            }
            lambda = h.mu_min;
            ++out.diag.intensity_clamps;
        }
        const double r = dt - x / lambda;
        const double eta = h.step(k + 1, p);
        mu = mu_step(mu, r, eta, omega, h.mu_min);
        out.diag.min_mu = std::min(out.diag.min_mu, mu);

        auto g_step = [&] {
            std::fill(touched.begin(), touched.end(), 0);
            for (std::size_t j = 0; j < p; ++j) {
                if (zeta[j] != 0.0) gf[j].scale(1.0 - eta * zeta[j]);
            }
            for (std::size_t e = 0; e < ev_dim.size(); ++e) {
                gf[ev_dim[e]].add(ev_lag[e], -eta * r * hf[ev_dim[e]].value(ev_aux[e]));
                touched[ev_dim[e]] = 1;
            }
            for (std::size_t j = 0; j < p; ++j) {
                if (!touched[j]) continue;
                const auto st = gf[j].project(h.projection_options());
                if (st.projected) ++out.diag.projections;
                if (!st.converged) ++out.diag.projection_failures;
            }
        };
        auto h_step = [&] {
            std::fill(touched.begin(), touched.end(), 0);
            for (std::size_t j = 0; j < p; ++j) {
                if (zeta[j] != 0.0) hf[j].scale(1.0 - eta * zeta[j]);
            }
            for (std::size_t e = 0; e < ev_dim.size(); ++e) {
                hf[ev_dim[e]].add(ev_aux[e], -eta * r * gf[ev_dim[e]].value(ev_lag[e]));
                touched[ev_dim[e]] = 1;
            }
            for (std::size_t j = 0; j < p; ++j) {
                if (!touched[j]) continue;
                const auto st = hf[j].project(h.projection_options());
                if (st.projected) ++out.diag.projections;
                if (!st.converged) ++out.diag.projection_failures;
            }
        };
        if (hyper.g_first) {
            g_step();
            h_step();
        } else {
            h_step();
            g_step();
        }
    }
    out.mu = mu;
    for (std::size_t j = 0; j < p; ++j) {
        out.g.push_back(gf[j].to_expansion());
        out.h.push_back(hf[j].to_expansion(hyper.mark_kernel, lattice));
    }
    return out;
}

}  // namespace

MarkedFitResult mmhp_fit(const EventStream& stream, const MarkedHyper& hyper, const FitOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    stream.validate();
    if (!stream.has_marks()) throw std::invalid_argument("marked fit needs a mark column");
    const auto p = static_cast<std::size_t>(stream.p);
    hyper.base.validate(p);
    hyper.mark_kernel.validate();
    if (hyper.mark_kernel.kind == Kernel::Kind::kProduct) throw std::invalid_argument("mark kernel must be scalar");
    const std::vector<double> lattice = hyper.resolved_lattice();

    MarkedFitResult out;
    out.p = p;
    out.mode = hyper.mode;
    const std::vector<double> z = standardize_marks(stream.marks, hyper.warmup, &out.scaler);
    std::vector<std::size_t> aux(z.size());
    for (std::size_t n = 0; n < z.size(); ++n) aux[n] = nearest(lattice, z[n]);

    if (hyper.mode == MarkMode::kJoint) {
        const Dictionary dict = detail::make_dictionary(hyper.base, hyper.mark_kernel, lattice, 1);
        FitResult fr = detail::fit_on_dictionary(stream, hyper.base, options, dict, aux);
        out.grid = std::move(fr.grid);
        out.diag = fr.diag;
        auto& last = fr.snapshots.back();
        out.mu = last.mu;
        for (auto& e : last.f) {
            MarkedTrigger m;
            m.mode = MarkMode::kJoint;
            m.joint = std::move(e.g);
            m.squared = e.squared;
            m.scaler = out.scaler;
            out.f.push_back(std::move(m));
        }
        return out;
    }

    if (hyper.base.projection != ProjectionMode::kGridClip) {
        throw UnsupportedModel("separable marked fits support grid-clip projection only");
    }
    const Dictionary dict = detail::make_dictionary(hyper.base);
    const Eigen::MatrixXd ka = gramian(hyper.mark_kernel, lattice, 1);
    out.grid = build_grid(stream, hyper.base.delta, stream.horizon);
    std::vector<SeparableRow> rows(p);
    std::vector<std::string> errors(p);
    const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (options.parallel)
    for (std::size_t i = 0; i < p; ++i) {
        try {
            rows[i] = separable_row(stream, out.grid, hyper, dict, ka, lattice, aux, i);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw std::domain_error(e);
    }
    out.diag.min_mu = std::numeric_limits<double>::infinity();
    for (auto& r : rows) {
        out.mu.push_back(r.mu);
        out.diag.min_mu = std::min(out.diag.min_mu, r.diag.min_mu);
        out.diag.projections += r.diag.projections;
        out.diag.projection_failures += r.diag.projection_failures;
        out.diag.intensity_clamps += r.diag.intensity_clamps;
        for (std::size_t j = 0; j < p; ++j) {
            MarkedTrigger m;
            m.mode = MarkMode::kSeparable;
            m.g = std::move(r.g[j]);
            m.h = std::move(r.h[j]);
            m.scaler = out.scaler;
            out.f.push_back(std::move(m));
        }
    }
    out.diag.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

void write_marked_csv(std::ostream& out, const MarkedTrigger& f, std::span<const double> lags,
                      std::span<const double> marks) {
    out << "t,v,value\n";
    for (double t : lags) {
        for (double v : marks) out << format_double(t) << ',' << format_double(v) << ',' << format_double(f(t, v)) << '\n';
    }
}

// ---------------------------------------------------------------- space

std::array<double, 2> SpatialGrid::center(std::size_t c) const {
    const std::size_t cx = c % nx;
    const std::size_t cy = c / nx;
    return {x0 + (static_cast<double>(cx) + 0.5) * cell_width(), y0 + (static_cast<double>(cy) + 0.5) * cell_height()};
}

bool SpatialGrid::contains(double x, double y) const {
    return x >= x0 && x <= x0 + width && y >= y0 && y <= y0 + height;
}

std::size_t SpatialGrid::cell_of(double x, double y) const {
    if (!contains(x, y)) throw std::invalid_argument("location outside the spatial domain");
    const auto cx = std::min(nx - 1, static_cast<std::size_t>((x - x0) / cell_width()));
    const auto cy = std::min(ny - 1, static_cast<std::size_t>((y - y0) / cell_height()));
    return cy * nx + cx;
}

void SpatialGrid::validate() const {
    if (!(width > 0.0) || !(height > 0.0)) throw std::invalid_argument("spatial domain must have positive extent");
    if (nx == 0 || ny == 0) throw std::invalid_argument("spatial grid needs at least one cell");
    if (cells() > kMaxCells) throw std::invalid_argument("at most 400 spatial cells are supported");
}

double SpatialModel::f(double t, double dx, double dy) const {
    if (t < 0.0) return 0.0;
    return time(t) * std::exp(-(dx * dx + dy * dy) / (spatial_scale * spatial_scale));
}

EventStream shp_simulate(const SpatialModel& model, const SpatialGrid& region, double horizon, std::uint64_t seed) {
    region.validate();
    if (!(model.mu > 0.0) || !(model.spatial_scale > 0.0)) throw std::invalid_argument("spatial model needs mu, scale > 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    const RunningSup envelope(model.time);
    const double area = region.width * region.height;
    CounterRng rng(seed);
    EventStream s;
    s.p = 1;
    s.location_dim = 2;
    s.horizon = horizon;
    double t = 0.0;
    std::size_t lo = 0;
    while (true) {
        while (lo < s.size() && t - s.times[lo] >= envelope.support()) ++lo;
        double bound = model.mu;
        for (std::size_t n = lo; n < s.size(); ++n) bound += envelope(t - s.times[n]);
        t += rng.exponential(bound * area);
        if (t > horizon) break;
        const double x = region.x0 + region.width * rng.uniform();
        const double y = region.y0 + region.height * rng.uniform();
        double lambda = model.mu;
        for (std::size_t n = lo; n < s.size(); ++n) {
            lambda += model.f(t - s.times[n], x - s.locations[2 * n], y - s.locations[2 * n + 1]);
        }
        if (rng.uniform() * bound <= lambda) {
            s.times.push_back(t);
            s.dims.push_back(0);
            s.locations.push_back(x);
            s.locations.push_back(y);
            if (s.size() > 50'000'000) throw std::domain_error("spatial simulation exploded");
        }
    }
    return s;
}

ShpFitResult shp_fit(const EventStream& stream, const SpatialGrid& cells, const ShpHyper& hyper,
                     const FitOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    cells.validate();
    stream.validate();
    if (stream.p != 1) throw std::invalid_argument("spatial fit expects a 1-dim stream");
    if (stream.location_dim != 2) throw std::invalid_argument("spatial fit needs x1,x2 locations");
    const HyperParams& h = hyper.base;
    h.validate(1);
    if (h.projection == ProjectionMode::kPolySdp) throw UnsupportedModel("spatial fits support grid-clip or square");
    const bool square = h.projection == ProjectionMode::kSquareTransform;

    const std::size_t nc = cells.cells();
    std::vector<std::size_t> cell(stream.size());
    for (std::size_t n = 0; n < stream.size(); ++n) {
        cell[n] = cells.cell_of(stream.locations[2 * n], stream.locations[2 * n + 1]);
    }

    // Displacement lattice {kx sx} x {ky sy} within the radius.
    const double sx = hyper.displacement_step > 0.0 ? hyper.displacement_step : cells.cell_width();
    const double sy = hyper.displacement_step > 0.0 ? hyper.displacement_step : cells.cell_height();
    const double rx = hyper.displacement_radius >= 0.0 ? hyper.displacement_radius
                                                       : static_cast<double>(cells.nx - 1) * cells.cell_width();
    const double ry = hyper.displacement_radius >= 0.0 ? hyper.displacement_radius
                                                       : static_cast<double>(cells.ny - 1) * cells.cell_height();
    const auto kx = static_cast<long>(std::floor(rx / sx + 1e-9));
    const auto ky = static_cast<long>(std::floor(ry / sy + 1e-9));
    std::vector<double> lattice;
    for (long b = -ky; b <= ky; ++b) {
        for (long a = -kx; a <= kx; ++a) {
            lattice.push_back(static_cast<double>(a) * sx);
            lattice.push_back(static_cast<double>(b) * sy);
        }
    }
    const auto wx = static_cast<std::size_t>(2 * kx + 1);
    constexpr std::size_t kNone = Dictionary::npos;
    std::vector<std::size_t> disp(nc * nc, kNone);
    for (std::size_t c = 0; c < nc; ++c) {
        const auto tc = cells.center(c);
        for (std::size_t src = 0; src < nc; ++src) {
            const auto sc = cells.center(src);
            const long a = std::lround((tc[0] - sc[0]) / sx);
            const long b = std::lround((tc[1] - sc[1]) / sy);
            if (std::labs(a) > kx || std::labs(b) > ky) continue;
            disp[c * nc + src] = static_cast<std::size_t>(b + ky) * wx + static_cast<std::size_t>(a + kx);
        }
    }

    const Dictionary dict = detail::make_dictionary(h, hyper.space_kernel, lattice, 2);
    DictionaryFunction f(&dict);
    if (square) {
        double mass = 0.0;
        const std::size_t mid = dict.index(dict.lag_count() / 2, dict.aux_count() / 2);
        for (std::size_t d = 0; d < dict.size(); ++d) mass += dict.k(d, mid);
        f.fill(h.square_init / mass);
    }

    ShpFitResult out;
    out.grid = build_grid(stream, h.delta, stream.horizon);
    const auto& grid = out.grid;
    auto& diag = out.diag;
    diag.min_mu = std::numeric_limits<double>::infinity();
    diag.min_constraint_value = std::numeric_limits<double>::infinity();
    diag.kappa_z = measure_kappa(stream, h.z);
    const double zeta = h.zeta_at(0, 0, 1);
    const double omega = h.omega_at(0);
    double mu = h.resolved_mu_init();
    std::size_t lo = 0;
    std::size_t begin = 0;
    std::vector<int> counts(nc);
    std::vector<double> rho_c(nc);
    std::vector<std::size_t> idx;   // nc * window entries, kNone when out of range
    std::vector<double> val;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double t = grid.epoch(k);
        const double dt = grid.dt(k);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t n = begin; n < grid.event_end[k]; ++n) ++counts[cell[n]];
        begin = grid.event_end[k];
        std::size_t end = grid.event_end[k];
        while (end > 0 && stream.times[end - 1] >= t) --end;
        while (lo < end && t - stream.times[lo] >= h.z) ++lo;
        const std::size_t w = end - lo;
        idx.assign(nc * w, kNone);
        val.assign(nc * w, 0.0);
        double rho_sum = 0.0;
        for (std::size_t c = 0; c < nc; ++c) {
            double lambda = mu;
            for (std::size_t n = lo; n < end; ++n) {
                const std::size_t q = disp[c * nc + cell[n]];
                if (q == kNone) continue;
                const std::size_t d = dict.index(dict.snap(t - stream.times[n]), q);
                const double v = f.value(d);
                idx[c * w + (n - lo)] = d;
                val[c * w + (n - lo)] = v;
                lambda += square ? v * v : v;
            }
            if (lambda < h.mu_min) {
                if (lambda < h.mu_min - 1e-8) {
                    throw std::domain_error("estimated intensity fell below mu_min at epoch " + std::to_string(k));
                }
                lambda = h.mu_min;
                ++diag.intensity_clamps;
            }
            rho_c[c] = dt * cells.area(c) - counts[c] / lambda;
            rho_sum += rho_c[c];
        }
        const double eta = h.step(k + 1, 1);
        mu = mu_step(mu, rho_sum, eta, omega, h.mu_min);
        diag.min_mu = std::min(diag.min_mu, mu);
        if (zeta != 0.0) f.scale(1.0 - eta * zeta);
        bool touched = false;
        for (std::size_t c = 0; c < nc; ++c) {
            for (std::size_t e = 0; e < w; ++e) {
                const std::size_t d = idx[c * w + e];
                if (d == kNone) continue;
                const double chain = square ? 2.0 * val[c * w + e] : 1.0;
                f.add(d, -eta * rho_c[c] * chain);
                touched = true;
            }
        }
        if (touched) {
            if (h.projection == ProjectionMode::kGridClip) {
                const auto st = f.project(h.projection_options());
                if (st.projected) ++diag.projections;
                if (!st.converged) ++diag.projection_failures;
            }
            if (h.budget != KernelExpansion::kUnbounded) diag.dropped_centers += f.truncate(h.budget);
        }
        if (options.check_invariants && h.projection == ProjectionMode::kGridClip) {
            diag.min_constraint_value = std::min(diag.min_constraint_value, f.min_constraint_value());
        }
    }
    out.mu = mu;
    out.f = {f.to_expansion(), square};
    out.displacements = std::move(lattice);
    out.seconds = diag.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

double shp_l1_error(const SpatialModel& truth, const TriggerEstimate* estimate, double z, double radius,
                    std::size_t nt, std::size_t nx) {
    const double ht = z / static_cast<double>(nt);
    const double hx = 2.0 * radius / static_cast<double>(nx);
    double acc = 0.0;
    for (std::size_t a = 0; a < nt; ++a) {
        const double t = (static_cast<double>(a) + 0.5) * ht;
        for (std::size_t b = 0; b < nx; ++b) {
            const double x = -radius + (static_cast<double>(b) + 0.5) * hx;
            for (std::size_t c = 0; c < nx; ++c) {
                const double y = -radius + (static_cast<double>(c) + 0.5) * hx;
                const double pt[3] = {t, x, y};
                const double e = estimate ? (*estimate)(std::span<const double>(pt, 3)) : 0.0;
                acc += std::abs(truth.f(t, x, y) - e);
            }
        }
    }
    return acc * ht * hx * hx;
}

}  // namespace npole
