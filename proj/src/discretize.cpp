#include "npole/discretize.hpp"

#include "npole/format.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace npole {

bool UpdateGrid::any_event(std::size_t k) const {
    const auto row = x.begin() + static_cast<std::ptrdiff_t>(k * static_cast<std::size_t>(p));
    return std::any_of(row, row + p, [](std::uint16_t v) { return v > 0; });
}

double floor_to_grid(double t, double delta) { return delta * std::floor(t / delta + 1e-9); }

UpdateGrid build_grid(const EventStream& stream, double delta, double horizon) {
    if (!(delta > 0.0) || delta > 1.0) throw std::invalid_argument("grid spacing must satisfy 0 < delta <= 1");
    if (!(horizon > 0.0)) throw std::invalid_argument("grid horizon must be positive");
    for (std::size_t n = 1; n < stream.size(); ++n) {
        if (stream.times[n] < stream.times[n - 1]) throw std::invalid_argument("event stream is not sorted");
    }
    UpdateGrid g;
    g.delta = delta;
    g.p = stream.p;
    const auto p = static_cast<std::size_t>(stream.p);
    const std::size_t total = stream.count_until(horizon);
    g.epochs.reserve(static_cast<std::size_t>(horizon / delta) + total + 2);
    std::size_t next = 0;
    double t = 0.0;
    while (next < total && stream.times[next] <= 0.0) ++next;
    std::size_t consumed = 0;
    while (t < horizon) {
        double nt = std::min(floor_to_grid(t, delta) + delta, horizon);
        if (next < total) nt = std::min(nt, stream.times[next]);
        g.epochs.push_back(nt);
        g.x.resize(g.x.size() + p, 0);
        auto* row = &g.x[g.x.size() - p];
        while (consumed < total && stream.times[consumed] <= nt) {
            ++row[static_cast<std::size_t>(stream.dims[consumed])];
            ++consumed;
        }
        g.event_end.push_back(consumed);
        while (next < total && stream.times[next] <= nt) ++next;
        t = nt;
    }
    return g;
}

double discretized_nll(const std::function<double(std::size_t, double)>& lambda, const UpdateGrid& grid,
                       std::size_t i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double l = lambda(k, grid.epoch(k));
        if (!(l > 0.0)) throw std::domain_error("non-positive intensity at epoch " + std::to_string(k));
        acc += grid.dt(k) * l;
        if (const int x = grid.count(k, i)) acc -= x * std::log(l);
    }
    return acc;
}

double discretized_nll(const HawkesModel& model, const UpdateGrid& grid, const EventStream& stream,
                       std::size_t i, double window) {
    return discretized_nll(
        [&](std::size_t, double t) { return intensity_before(model, stream, i, t, window); }, grid, i);
}

double instantaneous_risk(double lambda, double dt, int x, double mu, std::span<const double> f_norms_sq,
                          double omega, std::span<const double> zeta, double mu_min) {
    if (lambda < mu_min || !(lambda > 0.0)) throw std::domain_error("intensity below mu_min");
    if (f_norms_sq.size() != zeta.size()) throw std::invalid_argument("norm and zeta lengths differ");
    double r = dt * lambda - x * std::log(lambda) + 0.5 * omega * mu * mu;
    for (std::size_t j = 0; j < zeta.size(); ++j) r += 0.5 * zeta[j] * f_norms_sq[j];
    return r;
}

TailFn TailFn::exp_tail(double beta, double delta, double amplitude) {
    if (!(beta > 0.0)) throw std::invalid_argument("tail rate must be positive");
    TailFn e;
    e.kind_ = Kind::kExp;
    e.a_ = amplitude / beta;
    e.b_ = beta;
    e.delta_ = delta;
    return e;
}

TailFn TailFn::exp_derivative_tail(double beta, double delta, double amplitude) {
    TailFn e = exp_tail(beta, delta, amplitude);
    e.a_ = amplitude;
    return e;
}

TailFn TailFn::gauss_tail(double gamma, double delta, double amplitude) {
    TailFn e;
    e.kind_ = Kind::kGauss;
    e.a_ = amplitude;
    e.b_ = gamma;
    e.delta_ = delta;
    return e;
}

TailFn TailFn::numeric(const std::function<double(double)>& g, double delta, double upper) {
    if (!(delta > 0.0) || !(upper > 0.0)) throw std::invalid_argument("numeric tail needs delta, upper > 0");
    // Sample |g| on a fine grid, bound it between samples by a local slope
    // estimate, take the running max over [u - delta, u + delta] and integrate
    // from the right.
    const double h = delta / 32.0;
    const auto n = static_cast<std::size_t>(std::ceil((upper + delta) / h)) + 2;
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = std::abs(g(static_cast<double>(k) * h));
    std::vector<double> pad(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double left = k > 0 ? v[k - 1] : v[k];
        const double right = k + 1 < n ? v[k + 1] : v[k];
        pad[k] = std::max({v[k], left, right}) + 0.5 * std::max(std::abs(v[k] - left), std::abs(right - v[k]));
    }
    const auto w = static_cast<std::size_t>(std::ceil(delta / h));
    std::vector<double> win(n);
    std::deque<std::size_t> q;  // monotone queue for the sliding max
    std::size_t hi = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lim = std::min(n - 1, k + w);
        while (hi <= lim) {
            while (!q.empty() && pad[q.back()] <= pad[hi]) q.pop_back();
            q.push_back(hi++);
        }
        while (q.front() + w < k) q.pop_front();
        win[k] = pad[q.front()];
    }
    TailFn e;
    e.kind_ = Kind::kTable;
    e.step_ = h;
    e.table_.assign(n, 0.0);
    for (std::size_t k = n - 1; k-- > 0;) e.table_[k] = e.table_[k + 1] + h * std::max(win[k], win[k + 1]);
    return e;
}

TailFn TailFn::numeric(const GroundTruthFn& f, double delta, bool derivative) {
    const double upper = f.effective_support(1e-14) + 2.0;
    if (derivative) return numeric([&f](double t) { return f.derivative(t); }, delta, upper);
    return numeric([&f](double t) { return f(t); }, delta, upper);
}

TailFn TailFn::max_of(std::vector<TailFn> parts) {
    TailFn e;
    e.kind_ = Kind::kMax;
    e.parts_ = std::move(parts);
    return e;
}

double TailFn::operator()(double t) const {
    switch (kind_) {
        case Kind::kExp:
            return a_ * std::exp(-b_ * (t - delta_));
        case Kind::kGauss:
            return a_ * std::sqrt(std::numbers::pi / 2.0) * std::erfc((t - b_) / std::numbers::sqrt2) *
                   std::exp(delta_ * delta_ / 2.0);
        case Kind::kTable: {
            if (t <= 0.0) return table_.front();
            const auto k = static_cast<std::size_t>(t / step_);
            return k < table_.size() ? table_[k] : 0.0;
        }
        case Kind::kMax: {
            double m = 0.0;
            for (const auto& p : parts_) m = std::max(m, p(t));
            return m;
        }
    }
    return 0.0;
}

TailFn model_tail(const HawkesModel& model, double delta, bool derivative) {
    std::vector<TailFn> parts;
    for (const auto& f : model.triggers) {
        if (f.is_zero()) continue;
        if (f.kind() == GroundTruthFn::Kind::kExpDecay) {
            parts.push_back(derivative ? TailFn::exp_derivative_tail(f.rate(), delta, f.amplitude())
                                       : TailFn::exp_tail(f.rate(), delta, f.amplitude()));
        } else {
            parts.push_back(TailFn::numeric(f, delta, derivative));
        }
    }
    return TailFn::max_of(std::move(parts));
}

double prop1_bound(const EventStream& stream, double t, double z, double delta, double mu_min, double kappa1,
                   const TailFn& eps, const TailFn& eps_prime) {
    // Events with t - tau >= z are outside the window.
    const auto before = static_cast<double>(stream.count_until(t - z));
    const auto all = static_cast<double>(stream.count_until(t));
    return (1.0 + kappa1 / mu_min) * before * eps(z) + delta * all * eps_prime(0.0);
}

std::size_t measure_kappa(const EventStream& stream, double window) {
    std::size_t best = 0;
    for (int d = 0; d < stream.p; ++d) {
        std::vector<double> t;
        for (std::size_t n = 0; n < stream.size(); ++n) {
            if (stream.dims[n] == d) t.push_back(stream.times[n]);
        }
        // [s - w, s) with s just past t[hi]: count events in [t[hi] - w, t[hi]].
        std::size_t lo = 0;
        for (std::size_t hi = 0; hi < t.size(); ++hi) {
            while (t[lo] < t[hi] - window) ++lo;
            best = std::max(best, hi - lo + 1);
        }
    }
    return best;
}

void write_grid_csv(std::ostream& out, const UpdateGrid& grid) {
    out << "t_k";
    for (int i = 0; i < grid.p; ++i) out << ",x_" << (i + 1);
    out << "\n";
    for (std::size_t k = 0; k < grid.size(); ++k) {
        out << format_double(grid.epoch(k));
        for (std::size_t i = 0; i < static_cast<std::size_t>(grid.p); ++i) out << "," << grid.count(k, i);
        out << "\n";
    }
}

}  // namespace npole
