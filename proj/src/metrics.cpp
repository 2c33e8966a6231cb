#include "npole/metrics.hpp"

#include "npole/format.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace npole {

namespace {

double simpson_step(const std::function<double(double)>& f, double a, double fa, double m, double fm, double b,
                    double fb, double whole, double tol, int depth) {
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
    return simpson_step(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol, std::size_t panels) {
    if (!(b > a)) return 0.0;
    if (panels == 0) panels = 1;
    const double h = (b - a) / static_cast<double>(panels);
    const double panel_tol = tol / static_cast<double>(panels);
    double total = 0.0;
    double x0 = a;
    double f0 = f(x0);
    for (std::size_t k = 0; k < panels; ++k) {
        const double x1 = k + 1 == panels ? b : a + h * static_cast<double>(k + 1);
        const double xm = 0.5 * (x0 + x1);
        const double fm = f(xm);
        const double f1 = f(x1);
        const double whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += simpson_step(f, x0, f0, xm, fm, x1, f1, whole, panel_tol, 40);
        x0 = x1;
        f0 = f1;
    }
    return total;
}

double l1_error(const GroundTruthFn& truth, const std::function<double(double)>& estimate, double z, double tol) {
    if (!(z > 0.0)) throw std::invalid_argument("l1 window must be positive");
    return adaptive_simpson([&](double t) { return std::abs(truth(t) - estimate(t)); }, 0.0, z, tol);
}

double l1_error(const GroundTruthFn& truth, const TriggerEstimate& estimate, double z, double tol) {
    return l1_error(truth, [&](double t) { return estimate(t); }, z, tol);
}

L1Report l1_report(const HawkesModel& truth, const std::function<double(std::size_t, std::size_t, double)>& estimate,
                   double z, double tol) {
    L1Report r;
    r.p = truth.dim();
    for (std::size_t i = 0; i < r.p; ++i) {
        for (std::size_t j = 0; j < r.p; ++j) {
            const double e = l1_error(truth.f(i, j), [&](double t) { return estimate(i, j, t); }, z, tol);
            r.pairs.push_back(e);
            r.total += e;
        }
    }
    return r;
}

L1Report l1_report(const HawkesModel& truth, const Snapshot& estimate, double z, double tol) {
    if (estimate.mu.size() != truth.dim()) throw std::invalid_argument("estimate dimension differs from the truth");
    return l1_report(truth, [&](std::size_t i, std::size_t j, double t) { return estimate.at(i, j)(t); }, z, tol);
}

LossSeries stepwise_loss(const UpdateGrid& grid, std::span<const double> intensity) {
    const auto p = static_cast<std::size_t>(grid.p);
    if (intensity.size() != grid.size() * p) throw std::invalid_argument("intensity trace does not match the grid");
    LossSeries out;
    double acc = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double l = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            const double lambda = intensity[k * p + i];
            l += grid.dt(k) * lambda - grid.count(k, i) * std::log(lambda);
        }
        acc += l;
        out.instantaneous.push_back(l);
        out.cumulative.push_back(acc);
    }
    return out;
}

double estimate_nll(const EventStream& stream, const UpdateGrid& grid, const Snapshot& estimate, double z) {
    const std::size_t p = estimate.mu.size();
    double total = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        std::size_t lo = 0;
        auto lambda = [&](std::size_t k, double t) {
            std::size_t end = grid.event_end[k];
            while (end > 0 && stream.times[end - 1] >= t) --end;
            while (lo < end && t - stream.times[lo] >= z) ++lo;
            double l = estimate.mu[i];
            for (std::size_t n = lo; n < end; ++n) {
                l += estimate.at(i, static_cast<std::size_t>(stream.dims[n]))(t - stream.times[n]);
            }
            return l;
        };
        total += discretized_nll(lambda, grid, i);
    }
    return total;
}

double stability_constant(double delta, double kappa1, double kappa_z, double mu_min) {
    return (1.0 / delta + kappa1) * kappa_z * std::abs(delta - 1.0 / mu_min);
}

StabilityReport stability_probe(const EventStream& stream, const HyperParams& hyper, std::size_t index,
                                double new_time, const FitOptions& options) {
    if (index >= stream.size()) throw std::invalid_argument("perturbed event index out of range");
    if (!(new_time >= 0.0) || new_time > stream.horizon) throw std::invalid_argument("perturbed time leaves [0, T]");
    if (index > 0 && new_time < stream.times[index - 1]) throw std::invalid_argument("perturbation breaks time order");
    if (index + 1 < stream.size() && new_time > stream.times[index + 1]) {
        throw std::invalid_argument("perturbation breaks time order");
    }
    EventStream moved = stream;
    moved.times[index] = new_time;
    const FitResult a = fit(stream, hyper, options);
    const FitResult b = fit(moved, hyper, options);
    const double t = stream.horizon;
    StabilityReport r;
    r.difference = std::abs(estimate_nll(stream, a.grid, a.final_state(), hyper.z) -
                            estimate_nll(stream, a.grid, b.final_state(), hyper.z)) / t;
    r.kappa1 = std::max(measure_kappa(stream, 1.0), measure_kappa(moved, 1.0));
    r.kappa_z = std::max(measure_kappa(stream, hyper.z), measure_kappa(moved, hyper.z));
    r.c_l = stability_constant(hyper.delta, static_cast<double>(r.kappa1), static_cast<double>(r.kappa_z),
                               hyper.mu_min);
    const auto p = static_cast<std::size_t>(stream.p);
    double inv = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            const double z = hyper.zeta_at(i, j, p);
            inv += z > 0.0 ? 1.0 / z : std::numeric_limits<double>::infinity();
        }
    }
    r.bound = 2.0 * r.c_l * r.c_l * hyper.delta / t * inv;
    return r;
}

MeanStderr mean_stderr(std::span<const double> values) {
    MeanStderr out;
    if (values.empty()) return out;
    const auto n = static_cast<double>(values.size());
    for (double v : values) out.mean += v;
    out.mean /= n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.stderr_ = std::sqrt(ss / (n - 1.0) / n);
    }
    return out;
}

nlohmann::json to_json(const MetricReport& report) {
    nlohmann::json j;
    j["experiment"] = report.experiment;
    j["seed"] = report.seed;
    j["config_fingerprint"] = report.config_fingerprint;
    j["trials"] = report.trials;
    j["p"] = report.p;
    j["l1_pairs"] = report.l1_pairs;
    j["l1_total"] = report.l1_total;
    j["l1_stderr"] = report.l1_stderr;
    j["nll"] = report.nll;
    if (report.regret) {
        const auto& r = *report.regret;
        j["regret"] = {{"epochs", r.epochs},
                       {"cumulative", r.regret},
                       {"normalized", r.normalized},
                       {"c1", r.c1},
                       {"final_over_max", r.final_over_max}};
    }
    if (!report.extra.empty()) j["extra"] = report.extra;
    return j;
}

void write_report(const std::string& path, const MetricReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_json(report).dump(2) << '\n';
}

void write_table1_csv(std::ostream& out, const Table1& table) {
    out << "delta";
    for (double z : table.zetas) out << ",log10_zeta=" << format_double(std::round(std::log10(z) * 1000.0) / 1000.0);
    out << '\n';
    for (std::size_t d = 0; d < table.deltas.size(); ++d) {
        out << format_double(table.deltas[d]);
        for (std::size_t z = 0; z < table.zetas.size(); ++z) out << ',' << format_double(table.at(d, z));
        out << '\n';
    }
}

std::string fingerprint(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace npole
