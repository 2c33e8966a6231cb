#include "npole/baselines.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace npole {

double ExpModel::f(std::size_t i, std::size_t j, double t) const {
    if (t < 0.0) return 0.0;
    return alpha[i * p + j] * std::exp(-beta[i * p + j] * t);
}

HawkesModel ExpModel::to_model() const {
    HawkesModel m;
    m.mu = mu;
    for (std::size_t k = 0; k < p * p; ++k) {
        m.triggers.push_back(alpha[k] > 0.0 ? GroundTruthFn::exp_decay(alpha[k], beta[k]) : GroundTruthFn::zero());
    }
    return m;
}

double exp_alpha_gradient(double rho_k, std::span<const double> lags, double beta, double alpha, double zeta) {
    double s = 0.0;
    for (double lag : lags) s += std::exp(-beta * lag);
    return rho_k * s + zeta * alpha;
}

namespace {

struct ExpRow {
    std::vector<double> mu;  // per snapshot
    std::vector<std::vector<double>> alpha;
    std::vector<double> risk;
    std::vector<double> intensity;
    double min_alpha = std::numeric_limits<double>::infinity();
};

}  // namespace

ExpFitResult ogd_exp_fit(const EventStream& stream, const HyperParams& hyper, std::vector<double> beta,
                         const FitOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    stream.validate();
    const auto p = static_cast<std::size_t>(stream.p);
    hyper.validate(p);
    if (beta.empty()) beta.assign(p * p, 2.0);
    if (beta.size() != p * p) throw std::invalid_argument("beta must be p x p");
    for (double b : beta) {
        if (!(b > 0.0)) throw std::invalid_argument("decay rates must be positive");
    }

    ExpFitResult result;
    result.grid = build_grid(stream, hyper.delta, stream.horizon);
    const auto& grid = result.grid;
    const std::size_t m = grid.size();
    std::vector<std::size_t> snaps;
    for (std::size_t e = hyper.snapshot_stride; e < m; e += hyper.snapshot_stride) snaps.push_back(e);
    if (m > 0) snaps.push_back(m);

    std::vector<ExpRow> rows(p);
    std::vector<std::string> errors(p);
    const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (options.parallel)
    for (std::size_t i = 0; i < p; ++i) {
        try {
            ExpRow& out = rows[i];
            if (options.trace_risk) {
                out.risk.resize(m);
                out.intensity.resize(m);
            }
            double mu = hyper.resolved_mu_init();
            const double omega = hyper.omega_at(i);
            std::vector<double> alpha(p, 0.0);
            std::vector<double> expsum(p);
            std::size_t lo = 0;
            std::size_t next = 0;
            for (std::size_t k = 0; k < m; ++k) {
                const double t = grid.epoch(k);
                const double dt = grid.dt(k);
                const int x = grid.count(k, i);
                std::size_t end = grid.event_end[k];
                while (end > 0 && stream.times[end - 1] >= t) --end;
                while (lo < end && t - stream.times[lo] >= hyper.z) ++lo;
                std::fill(expsum.begin(), expsum.end(), 0.0);
                for (std::size_t n = lo; n < end; ++n) {
                    const auto j = static_cast<std::size_t>(stream.dims[n]);
                    expsum[j] += std::exp(-beta[i * p + j] * (t - stream.times[n]));
                }
                double lambda = mu;
                for (std::size_t j = 0; j < p; ++j) lambda += alpha[j] * expsum[j];
                if (options.trace_risk) {
                    double r = dt * lambda - x * std::log(lambda) + 0.5 * omega * mu * mu;
                    for (std::size_t j = 0; j < p; ++j) r += 0.5 * hyper.zeta_at(i, j, p) * alpha[j] * alpha[j];
                    out.risk[k] = r;
                    out.intensity[k] = lambda;
                }
                const double r = rho(dt, x, lambda, hyper.mu_min);
                const double eta = hyper.step(k + 1, p);
                mu = mu_step(mu, r, eta, omega, hyper.mu_min);
                for (std::size_t j = 0; j < p; ++j) {
                    const double g = r * expsum[j] + hyper.zeta_at(i, j, p) * alpha[j];
                    alpha[j] = std::max(alpha[j] - eta * g, 0.0);
                    out.min_alpha = std::min(out.min_alpha, alpha[j]);
                }
                if (next < snaps.size() && snaps[next] == k + 1) {
                    out.mu.push_back(mu);
                    out.alpha.push_back(alpha);
                    ++next;
                }
            }
            if (m == 0) {
                out.mu.push_back(mu);
                out.alpha.push_back(alpha);
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw std::domain_error(e);
    }

    const std::size_t count = std::max<std::size_t>(snaps.size(), 1);
    for (std::size_t s = 0; s < count; ++s) {
        ExpSnapshot snap;
        snap.epoch = snaps.empty() ? 0 : snaps[s];
        for (std::size_t i = 0; i < p; ++i) {
            snap.mu.push_back(rows[i].mu[s]);
            snap.alpha.insert(snap.alpha.end(), rows[i].alpha[s].begin(), rows[i].alpha[s].end());
        }
        result.trace.push_back(std::move(snap));
    }
    result.model.p = p;
    result.model.beta = beta;
    result.model.mu = result.trace.back().mu;
    result.model.alpha = result.trace.back().alpha;
    result.min_alpha = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) result.min_alpha = std::min(result.min_alpha, r.min_alpha);
    if (options.trace_risk) {
        result.risk.assign(m * p, 0.0);
        result.intensity.assign(m * p, 0.0);
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t k = 0; k < m; ++k) {
                result.risk[k * p + i] = rows[i].risk[k];
                result.intensity[k * p + i] = rows[i].intensity[k];
            }
        }
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace npole
