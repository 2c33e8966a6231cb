#pragma once

#include "npole/ground_truth.hpp"
#include "npole/process.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace npole {

/// Update epochs t_1 < ... < t_M (t_0 = 0 is implicit) mixing delta ticks and
/// arrival times, with per-epoch arrival counts x_{i,k} over (t_{k-1}, t_k].
/// Events at time 0 are counted in the first interval.
struct UpdateGrid {
    std::vector<double> epochs;
    std::vector<std::uint16_t> x;        // epochs.size() * p, row-major by epoch
    std::vector<std::size_t> event_end;  // events with time <= t_k
    double delta = 0.0;
    int p = 1;

    std::size_t size() const { return epochs.size(); }
    double epoch(std::size_t k) const { return epochs[k]; }
    double dt(std::size_t k) const { return k == 0 ? epochs[0] : epochs[k] - epochs[k - 1]; }
    int count(std::size_t k, std::size_t i) const { return x[k * static_cast<std::size_t>(p) + i]; }
    bool any_event(std::size_t k) const;
};

/// Recursion t_{k+1} = min(floor_delta(t_k) + delta, next arrival > t_k, T).
/// Throws std::invalid_argument unless 0 < delta <= 1 and the stream is sorted.
UpdateGrid build_grid(const EventStream& stream, double delta, double horizon);

/// delta * floor(t / delta) with a 1e-9 slack against representation error.
double floor_to_grid(double t, double delta);

/// sum_k dt_k lambda(t_k) - x_{i,k} log lambda(t_k). lambda(k, t) is called
/// once per epoch in order. Throws std::domain_error on lambda <= 0.
double discretized_nll(const std::function<double(std::size_t, double)>& lambda, const UpdateGrid& grid,
                       std::size_t i);

/// Same with the model's left-limit intensity truncated to `window`.
double discretized_nll(const HawkesModel& model, const UpdateGrid& grid, const EventStream& stream,
                       std::size_t i, double window);

/// dt lambda - x log lambda + (omega / 2) mu^2 + sum_j (zeta_j / 2) ||f_j||^2.
/// Throws std::domain_error when lambda < mu_min.
double instantaneous_risk(double lambda, double dt, int x, double mu, std::span<const double> f_norms_sq,
                          double omega, std::span<const double> zeta, double mu_min = 0.0);

/// Decreasing tail function bounding the delta-grid Riemann tail sums of |f|.
class TailFn {
public:
    enum class Kind { kExp, kGauss, kTable, kMax };

    /// a beta^{-1} exp(-beta (t - delta)), the tail of a exp(-beta t).
    static TailFn exp_tail(double beta, double delta, double amplitude = 1.0);
    /// a exp(-beta (t - delta)), the tail of |d/dt a exp(-beta t)|.
    static TailFn exp_derivative_tail(double beta, double delta, double amplitude = 1.0);
    /// a sqrt(pi/2) erfc((t - gamma) / sqrt(2)) exp(delta^2 / 2), the tail of
    /// a exp(-(t - gamma)^2); valid for t > gamma + 2 delta.
    static TailFn gauss_tail(double gamma, double delta, double amplitude = 1.0);
    /// int_t^inf sup_{|x - u| <= delta} |g(x)| du, tabulated up to `upper`.
    static TailFn numeric(const std::function<double(double)>& g, double delta, double upper);
    static TailFn numeric(const GroundTruthFn& f, double delta, bool derivative = false);
    /// Pointwise maximum, a tail uniform over several functions.
    static TailFn max_of(std::vector<TailFn> parts);

    double operator()(double t) const;
    Kind kind() const { return kind_; }

private:
    Kind kind_ = Kind::kExp;
    double a_ = 1.0;
    double b_ = 1.0;
    double delta_ = 0.0;
    double step_ = 0.0;
    std::vector<double> table_;
    std::vector<TailFn> parts_;
};

/// Uniform tails over every f_{i,j} of the model (and their derivatives):
/// closed forms for exponential pairs, tabulated otherwise.
TailFn model_tail(const HawkesModel& model, double delta, bool derivative);

/// (1 + kappa_1 / mu_min) N(t - z) eps(z) + delta N(t) eps'(0).
double prop1_bound(const EventStream& stream, double t, double z, double delta, double mu_min, double kappa1,
                   const TailFn& eps, const TailFn& eps_prime);

/// Largest number of arrivals of a single dimension in any window [s - w, s).
std::size_t measure_kappa(const EventStream& stream, double window);

/// CSV `t_k,x_1k,...,x_pk` for debugging.
void write_grid_csv(std::ostream& out, const UpdateGrid& grid);

}  // namespace npole
