#include "npole/baselines.hpp"
#include "npole/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace npole;

namespace {

HawkesModel one_dim(double mu, double alpha, double beta) {
    HawkesModel m;
    m.mu = {mu};
    m.triggers = {GroundTruthFn::exp_decay(alpha, beta)};
    return m;
}

}  // namespace

TEST_CASE("exponential model helpers") {
    ExpModel m;
    m.p = 2;
    m.alpha = {0.5, 0.0, 0.2, 0.1};
    m.beta = {2.0, 1.0, 3.0, 1.5};
    m.mu = {0.3, 0.4};
    CHECK(m.f(0, 0, 1.0) == doctest::Approx(0.5 * std::exp(-2.0)));
    CHECK(m.f(1, 0, -0.1) == 0.0);
    const HawkesModel h = m.to_model();
    CHECK(h.f(0, 1).is_zero());
    CHECK(h.f(1, 0)(0.5) == doctest::Approx(m.f(1, 0, 0.5)));
}

TEST_CASE("alpha gradient matches finite differences") {
    CounterRng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> lags;
        for (int n = 0; n < 1 + trial % 5; ++n) lags.push_back(3.0 * rng.uniform());
        const double beta = 0.5 + 3.0 * rng.uniform();
        const double mu = 0.2 + rng.uniform();
        const double alpha = rng.uniform();
        const double dt = 0.05 * rng.uniform() + 1e-3;
        const double zeta = trial % 2 ? 1e-8 : 0.5;
        const int x = trial % 3 == 0 ? 1 : 0;
        double s = 0.0;
        for (double l : lags) s += std::exp(-beta * l);
        auto risk = [&](double a) {
            const double lambda = mu + a * s;
            return dt * lambda - x * std::log(lambda) + 0.5 * zeta * a * a;
        };
        const double r = dt - x / (mu + alpha * s);
        const double analytic = exp_alpha_gradient(r, lags, beta, alpha, zeta);
        const double h = 1e-5;
        const double fd = (risk(alpha + h) - risk(alpha - h)) / (2.0 * h);
        CHECK(std::abs(fd - analytic) <= 1e-6 * std::max(1.0, std::abs(analytic)));
    }
}

TEST_CASE("well-specified exponential recovery agrees with the batch MLE") {
    const HawkesModel truth = one_dim(0.5, 0.5, 2.0);
    const EventStream s = simulate(truth, 5000.0, 21);
    const ExpFitResult r = ogd_exp_fit(s, HyperParams::experiment(), {2.0});
    const double alpha_hat = r.model.alpha[0];
    CHECK(alpha_hat >= 0.4);
    CHECK(alpha_hat <= 0.6);

    // Oracle: grid search of the exact likelihood over (mu, alpha).
    double best = std::numeric_limits<double>::infinity();
    double best_alpha = 0.0;
    for (int a = 0; a <= 100; ++a) {
        for (int m = 20; m <= 100; ++m) {
            const double nll = exact_nll_exponential(one_dim(0.01 * m, 0.01 * a, 2.0), s, 0);
            if (nll < best) {
                best = nll;
                best_alpha = 0.01 * a;
            }
        }
    }
    MESSAGE("online alpha " << alpha_hat << ", batch MLE alpha " << best_alpha);
    CHECK(std::abs(alpha_hat - best_alpha) < 0.1);
}

TEST_CASE("Poisson data drives alpha toward zero") {
    // At delta = 0.05 the right-endpoint window sum biases alpha to about 0.1;
    // a finer grid removes most of it.
    HyperParams h = HyperParams::experiment();
    h.delta = 0.01;
    double alpha = 0.0;
    for (std::uint64_t seed : {9, 10, 11}) {
        const EventStream s = simulate(HawkesModel::poisson({1.0}), 20000.0, seed);
        const ExpFitResult r = ogd_exp_fit(s, h, {2.0});
        alpha += r.model.alpha[0] / 3.0;
        CHECK(r.model.mu[0] == doctest::Approx(1.0).epsilon(0.1));
    }
    CHECK(alpha < 0.05);
}

TEST_CASE("alpha stays nonnegative at every step") {
    HyperParams h = HyperParams::experiment();
    h.snapshot_stride = 50;
    const EventStream s = simulate(HawkesModel::benchmark5(), 200.0, 3);
    const ExpFitResult r = ogd_exp_fit(s, h);
    CHECK(r.min_alpha >= 0.0);
    for (const auto& snap : r.trace) {
        for (double a : snap.alpha) CHECK(a >= 0.0);
        for (double m : snap.mu) CHECK(m >= h.mu_min);
    }
}

TEST_CASE("exponential fit is identical in serial and parallel") {
    const EventStream s = simulate(HawkesModel::benchmark5(), 200.0, 8);
    const HyperParams h = HyperParams::experiment();
    const ExpFitResult a = ogd_exp_fit(s, h, {}, FitOptions{.parallel = false});
    const ExpFitResult b = ogd_exp_fit(s, h, {}, FitOptions{.parallel = true, .threads = 4});
    CHECK(a.model.alpha == b.model.alpha);
    CHECK(a.model.mu == b.model.mu);
}

TEST_CASE("exponential fit validates decays") {
    const EventStream s = simulate(HawkesModel::poisson({1.0, 1.0}), 10.0, 1);
    CHECK_THROWS_AS(ogd_exp_fit(s, HyperParams::experiment(), {2.0}), std::invalid_argument);
    CHECK_THROWS_AS(ogd_exp_fit(s, HyperParams::experiment(), {2.0, 0.0, 1.0, 1.0}), std::invalid_argument);
}
