#include "npole/extensions.hpp"
#include "npole/rng.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <map>

using namespace npole;

namespace {

const Kernel kJoint = Kernel::product(Kernel::gaussian(0.2), Kernel::gaussian(1.0));

// dt lambda - x log lambda + (zeta / 2) ||f||^2 with lambda = mu + sum_n f(lag_n, v_n).
double joint_risk(const KernelExpansion& f, std::span<const double> lags, std::span<const double> marks, double mu,
                  double dt, int x, double zeta) {
    double lambda = mu;
    for (std::size_t n = 0; n < lags.size(); ++n) {
        const double pt[2] = {lags[n], marks[n]};
        lambda += f(std::span<const double>(pt, 2));
    }
    return dt * lambda - x * std::log(lambda) + 0.5 * zeta * rkhs_norm_sq(f);
}

double separable_risk(const KernelExpansion& g, const KernelExpansion& h, std::span<const double> lags,
                      std::span<const double> marks, double mu, double dt, int x, double zeta) {
    double lambda = mu;
    for (std::size_t n = 0; n < lags.size(); ++n) lambda += g(lags[n]) * h.raw(marks.subspan(n, 1));
    return dt * lambda - x * std::log(lambda) + 0.5 * zeta * (rkhs_norm_sq(g) + rkhs_norm_sq(h));
}

EventStream constant_mark_stream(double horizon, std::uint64_t seed) {
    HawkesModel m;
    m.mu = {0.4, 0.3};
    m.triggers = {GroundTruthFn::exp_decay(0.5, 2.0), GroundTruthFn::exp_decay(0.2, 1.5),
                  GroundTruthFn::exp_decay(0.3, 2.5), GroundTruthFn::exp_decay(0.4, 3.0)};
    EventStream s = simulate(m, horizon, seed);
    s.marks.assign(s.size(), 2.5);
    return s;
}

// Coefficients of a (lag, mark) expansion summed over the mark coordinate.
std::map<double, double> lag_marginal(const KernelExpansion& f) {
    std::map<double, double> out;
    for (std::size_t s = 0; s < f.size(); ++s) out[f.center(s)[0]] += f.coefficient(s);
    return out;
}

}  // namespace

TEST_CASE("joint marked gradient examples") {
    SUBCASE("empty window is pure shrinkage") {
        KernelExpansion f(kJoint, 2);
        const double c[2] = {0.3, -0.5};
        f.add(std::span<const double>(c, 2), 2.0);
        const auto d = mmhp_gradient_joint(f, {}, {}, 0.7, 0.25);
        REQUIRE(d.size() == 1);
        CHECK(d.coefficient(0) == doctest::Approx(0.5));
    }
    SUBCASE("one event gives one center") {
        const KernelExpansion f(kJoint, 2);
        const double lag = 0.4, mark = 2.0;
        const auto d = mmhp_gradient_joint(f, std::span<const double>(&lag, 1), std::span<const double>(&mark, 1), 0.1, 0.0);
        REQUIRE(d.size() == 1);
        CHECK(d.center(0)[0] == 0.4);
        CHECK(d.center(0)[1] == 2.0);
        CHECK(d.coefficient(0) == 0.1);
    }
    SUBCASE("marks must match lags") {
        const KernelExpansion f(kJoint, 2);
        const std::vector<double> lags{0.1, 0.2}, marks{1.0};
        CHECK_THROWS_AS(mmhp_gradient_joint(f, lags, marks, 0.1, 0.0), std::invalid_argument);
    }
}

TEST_CASE("joint marked gradient matches finite differences") {
    CounterRng rng(41);
    for (int trial = 0; trial < 30; ++trial) {
        KernelExpansion f(kJoint, 2);
        for (int s = 0; s < 6; ++s) {
            const double c[2] = {3.0 * rng.uniform(), 4.0 * rng.uniform() - 2.0};
            f.add(std::span<const double>(c, 2), 0.3 * rng.uniform());
        }
        std::vector<double> lags, marks;
        for (int n = 0; n < 4; ++n) {
            lags.push_back(3.0 * rng.uniform());
            marks.push_back(4.0 * rng.uniform() - 2.0);
        }
        const double mu = 0.5, dt = 0.05, zeta = 0.3;
        const int x = trial % 2;
        double lambda = mu;
        for (std::size_t n = 0; n < lags.size(); ++n) {
            const double pt[2] = {lags[n], marks[n]};
            lambda += f(std::span<const double>(pt, 2));
        }
        const double r = dt - x / lambda;
        const auto d = mmhp_gradient_joint(f, lags, marks, r, zeta);
        // Partial derivative in coefficient s equals the delta evaluated at center s.
        for (std::size_t s = 0; s < f.size(); ++s) {
            const double h = 1e-6;
            KernelExpansion up = f, down = f;
            up.set_coefficient(s, f.coefficient(s) + h);
            down.set_coefficient(s, f.coefficient(s) - h);
            const double fd = (joint_risk(up, lags, marks, mu, dt, x, zeta) - joint_risk(down, lags, marks, mu, dt, x, zeta)) /
                              (2.0 * h);
            const double analytic = d(f.center(s));
            CHECK(std::abs(fd - analytic) <= 1e-5 * std::max(1.0, std::abs(analytic)));
        }
    }
}

TEST_CASE("separable marked gradient examples") {
    SUBCASE("flat h recovers the unmarked delta") {
        KernelExpansion g(Kernel::gaussian(0.2));
        g.add(0.5, 0.8);
        g.add(1.2, 0.3);
        KernelExpansion h(Kernel::gaussian(1e6));
        h.add(0.0, 1.0);
        const std::vector<double> lags{0.4, 1.0, 2.2}, marks{-1.0, 0.5, 2.0};
        const auto d = mmhp_gradient_separable(g, h, lags, marks, 0.2, 0.1);
        const auto plain = f_gradient(g, lags, 0.2, 0.1, 0.0);
        for (double t = 0.0; t <= 3.0; t += 0.05) CHECK(d.g(t) == doctest::Approx(plain(t)).epsilon(1e-10));
    }
    SUBCASE("h delta for one event") {
        KernelExpansion g(Kernel::gaussian(0.2));
        g.add(0.7, 0.5);
        KernelExpansion h(Kernel::gaussian(1.0));
        const double lag = 0.7, mark = 1.5;
        const auto d = mmhp_gradient_separable(g, h, std::span<const double>(&lag, 1), std::span<const double>(&mark, 1),
                                               0.1, 0.0);
        REQUIRE(d.h.size() == 1);
        CHECK(d.h.center(0)[0] == 1.5);
        CHECK(d.h.coefficient(0) == doctest::Approx(0.05).epsilon(1e-14));
    }
}

TEST_CASE("alternating separable steps decrease the risk") {
    CounterRng rng(8);
    int decreased = 0;
    for (int trial = 0; trial < 100; ++trial) {
        KernelExpansion g(Kernel::gaussian(0.2)), h(Kernel::gaussian(1.0));
        for (int s = 0; s < 4; ++s) g.add(3.0 * rng.uniform(), rng.uniform());
        for (int s = 0; s < 4; ++s) h.add(4.0 * rng.uniform() - 2.0, rng.uniform());
        const std::vector<double> lags{3.0 * rng.uniform(), 3.0 * rng.uniform(), 3.0 * rng.uniform()};
        const std::vector<double> marks{2.0 * rng.normal(), 2.0 * rng.normal(), 2.0 * rng.normal()};
        const double mu = 0.3, dt = 0.05, zeta = 1e-3, eta = 0.01;
        const int x = trial % 3 == 0 ? 1 : 0;
        auto risk = [&] { return separable_risk(g, h, lags, marks, mu, dt, x, zeta); };
        auto r_of = [&] {
            double lambda = mu;
            for (std::size_t n = 0; n < 3; ++n) lambda += g(lags[n]) * h.raw(std::span<const double>(&marks[n], 1));
            return dt - x / lambda;
        };
        const double before = risk();
        auto dg = mmhp_gradient_separable(g, h, lags, marks, r_of(), zeta).g;
        for (std::size_t s = 0; s < dg.size(); ++s) g.add(dg.center(s), -eta * dg.coefficient(s));
        auto dh = mmhp_gradient_separable(g, h, lags, marks, r_of(), zeta).h;
        for (std::size_t s = 0; s < dh.size(); ++s) h.add(dh.center(s), -eta * dh.coefficient(s));
        if (risk() < before) ++decreased;
    }
    CHECK(decreased >= 90);
}

TEST_CASE("separable product equals the factored joint expansion") {
    CounterRng rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        KernelExpansion g(Kernel::gaussian(0.2)), h(Kernel::gaussian(1.0));
        for (int s = 0; s < 5; ++s) g.add(3.0 * rng.uniform(), rng.normal());
        for (int s = 0; s < 4; ++s) h.add(4.0 * rng.uniform() - 2.0, rng.normal());
        KernelExpansion joint(kJoint, 2);
        for (std::size_t a = 0; a < g.size(); ++a) {
            for (std::size_t b = 0; b < h.size(); ++b) {
                const double c[2] = {g.center(a)[0], h.center(b)[0]};
                joint.add(std::span<const double>(c, 2), g.coefficient(a) * h.coefficient(b));
            }
        }
        MarkedTrigger sep;
        sep.mode = MarkMode::kSeparable;
        sep.g = g;
        sep.h = h;
        MarkedTrigger jt;
        jt.joint = joint;
        for (int q = 0; q < 50; ++q) {
            const double t = 3.0 * rng.uniform(), v = 4.0 * rng.uniform() - 2.0;
            CHECK(std::abs(sep(t, v) - jt(t, v)) <= 1e-10);
        }
    }
}

TEST_CASE("mark standardization") {
    const std::vector<double> marks{1.0, 3.0, 5.0, 100.0};
    MarkScaler scaler;
    const auto z = standardize_marks(marks, 3, &scaler);
    CHECK(z[0] == 0.0);  // one mark: mean is the mark, spread degenerate
    CHECK(scaler.mean == doctest::Approx(3.0));
    CHECK(scaler.scale == doctest::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(z[2] == doctest::Approx(2.0 / std::sqrt(8.0 / 3.0)));
    CHECK(z[3] == doctest::Approx(97.0 / std::sqrt(8.0 / 3.0)));
    const std::vector<double> same(10, 4.2);
    for (double v : standardize_marks(same, 1000)) CHECK(v == 0.0);
}

TEST_CASE("constant marks reproduce the unmarked fit") {
    const EventStream s = constant_mark_stream(400.0, 3);
    SUBCASE("square mode, wide mark kernel") {
        MarkedHyper mh;
        mh.base = HyperParams::experiment();
        mh.mark_kernel = Kernel::gaussian(1e4);
        const MarkedFitResult mf = mmhp_fit(s, mh);
        const FitResult plain = fit(s, mh.base);
        for (std::size_t i = 0; i < 2; ++i) CHECK(mf.mu[i] == doctest::Approx(plain.final_state().mu[i]).epsilon(1e-9));
        for (std::size_t k = 0; k < 4; ++k) {
            const auto joint = lag_marginal(mf.f[k].joint);
            const auto ref = lag_marginal(plain.final_state().f[k].g);
            for (const auto& [lag, a] : ref) {
                REQUIRE(joint.count(lag) == 1);
                CHECK(std::abs(joint.at(lag) - a) <= 1e-6);
            }
            for (double t = 0.0; t <= 3.0; t += 0.1) {
                CHECK(std::abs(mf.f[k](t, 2.5) - plain.final_state().f[k](t)) <= 1e-6);
            }
        }
    }
    SUBCASE("single mark lattice point is exact") {
        MarkedHyper mh;
        mh.base = HyperParams::experiment();
        mh.mark_lattice = {0.0};
        const MarkedFitResult mf = mmhp_fit(s, mh);
        const FitResult plain = fit(s, mh.base);
        for (std::size_t k = 0; k < 4; ++k) {
            const auto joint = lag_marginal(mf.f[k].joint);
            const auto ref = lag_marginal(plain.final_state().f[k].g);
            CHECK(joint.size() == ref.size());
            for (const auto& [lag, a] : ref) CHECK(std::abs(joint.at(lag) - a) <= 1e-12);
        }
    }
    SUBCASE("grid clip agrees on values") {
        MarkedHyper mh;
        mh.base.snapshot_stride = 1u << 30;
        mh.mark_lattice = {0.0};
        const EventStream short_s = constant_mark_stream(60.0, 4);
        const MarkedFitResult mf = mmhp_fit(short_s, mh);
        const FitResult plain = fit(short_s, mh.base);
        for (std::size_t k = 0; k < 4; ++k) {
            for (double t = 0.0; t <= 3.0; t += 0.05) {
                CHECK(std::abs(mf.f[k](t, 2.5) - plain.final_state().f[k](t)) <= 1e-6);
            }
        }
    }
}

TEST_CASE("marked fit rejects unsupported settings") {
    EventStream s = constant_mark_stream(20.0, 1);
    MarkedHyper mh;
    mh.mode = MarkMode::kSeparable;
    mh.base = HyperParams::experiment();
    CHECK_THROWS_AS(mmhp_fit(s, mh), UnsupportedModel);
    s.marks.clear();
    mh.mode = MarkMode::kJoint;
    CHECK_THROWS_AS(mmhp_fit(s, mh), std::invalid_argument);
}

TEST_CASE("separable marked fit stays nonnegative on its lattices") {
    EventStream s = constant_mark_stream(60.0, 2);
    CounterRng rng(5);
    for (double& v : s.marks) v = rng.exponential(1.0);
    MarkedHyper mh;
    mh.mode = MarkMode::kSeparable;
    mh.base.snapshot_stride = 1u << 30;
    const MarkedFitResult mf = mmhp_fit(s, mh, FitOptions{.parallel = false});
    CHECK(mf.diag.projection_failures == 0);
    for (double m : mf.mu) CHECK(m >= mh.base.mu_min);
    for (const auto& f : mf.f) {
        for (double v : mh.resolved_lattice()) CHECK(f.h.raw(std::span<const double>(&v, 1)) >= -1e-5);
    }
}

TEST_CASE("spatial grid cells") {
    SpatialGrid g{0.0, 0.0, 2.0, 1.0, 2, 2};
    CHECK(g.cell_of(0.1, 0.1) == 0);
    CHECK(g.cell_of(1.5, 0.2) == 1);
    CHECK(g.cell_of(0.5, 0.9) == 2);
    CHECK(g.cell_of(2.0, 1.0) == 3);
    CHECK(g.center(3)[0] == 1.5);
    CHECK(g.center(3)[1] == 0.75);
    CHECK_THROWS_AS(g.cell_of(2.1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(g.cell_of(0.5, -0.01), std::invalid_argument);
    SpatialGrid big{0.0, 0.0, 1.0, 1.0, 21, 20};
    CHECK_THROWS_AS(big.validate(), std::invalid_argument);
}

TEST_CASE("spatial fit rejects locations outside the domain") {
    EventStream s;
    s.p = 1;
    s.location_dim = 2;
    s.horizon = 5.0;
    s.times = {1.0, 2.0};
    s.dims = {0, 0};
    s.locations = {0.5, 0.5, 1.5, 0.5};
    ShpHyper h;
    h.base = HyperParams::experiment();
    CHECK_THROWS_AS(shp_fit(s, SpatialGrid{0.0, 0.0, 1.0, 1.0, 1, 1}, h), std::invalid_argument);
}

TEST_CASE("single-cell spatial fit equals the 1-dim fit") {
    const SpatialModel truth;
    const SpatialGrid one{0.0, 0.0, 1.0, 1.0, 1, 1};
    const EventStream s = shp_simulate(truth, one, 500.0, 12);
    REQUIRE(s.size() > 50);
    for (auto mode : {ProjectionMode::kSquareTransform, ProjectionMode::kGridClip}) {
        ShpHyper h;
        h.base = mode == ProjectionMode::kGridClip ? HyperParams{} : HyperParams::experiment();
        h.base.snapshot_stride = 1u << 30;
        const ShpFitResult sf = shp_fit(s, one, h);
        const FitResult plain = fit(s, h.base);
        CHECK(sf.mu == plain.final_state().mu[0]);
        for (double t = 0.0; t <= 3.0; t += 0.01) {
            const double pt[3] = {t, 0.0, 0.0};
            CHECK(sf.f(std::span<const double>(pt, 3)) == plain.final_state().f[0](t));
        }
    }
}

TEST_CASE("spatial fit cost grows linearly in the cell count") {
    const SpatialModel truth{0.05, GroundTruthFn::exp_decay(0.5, 2.0), 1.0};
    const SpatialGrid region{0.0, 0.0, 4.0, 4.0, 1, 1};
    const EventStream s = shp_simulate(truth, region, 400.0, 6);
    ShpHyper h;
    h.base = HyperParams::experiment();
    h.base.snapshot_stride = 1u << 30;
    h.displacement_step = 0.25;
    h.displacement_radius = 0.5;
    std::vector<double> xs, ys;
    for (std::size_t n : {1, 2, 4, 8}) {
        SpatialGrid cells = region;
        cells.nx = cells.ny = n;
        double best = 1e300;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            const ShpFitResult r = shp_fit(s, cells, h);
            best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
                                      static_cast<double>(r.grid.size()));
        }
        xs.push_back(static_cast<double>(n * n));
        ys.push_back(best);
    }
    // Least-squares line and its R^2.
    const double n = 4.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        sx += xs[k];
        sy += ys[k];
        sxx += xs[k] * xs[k];
        sxy += xs[k] * ys[k];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icept = (sy - slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        ss_res += std::pow(ys[k] - (icept + slope * xs[k]), 2);
        ss_tot += std::pow(ys[k] - sy / n, 2);
    }
    MESSAGE("per-epoch seconds at 1/4/16/64 cells: " << ys[0] << ' ' << ys[1] << ' ' << ys[2] << ' ' << ys[3]);
    CHECK(slope > 0.0);
    CHECK(1.0 - ss_res / ss_tot > 0.9);
}

TEST_CASE("spatial L1 error of the zero estimate is the norm of the truth") {
    const SpatialModel truth;
    // int_0^3 e^{-2t} dt * (int_{-r}^{r} e^{-x^2} dx)^2 with r = 1.
    const double time_part = (1.0 - std::exp(-6.0)) / 2.0;
    const double space_part = std::sqrt(M_PI) * std::erf(1.0);
    CHECK(shp_l1_error(truth, nullptr, 3.0, 1.0, 600, 80) ==
          doctest::Approx(time_part * space_part * space_part).epsilon(1e-3));
}
