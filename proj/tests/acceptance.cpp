// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria (0 when all pass).
#include "npole/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>

using namespace npole;

namespace {

constexpr std::uint64_t kSeed = 7;

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

Verdict table1_criterion() {
    const std::vector<double> deltas{0.05, 0.1, 0.5, 1.0};
    const Table1 t = table1_experiment(HawkesModel::benchmark5(), 1e4, 10, kSeed, deltas, {1e-8});
    const Table1Check c = check_table1(t);
    std::string row;
    for (std::size_t d = 0; d < deltas.size(); ++d) row += (d ? " " : "") + num(t.at(d, 0));
    return {c.passed(), "L1 at zeta=1e-8 over delta {0.05,0.1,0.5,1}: " + row + "; band " +
                            (c.in_band ? "ok" : "missed") + ", ratio " + (c.ratio ? "ok" : "missed") + ", monotone " +
                            (c.monotone ? "ok" : "missed")};
}

Verdict prop1_criterion() {
    const auto t0 = std::chrono::steady_clock::now();
    const Prop1Summary s = prop1_experiment(50, 200.0, kSeed);
    const double secs = seconds_since(t0);
    return {s.violations == 0 && secs < 120.0, std::to_string(s.instances.size()) + " instances, " +
                                                   std::to_string(s.violations) + " violations, max error/bound " +
                                                   num(s.max_ratio) + ", " + num(secs) + " s"};
}

Verdict mismatch_criterion() {
    const MismatchSummary s = mismatch_experiment(10, 1e4, kSeed);
    return {s.wins >= 9, "kernel estimate beats the exponential fit on f_{1,4} in " + std::to_string(s.wins) + "/10 trials"};
}

Verdict regret_criterion() {
    const RegretSummary s = regret_experiment(5, 1e4, kSeed);
    std::string per;
    for (double r : s.final_over_max) per += (per.empty() ? "" : " ") + num(r);
    return {s.worst < 2.0, "final/max of regret/(1+log M): " + per};
}

Verdict property_criterion(const std::string& unit_tests) {
    static const char* kSuites[] = {
        "gramian is PSD on random point sets",
        "functional gradient matches finite differences",
        "square-transform gradient matches finite differences",
        "alpha gradient matches finite differences",
        "joint marked gradient matches finite differences",
        "grid-clip projection",
        "dictionary projection agrees with the expansion projection",
        "gradient norm bound with a full window",
        "fit invariants",
        "each epoch of a fit is one gradient step",
        "Poisson reduction: counts and KS test",
        "branching rate of a one-dimensional exponential model",
        "branching rate of a moderately excited 5-dim model",
        "branching rate of the benchmark model over a long run",
        "grid invariants on fuzzed streams",
        "polynomial SDP projection",
    };
    std::string filter;
    for (const char* s : kSuites) filter += (filter.empty() ? "" : ",") + std::string(s);
    const std::string cmd = "\"" + unit_tests + "\" --minimal --test-case=\"" + filter + "\"";
    const int rc = std::system(cmd.c_str());
    return {rc == 0, std::to_string(std::size(kSuites)) + " property suites, exit status " + std::to_string(rc)};
}

Verdict degenerate_criterion() {
    // Marked fit with constant marks and a very wide mark kernel.
    const HawkesModel truth = HawkesModel::benchmark5();
    EventStream s = simulate(truth, 1000.0, kSeed);
    s.marks.assign(s.size(), 3.0);
    MarkedHyper mh;
    mh.base = HyperParams::experiment();
    mh.base.snapshot_stride = 1u << 30;
    mh.mark_kernel = Kernel::gaussian(1e4);
    const MarkedFitResult mf = mmhp_fit(s, mh);
    const FitResult plain = fit(s, mh.base);
    double coef = 0.0;
    for (std::size_t k = 0; k < plain.final_state().f.size(); ++k) {
        std::map<double, double> a, b;
        const auto& j = mf.f[k].joint;
        for (std::size_t c = 0; c < j.size(); ++c) a[j.center(c)[0]] += j.coefficient(c);
        const auto& g = plain.final_state().f[k].g;
        for (std::size_t c = 0; c < g.size(); ++c) b[g.center(c)[0]] += g.coefficient(c);
        std::set<double> lags;
        for (const auto& [l, v] : a) lags.insert(l);
        for (const auto& [l, v] : b) lags.insert(l);
        for (double l : lags) coef = std::max(coef, std::abs(a[l] - b[l]));
    }

    // Single-cell spatial fit against the 1-dim fit.
    const SpatialGrid one{0.0, 0.0, 1.0, 1.0, 1, 1};
    const EventStream sp = shp_simulate(SpatialModel{}, one, 1000.0, kSeed);
    ShpHyper sh;
    sh.base = HyperParams::experiment();
    sh.base.snapshot_stride = 1u << 30;
    const ShpFitResult sf = shp_fit(sp, one, sh);
    const FitResult flat = fit(sp, sh.base);
    double spatial = std::abs(sf.mu - flat.final_state().mu[0]);
    for (double t = 0.0; t <= 3.0; t += 0.01) {
        const double pt[3] = {t, 0.0, 0.0};
        spatial = std::max(spatial, std::abs(sf.f(std::span<const double>(pt, 3)) - flat.final_state().f[0](t)));
    }
    return {coef <= 1e-6 && spatial == 0.0,
            "marked max coefficient difference " + num(coef) + ", single-cell max difference " + num(spatial)};
}

Verdict performance_criterion() {
    std::vector<double> ps, per_epoch;
    for (std::size_t p : {5, 10, 20}) {
        HawkesModel m;
        m.mu.assign(p, 0.2);
        for (std::size_t k = 0; k < p * p; ++k) m.triggers.push_back(GroundTruthFn::exp_decay(0.3 / static_cast<double>(p), 2.0));
        const EventStream s = simulate(m, 300.0, kSeed + p);
        HyperParams h = HyperParams::experiment();
        h.snapshot_stride = 1u << 30;
        double best = 1e300;
        for (int rep = 0; rep < 2; ++rep) {
            const FitResult r = fit(s, h, FitOptions{.parallel = false});
            best = std::min(best, r.diag.seconds / static_cast<double>(r.grid.size()));
        }
        ps.push_back(static_cast<double>(p));
        per_epoch.push_back(best);
    }
    // Least squares y = a + b p^2.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double x = ps[k] * ps[k];
        sx += x;
        sy += per_epoch[k];
        sxx += x * x;
        sxy += x * per_epoch[k];
    }
    const double b = (3.0 * sxy - sx * sy) / (3.0 * sxx - sx * sx);
    const double a = (sy - b * sx) / 3.0;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        ss_res += std::pow(per_epoch[k] - (a + b * ps[k] * ps[k]), 2);
        ss_tot += std::pow(per_epoch[k] - sy / 3.0, 2);
    }
    const double r2 = 1.0 - ss_res / ss_tot;

    const EventStream s = simulate(HawkesModel::benchmark5(), 1e4, kSeed);
    const auto t0 = std::chrono::steady_clock::now();
    fit(s, HyperParams::experiment());
    const double full = seconds_since(t0);
    return {b > 0.0 && r2 > 0.9 && full < 300.0,
            "per-epoch us at p=5/10/20: " + num(per_epoch[0] * 1e6) + " " + num(per_epoch[1] * 1e6) + " " +
                num(per_epoch[2] * 1e6) + ", R^2 " + num(r2) + "; T=1e4 5-dim fit " + num(full) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string unit_tests = NPOLE_UNIT_TESTS;
    std::vector<int> only;
    app.add_option("--unit-tests", unit_tests, "unit test binary used for the property suites");
    app.add_option("--only", only, "run only these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    using Criterion = std::function<Verdict()>;
    const std::vector<std::pair<std::string, Criterion>> criteria{
        {"table1 desk reproduction", table1_criterion},
        {"discretization bound", prop1_criterion},
        {"mismatch ordering", mismatch_criterion},
        {"regret flatness", regret_criterion},
        {"property suites", [&] { return property_criterion(unit_tests); }},
        {"degenerate equivalence", degenerate_criterion},
        {"performance envelope", performance_criterion},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k + 1);
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[k].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        if (!v.pass) ++failed;
        std::printf("criterion %d %s: %s (%s; %.0f s)\n", id, criteria[k].first.c_str(), v.pass ? "PASS" : "FAIL",
                    v.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failed;
}
