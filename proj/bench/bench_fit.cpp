// Times the serial reference, the serial dictionary fit and the row-parallel
// dictionary fit on one simulated benchmark stream, and checks they agree.
#include "npole/metrics.hpp"
#include "npole/npole.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace {

double max_diff(const npole::Snapshot& a, const npole::Snapshot& b, double z) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.mu.size(); ++i) d = std::max(d, std::abs(a.mu[i] - b.mu[i]));
    for (std::size_t k = 0; k < a.f.size(); ++k) {
        for (double t = 0.0; t <= z + 1e-12; t += 0.01) d = std::max(d, std::abs(a.f[k](t) - b.f[k](t)));
    }
    return d;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fit benchmark"};
    double horizon = 100.0;
    std::uint64_t seed = 7;
    int threads = 0;
    bool skip_reference = false;
    app.add_option("-T,--horizon", horizon);
    app.add_option("--seed", seed);
    app.add_option("--threads", threads);
    app.add_flag("--skip-reference", skip_reference);
    CLI11_PARSE(app, argc, argv);

    const auto model = npole::HawkesModel::benchmark5();
    const auto stream = npole::simulate(model, horizon, seed);
    npole::HyperParams h;  // grid-clip, the mode both implementations share
    h.snapshot_stride = 1u << 30;
    std::printf("events %zu, horizon %g, threads %d\n", stream.size(), horizon,
                threads > 0 ? threads : omp_get_max_threads());

    auto timed = [](auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        auto r = fn();
        return std::make_pair(std::move(r), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    };
    npole::FitOptions serial;
    serial.parallel = false;
    npole::FitOptions parallel;
    parallel.threads = threads;

    const auto [fs, ts] = timed([&] { return npole::fit(stream, h, serial); });
    const auto [fp, tp] = timed([&] { return npole::fit(stream, h, parallel); });
    std::printf("%-18s %9.3f s\n", "fit serial", ts);
    std::printf("%-18s %9.3f s  speedup %.2fx\n", "fit parallel", tp, ts / tp);
    const double dp = max_diff(fs.final_state(), fp.final_state(), h.z);
    std::printf("serial vs parallel max difference %.3g\n", dp);
    bool ok = dp == 0.0;
    if (!skip_reference) {
        const auto [fr, tr] = timed([&] { return npole::fit_reference(stream, h, serial); });
        const double dr = max_diff(fs.final_state(), fr.final_state(), h.z);
        std::printf("%-18s %9.3f s  (%.1fx slower than fit serial)\n", "fit_reference", tr, tr / ts);
        std::printf("fit vs fit_reference max difference %.3g\n", dr);
        ok = ok && dr < 1e-6;
    }
    std::printf("%s\n", ok ? "agreement OK" : "agreement FAILED");
    return ok ? 0 : 1;
}
