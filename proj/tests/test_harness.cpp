#include "npole/harness.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace npole;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("npole_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

ExperimentConfig poisson_fit(const fs::path& out) {
    ExperimentConfig c;
    c.kind = ExperimentKind::kFit;
    c.model = "poisson";
    c.poisson_rate = 1.0;
    c.poisson_dims = 2;
    c.horizon = 40.0;
    c.trials = 1;
    c.output = out.string();
    return c;
}

}  // namespace

TEST_CASE("config round trip through JSON") {
    ExperimentConfig c;
    c.kind = ExperimentKind::kSpatial;
    c.model = "poisson";
    c.poisson_rate = 0.25;
    c.hyper = preset_hyper("sweep", 0.1, 1e-4);
    c.preset = "sweep";
    c.hyper.budget = 200;
    c.table1_deltas = {0.05, 1.0};
    c.spatial_cells = 3;
    c.stability_shift = 2e-6;
    const auto j = config_to_json(c);
    const ExperimentConfig back = config_from_json(j);
    CHECK(config_to_json(back) == j);
    CHECK(back.kind == ExperimentKind::kSpatial);
    CHECK(back.hyper.delta == 0.1);
    CHECK(back.hyper.zeta == 1e-4);
    CHECK(back.hyper.budget == 200);
    CHECK(back.hyper.kernel == c.hyper.kernel);
    CHECK(back.hyper.projection == ProjectionMode::kSquareTransform);
}

TEST_CASE("config errors") {
    auto j = config_to_json(ExperimentConfig{});
    SUBCASE("unknown key") {
        j["run"]["horizn"] = 5.0;
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SUBCASE("ill-typed value") {
        j["run"]["horizon"] = "long";
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SUBCASE("unknown kind") {
        j["kind"] = "train";
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SUBCASE("missing event file") {
        ExperimentConfig c;
        c.model = "from-file";
        c.events = "/nonexistent/events.csv";
        CHECK_THROWS_AS(validate_config(c), ConfigError);
    }
    SUBCASE("bad hyperparameters") {
        ExperimentConfig c;
        c.hyper.delta = -1.0;
        CHECK_THROWS_AS(validate_config(c), ConfigError);
    }
    SUBCASE("too many cells") {
        ExperimentConfig c;
        c.spatial_cells = 21;
        CHECK_THROWS_AS(validate_config(c), ConfigError);
    }
}

TEST_CASE("scale presets") {
    ExperimentConfig c;
    c.apply_scale("desk");
    CHECK(c.horizon == 1e4);
    CHECK(c.trials == 10);
    c.apply_scale("paper");
    CHECK(c.horizon == 1e5);
    CHECK(c.trials == 100);
}

TEST_CASE("hyperparameter presets") {
    CHECK(preset_hyper("experiment").projection == ProjectionMode::kSquareTransform);
    const HyperParams s = preset_hyper("sweep", 0.5, 1e-2);
    CHECK(s.delta == 0.5);
    CHECK(s.zeta == 1e-2);
    CHECK(preset_hyper("theorem").step_rule == StepRule::kTheorem);
    CHECK_THROWS(preset_hyper("fastest"));
}

TEST_CASE("thread override from the environment") {
    ::setenv("HAWKES_NPOLE_THREADS", "3", 1);
    CHECK(resolve_threads(8) == 3);
    ::setenv("HAWKES_NPOLE_THREADS", "zero", 1);
    CHECK(resolve_threads(8) == 8);
    ::unsetenv("HAWKES_NPOLE_THREADS");
    CHECK(resolve_threads(0) == 0);
}

TEST_CASE("fit run is reproducible and writes its artifacts") {
    const fs::path dir = scratch("fit");
    const ExperimentConfig c = poisson_fit(dir);
    const RunOutcome a = run(c);
    CHECK(a.exit_code == 0);
    const std::string first = slurp(dir / "report.json");
    const RunOutcome b = run(c);
    CHECK(b.exit_code == 0);
    CHECK(slurp(dir / "report.json") == first);
    for (const char* f : {"report.json", "manifest.json", "summary.json", "loss.csv", "functions/f_1_2.csv",
                          "estimate/mu.csv", "estimate/f_2_2.csv", "estimate/estimate.json"}) {
        CHECK_MESSAGE(fs::exists(dir / f), f);
    }
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["exit_code"] == 0);
    CHECK(manifest["config_fingerprint"] == fingerprint(config_to_json(c).dump()));
    CHECK(manifest.contains("wall_clock_seconds"));
    CHECK_FALSE(nlohmann::json::parse(first).contains("wall_clock_seconds"));

    const Snapshot loaded = load_fit_artifacts((dir / "estimate").string());
    CHECK(loaded.mu.size() == 2);
    fs::remove_all(dir);
}

TEST_CASE("fit artifacts round trip") {
    for (bool squared : {false, true}) {
        Snapshot s;
        s.epoch = 42;
        s.mu = {0.25, 0.5};
        for (int k = 0; k < 4; ++k) {
            TriggerEstimate e{KernelExpansion(Kernel::gaussian(0.2), 1, KernelExpansion::kUnbounded, 3.0), squared};
            e.g.add(0.1 * (k + 1), 0.3 + k);
            e.g.add(1.7, -0.01 * k);
            s.f.push_back(e);
        }
        const fs::path dir = scratch("artifacts");
        write_fit_artifacts(dir.string(), s, 3.0);
        const Snapshot back = load_fit_artifacts(dir.string());
        CHECK(back.epoch == 42);
        CHECK(back.mu == s.mu);
        REQUIRE(back.f.size() == 4);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(back.f[k].squared == squared);
            CHECK(back.f[k].g.coefficients() == s.f[k].g.coefficients());
            CHECK(back.f[k](0.35) == s.f[k](0.35));
        }
        std::ostringstream dump;
        write_function_dump(dump, s, 3.0, 0.5);
        std::istringstream lines(dump.str());
        std::string line;
        std::getline(lines, line);
        CHECK(line == "i,j,t,value");
        std::size_t rows = 0;
        while (std::getline(lines, line)) ++rows;
        CHECK(rows == 4 * 7);

        s.f[1].squared = !squared;
        CHECK_THROWS_AS(write_fit_artifacts(dir.string(), s, 3.0), std::invalid_argument);
        fs::remove_all(dir);
    }
}

TEST_CASE("simulate check fails honestly on the benchmark rate") {
    const fs::path dir = scratch("simulate");
    ExperimentConfig c;
    c.kind = ExperimentKind::kSimulate;
    c.horizon = 500.0;
    c.check = true;
    c.output = dir.string();
    const RunOutcome r = run(c);
    CHECK(fs::exists(dir / "events.csv"));
    const EventStream s = read_events_file((dir / "events.csv").string(), ReadOptions{.horizon = 500.0});
    CHECK(s.p == 5);
    // The reconstructed benchmark runs near 1.1 events per unit time per dimension, not 0.4.
    CHECK(r.exit_code == 3);
    c.check = false;
    CHECK(run(c).exit_code == 0);
    fs::remove_all(dir);
}

TEST_CASE("exponential baseline through the fit runner") {
    const fs::path dir = scratch("exp");
    ExperimentConfig c = poisson_fit(dir);
    c.fit_model = "exp";
    CHECK(run(c).exit_code == 0);
    CHECK(fs::exists(dir / "exp_model.csv"));
    fs::remove_all(dir);
}

TEST_CASE("ingest summary") {
    const EventStream s = read_events_file(std::string(NPOLE_TEST_DATA) + "/three_events.csv");
    const auto lines = ingest_summary(s);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "p=2 N=3 T=2.5 marks=yes");
    CHECK(lines[1].rfind("dim 1: N=2", 0) == 0);
    const EventStream e = read_events_file(std::string(NPOLE_TEST_DATA) + "/empty.csv");
    CHECK(ingest_summary(e)[0].rfind("p=", 0) == 0);
    CHECK(e.size() == 0);
}
