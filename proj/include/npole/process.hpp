#pragma once

#include "npole/ground_truth.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace npole {

/// Raised when an operation needs a model family it does not support.
class UnsupportedModel : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Raised by the event-file parser; carries the 1-based line number.
class EventFormatError : public std::invalid_argument {
public:
    EventFormatError(const std::string& what, std::size_t line)
        : std::invalid_argument(what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Time-ordered multivariate arrivals stored column-wise. Dimensions are
/// 0-based in memory and 1-based on disk.
struct EventStream {
    std::vector<double> times;
    std::vector<int> dims;
    std::vector<double> marks;       // empty or one per event
    std::vector<double> locations;   // empty or location_dim per event
    std::size_t location_dim = 0;
    double horizon = 0.0;
    int p = 1;

    std::size_t size() const { return times.size(); }
    bool empty() const { return times.empty(); }
    bool has_marks() const { return !marks.empty(); }
    bool has_locations() const { return location_dim > 0; }
    std::span<const double> location(std::size_t n) const {
        return std::span<const double>(locations).subspan(n * location_dim, location_dim);
    }

    void push_back(double time, int dim);
    void push_back(double time, int dim, double mark);

    /// Events with time <= t.
    std::size_t count_until(double t) const;
    std::size_t count(int dim) const;

    /// Throws std::invalid_argument if times decrease, a dimension is out of
    /// range, a time lies outside [0, horizon], or column sizes disagree.
    void validate() const;

    /// Stable sort by (time, dim); ties keep insertion order.
    void sort();
};

/// Optional mark model: marks are i.i.d. Exponential(mark_rate) and an
/// event of dimension j with mark v scales f_{i,j} by effect[i * p + j](v).
struct MarkSpec {
    double mark_rate = 1.0;
    std::vector<GroundTruthFn> effect;
};

struct HawkesModel {
    std::vector<double> mu;
    std::vector<GroundTruthFn> triggers;  // row-major, triggers[i * p + j] = f_{i,j}
    double window = std::numeric_limits<double>::infinity();
    std::vector<MarkSpec> marks;           // zero or one entry

    std::size_t dim() const { return mu.size(); }
    const GroundTruthFn& f(std::size_t i, std::size_t j) const { return triggers[i * dim() + j]; }

    void validate() const;

    /// [integral of f_{i,j} over [0, inf)].
    Eigen::MatrixXd branching_matrix() const;
    double spectral_radius() const;
    /// (I - G)^{-1} mu, the stationary mean rates.
    std::vector<double> stationary_rates() const;

    /// The 5-dimensional benchmark with mu_i = 0.05 and mixed trigger shapes.
    static HawkesModel benchmark5();
    static HawkesModel poisson(std::vector<double> mu);
};

/// lambda_i(t) = mu_i + sum over events tau <= t of f_{i,j}(t - tau).
/// An event exactly at t contributes f(0+).
double intensity(const HawkesModel& model, const EventStream& stream, std::size_t i, double t);

/// Same as intensity() but only events with t - tau < window contribute.
double intensity_truncated(const HawkesModel& model, const EventStream& stream, std::size_t i,
                           double t, double window);

/// Predictable (left-limit) intensity: only events strictly before t.
double intensity_before(const HawkesModel& model, const EventStream& stream, std::size_t i, double t,
                        double window = std::numeric_limits<double>::infinity());

struct SimulationStats {
    std::size_t candidates = 0;
    std::size_t accepted = 0;
    std::size_t bound_violations = 0;
};

/// Exact simulation on [0, horizon] by thinning with a non-increasing
/// upper envelope refreshed after every candidate. Deterministic in seed.
/// Throws std::domain_error if the branching matrix has spectral radius
/// >= 1 or the event count exceeds 100x the stationary prediction.
EventStream simulate(const HawkesModel& model, double horizon, std::uint64_t seed,
                     SimulationStats* stats = nullptr);

/// Exact negative log-likelihood of dimension i over [0, horizon] for a model
/// whose row i is built from ExpDecay (or Zero) triggers.
double exact_nll_exponential(const HawkesModel& model, const EventStream& stream, std::size_t i);

struct ReadOptions {
    bool sort = false;
    double horizon = -1.0;  // < 0: last event time
    int p = 0;              // 0: max dimension in file
};

EventStream read_events(std::istream& in, const ReadOptions& options = {});
EventStream read_events_file(const std::string& path, const ReadOptions& options = {});
void write_events(std::ostream& out, const EventStream& stream);

}  // namespace npole
