#include "npole/process.hpp"

#include "npole/format.hpp"
#include "npole/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

namespace npole {

void EventStream::push_back(double time, int dim) {
    times.push_back(time);
    dims.push_back(dim);
}

void EventStream::push_back(double time, int dim, double mark) {
    push_back(time, dim);
    marks.push_back(mark);
}

std::size_t EventStream::count_until(double t) const {
    return static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
}

std::size_t EventStream::count(int dim) const {
    return static_cast<std::size_t>(std::count(dims.begin(), dims.end(), dim));
}

void EventStream::validate() const {
    if (p < 1) throw std::invalid_argument("event stream needs p >= 1");
    if (dims.size() != times.size()) throw std::invalid_argument("event columns differ in length");
    if (!marks.empty() && marks.size() != times.size()) throw std::invalid_argument("mark column length mismatch");
    if (locations.size() != times.size() * location_dim) {
        throw std::invalid_argument("location column length mismatch");
    }
    for (std::size_t n = 0; n < times.size(); ++n) {
        if (!std::isfinite(times[n]) || times[n] < 0.0 || times[n] > horizon) {
            throw std::invalid_argument("event time outside [0, horizon] at index " + std::to_string(n));
        }
        if (n > 0 && times[n] < times[n - 1]) {
            throw std::invalid_argument("event times decrease at index " + std::to_string(n));
        }
        if (dims[n] < 0 || dims[n] >= p) {
            throw std::invalid_argument("event dimension out of range at index " + std::to_string(n));
        }
    }
}

void EventStream::sort() {
    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (times[a] != times[b]) return times[a] < times[b];
        return dims[a] < dims[b];
    });
    auto permute = [&](auto& column, std::size_t width) {
        if (column.empty()) return;
        auto copy = column;
        for (std::size_t n = 0; n < order.size(); ++n) {
            for (std::size_t d = 0; d < width; ++d) column[n * width + d] = copy[order[n] * width + d];
        }
    };
    permute(times, 1);
    permute(dims, 1);
    permute(marks, 1);
    permute(locations, location_dim);
}

void HawkesModel::validate() const {
    const std::size_t p = dim();
    if (p == 0) throw std::invalid_argument("model needs at least one dimension");
    if (triggers.size() != p * p) throw std::invalid_argument("trigger matrix must be p x p");
    for (double m : mu) {
        if (!(m > 0.0) || !std::isfinite(m)) throw std::invalid_argument("base intensities must be positive");
    }
    if (!(window > 0.0)) throw std::invalid_argument("model window must be positive");
    if (marks.size() > 1) throw std::invalid_argument("at most one mark specification");
    if (!marks.empty() && marks.front().effect.size() != p * p) {
        throw std::invalid_argument("mark effect matrix must be p x p");
    }
}

Eigen::MatrixXd HawkesModel::branching_matrix() const {
    const auto p = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXd g(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) {
            double mass = f(static_cast<std::size_t>(i), static_cast<std::size_t>(j)).integral();
            if (!marks.empty()) {
                // E[h(V)] for V ~ Exp(rate), by midpoint quadrature on [0, 60 / rate].
                const auto& h = marks.front().effect[static_cast<std::size_t>(i) * dim() + static_cast<std::size_t>(j)];
                const double rate = marks.front().mark_rate;
                const double upper = 60.0 / rate;
                constexpr int kSteps = 20000;
                const double dv = upper / kSteps;
                double mean = 0.0;
                for (int k = 0; k < kSteps; ++k) {
                    const double v = (k + 0.5) * dv;
                    mean += h(v) * rate * std::exp(-rate * v) * dv;
                }
                mass *= mean;
            }
            g(i, j) = mass;
        }
    }
    return g;
}

double HawkesModel::spectral_radius() const {
    const Eigen::EigenSolver<Eigen::MatrixXd> solver(branching_matrix(), false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

std::vector<double> HawkesModel::stationary_rates() const {
    const auto p = static_cast<Eigen::Index>(dim());
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(p, p) - branching_matrix();
    const Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(mu.data(), p);
    const Eigen::VectorXd rates = a.partialPivLu().solve(m);
    return {rates.data(), rates.data() + p};
}

HawkesModel HawkesModel::benchmark5() {
    using G = GroundTruthFn;
    HawkesModel m;
    m.mu.assign(5, 0.05);
    m.triggers.assign(25, G::zero());
    auto set = [&](int i, int j, G f) { m.triggers[static_cast<std::size_t>(i * 5 + j)] = std::move(f); };
    set(0, 0, G::exp_decay(1.0, 2.5));
    set(0, 3, G::gauss_bump(1.0, 1.0, 10.0));
    set(1, 0, G::pow_exp(1.0, 2.0));
    set(1, 1, G::cosine_damped());
    set(1, 2, G::exp_decay(1.0, 5.0));
    set(2, 1, G::exp_decay(2.0, 3.0));
    set(3, 3, G::mixture({G::gauss_bump(0.6, 0.0, 3.0), G::gauss_bump(0.4, 1.0, 3.0)}));
    set(3, 4, G::exp_decay(1.0, 4.0));
    set(4, 2, G::t_exp());
    set(4, 4, G::exp_decay(1.0, 3.0));
    return m;
}

HawkesModel HawkesModel::poisson(std::vector<double> mu) {
    HawkesModel m;
    m.triggers.assign(mu.size() * mu.size(), GroundTruthFn::zero());
    m.mu = std::move(mu);
    return m;
}

namespace {

double mark_factor(const HawkesModel& model, const EventStream& stream, std::size_t i, std::size_t n) {
    if (model.marks.empty() || !stream.has_marks()) return 1.0;
    const auto j = static_cast<std::size_t>(stream.dims[n]);
    return model.marks.front().effect[i * model.dim() + j](stream.marks[n]);
}

// Sums f_{i,j}(t - tau) over events n < end with t - tau < window.
double excitation(const HawkesModel& model, const EventStream& stream, std::size_t i, double t,
                  std::size_t end, double window) {
    double acc = 0.0;
    for (std::size_t n = end; n-- > 0;) {
        const double lag = t - stream.times[n];
        if (!(lag < window)) break;
        const auto j = static_cast<std::size_t>(stream.dims[n]);
        const auto& f = model.f(i, j);
        if (f.is_zero()) continue;
        acc += f(lag) * mark_factor(model, stream, i, n);
    }
    return acc;
}

}  // namespace

double intensity(const HawkesModel& model, const EventStream& stream, std::size_t i, double t) {
    return intensity_truncated(model, stream, i, t, std::numeric_limits<double>::infinity());
}

double intensity_truncated(const HawkesModel& model, const EventStream& stream, std::size_t i, double t,
                           double window) {
    if (!(window > 0.0)) throw std::invalid_argument("truncation window must be positive");
    return model.mu[i] + excitation(model, stream, i, t, stream.count_until(t), window);
}

double intensity_before(const HawkesModel& model, const EventStream& stream, std::size_t i, double t,
                        double window) {
    const auto end = static_cast<std::size_t>(
        std::lower_bound(stream.times.begin(), stream.times.end(), t) - stream.times.begin());
    return model.mu[i] + excitation(model, stream, i, t, end, window);
}

EventStream simulate(const HawkesModel& model, double horizon, std::uint64_t seed, SimulationStats* stats) {
    model.validate();
    if (!(horizon > 0.0)) throw std::invalid_argument("simulation horizon must be positive");
    const double radius = model.spectral_radius();
    if (!(radius < 1.0)) {
        throw std::domain_error("branching matrix spectral radius " + std::to_string(radius) + " >= 1");
    }
    const std::size_t p = model.dim();
    const bool marked = !model.marks.empty();

    std::vector<RunningSup> envelope;
    std::vector<double> mark_sup(p * p, 1.0);
    double support = 0.0;
    envelope.reserve(p * p);
    for (std::size_t k = 0; k < p * p; ++k) {
        envelope.emplace_back(model.triggers[k]);
        support = std::max(support, envelope.back().support());
        if (marked) {
            const auto& h = model.marks.front().effect[k];
            const double upper = 80.0 / model.marks.front().mark_rate;
            double sup = 0.0;
            for (int s = 0; s <= 40000; ++s) sup = std::max(sup, h(upper * s / 40000.0));
            mark_sup[k] = 1.05 * sup + 1e-12;
        }
    }

    const auto rates = model.stationary_rates();
    const double predicted = std::accumulate(rates.begin(), rates.end(), 0.0) * horizon;
    const auto limit = static_cast<std::size_t>(100.0 * std::max(predicted, 1.0));

    CounterRng rng(seed);
    EventStream out;
    out.p = static_cast<int>(p);
    out.horizon = horizon;
    SimulationStats local;
    std::size_t first = 0;
    double t = 0.0;
    std::vector<double> lambda(p);
    while (true) {
        while (first < out.size() && t - out.times[first] >= support) ++first;
        double bound = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            double b = model.mu[i];
            for (std::size_t n = first; n < out.size(); ++n) {
                const std::size_t k = i * p + static_cast<std::size_t>(out.dims[n]);
                b += envelope[k](t - out.times[n]) * mark_sup[k];
            }
            bound += b;
        }
        bound *= 1.1;
        t += rng.exponential(bound);
        if (t > horizon) break;
        ++local.candidates;
        double total = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            double l = model.mu[i];
            for (std::size_t n = first; n < out.size(); ++n) {
                const double lag = t - out.times[n];
                if (lag >= support) continue;
                const auto& f = model.f(i, static_cast<std::size_t>(out.dims[n]));
                if (f.is_zero()) continue;
                l += f(lag) * mark_factor(model, out, i, n);
            }
            lambda[i] = l;
            total += l;
        }
        if (total > bound) ++local.bound_violations;
        const double u = rng.uniform() * bound;
        if (u < total) {
            std::size_t dim = 0;
            double acc = lambda[0];
            while (acc <= u && dim + 1 < p) acc += lambda[++dim];
            if (marked) {
                out.push_back(t, static_cast<int>(dim), rng.exponential(model.marks.front().mark_rate));
            } else {
                out.push_back(t, static_cast<int>(dim));
            }
            ++local.accepted;
            if (out.size() > limit) {
                throw std::domain_error("simulation exceeded 100x the predicted event count");
            }
        }
    }
    if (stats) *stats = local;
    return out;
}

double exact_nll_exponential(const HawkesModel& model, const EventStream& stream, std::size_t i) {
    const std::size_t p = model.dim();
    std::vector<double> alpha(p, 0.0);
    std::vector<double> beta(p, 1.0);
    for (std::size_t j = 0; j < p; ++j) {
        const auto& f = model.f(i, j);
        if (f.kind() == GroundTruthFn::Kind::kZero) continue;
        if (f.kind() != GroundTruthFn::Kind::kExpDecay) {
            throw UnsupportedModel("exact likelihood needs exponential triggers in row " + std::to_string(i));
        }
        alpha[j] = f.amplitude();
        beta[j] = f.rate();
    }
    if (!model.marks.empty()) throw UnsupportedModel("exact likelihood does not support marks");
    const double horizon = stream.horizon;
    double compensator = model.mu[i] * horizon;
    double log_sum = 0.0;
    std::vector<double> recursion(p, 0.0);
    double last = 0.0;
    std::size_t n = 0;
    const std::size_t total = stream.size();
    while (n < total && stream.times[n] <= horizon) {
        const double tn = stream.times[n];
        for (std::size_t j = 0; j < p; ++j) recursion[j] *= std::exp(-beta[j] * (tn - last));
        last = tn;
        std::size_t group_end = n;
        while (group_end < total && stream.times[group_end] == tn) ++group_end;
        for (std::size_t m = n; m < group_end; ++m) {
            if (static_cast<std::size_t>(stream.dims[m]) != i) continue;
            double lambda = model.mu[i];
            for (std::size_t j = 0; j < p; ++j) lambda += alpha[j] * recursion[j];
            log_sum += std::log(lambda);
        }
        for (std::size_t m = n; m < group_end; ++m) {
            const auto j = static_cast<std::size_t>(stream.dims[m]);
            recursion[j] += 1.0;
            compensator += alpha[j] / beta[j] * -std::expm1(-beta[j] * (horizon - tn));
        }
        n = group_end;
    }
    return compensator - log_sum;
}

EventStream read_events(std::istream& in, const ReadOptions& options) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    const auto header = split(trim(line), ',');
    if (header.size() < 2 || trim(header[0]) != "time" || trim(header[1]) != "dim") {
        throw EventFormatError("header must start with 'time,dim'", line_no);
    }
    bool has_mark = false;
    std::size_t loc_dim = 0;
    for (std::size_t c = 2; c < header.size(); ++c) {
        const auto name = trim(header[c]);
        if (c == 2 && name == "mark") {
            has_mark = true;
        } else if (name == "x" + std::to_string(loc_dim + 1)) {
            ++loc_dim;
        } else {
            throw EventFormatError("unexpected column '" + std::string(name) + "'", line_no);
        }
    }
    EventStream s;
    s.location_dim = loc_dim;
    const std::size_t columns = header.size();
    int max_dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto cells = split(body, ',');
        if (cells.size() != columns) {
            throw EventFormatError("expected " + std::to_string(columns) + " columns", line_no);
        }
        double time = 0.0;
        double dim_value = 0.0;
        try {
            time = parse_double(cells[0]);
            dim_value = parse_double(cells[1]);
        } catch (const std::invalid_argument& e) {
            throw EventFormatError(e.what(), line_no);
        }
        if (!std::isfinite(time) || time < 0.0) throw EventFormatError("time must be finite and >= 0", line_no);
        if (dim_value != std::floor(dim_value) || dim_value < 1.0) {
            throw EventFormatError("dim must be a positive integer", line_no);
        }
        const int dim = static_cast<int>(dim_value);
        if (options.p > 0 && dim > options.p) throw EventFormatError("dim exceeds p", line_no);
        if (!options.sort && !s.times.empty() && time < s.times.back()) {
            throw EventFormatError("event times are not sorted (use --sort)", line_no);
        }
        max_dim = std::max(max_dim, dim);
        s.push_back(time, dim - 1);
        std::size_t c = 2;
        try {
            if (has_mark) s.marks.push_back(parse_double(cells[c++]));
            for (std::size_t d = 0; d < loc_dim; ++d) s.locations.push_back(parse_double(cells[c++]));
        } catch (const std::invalid_argument& e) {
            throw EventFormatError(e.what(), line_no);
        }
    }
    if (options.sort) s.sort();
    s.p = options.p > 0 ? options.p : std::max(max_dim, 1);
    const double last = s.empty() ? 0.0 : s.times.back();
    s.horizon = options.horizon >= 0.0 ? options.horizon : last;
    if (s.horizon < last) throw EventFormatError("horizon precedes the last event", line_no);
    return s;
}

EventStream read_events_file(const std::string& path, const ReadOptions& options) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open event file: " + path);
    return read_events(in, options);
}

void write_events(std::ostream& out, const EventStream& stream) {
    out << "time,dim";
    if (stream.has_marks()) out << ",mark";
    for (std::size_t d = 0; d < stream.location_dim; ++d) out << ",x" << (d + 1);
    out << "\n";
    for (std::size_t n = 0; n < stream.size(); ++n) {
        out << format_double(stream.times[n]) << "," << (stream.dims[n] + 1);
        if (stream.has_marks()) out << "," << format_double(stream.marks[n]);
        for (double x : stream.location(n)) out << "," << format_double(x);
        out << "\n";
    }
}

}  // namespace npole
