#include "npole/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace npole {

Dictionary::Dictionary(Config config) : config_(std::move(config)) {
    const double z = config_.z;
    const double s = config_.snap_step;
    if (!(z > 0.0) || !(s > 0.0) || s > z) throw std::invalid_argument("dictionary needs 0 < snap_step <= z");
    config_.time_kernel.validate();
    const auto snaps = static_cast<std::size_t>(std::floor(z / s + 1e-9)) + 1;
    std::vector<double> points;
    for (std::size_t k = 0; k < snaps; ++k) points.push_back(static_cast<double>(k) * s);
    std::vector<double> clip;
    if (config_.clip_points > 0) clip = clip_grid(z, config_.clip_points);
    points.insert(points.end(), clip.begin(), clip.end());
    std::sort(points.begin(), points.end());
    const double tol = 1e-9 * s;
    for (double t : points) {
        if (lags_.empty() || t - lags_.back() > tol) lags_.push_back(t);
    }
    auto locate = [&](double t) {
        const auto it = std::lower_bound(lags_.begin(), lags_.end(), t - tol);
        return static_cast<std::size_t>(it - lags_.begin());
    };
    snap_to_lag_.resize(snaps);
    for (std::size_t k = 0; k < snaps; ++k) snap_to_lag_[k] = locate(static_cast<double>(k) * s);

    const auto nl = static_cast<Eigen::Index>(lags_.size());
    kt_.resize(nl, nl);
    for (Eigen::Index r = 0; r < nl; ++r) {
        for (Eigen::Index c = 0; c < nl; ++c) kt_(r, c) = config_.time_kernel(lags_[static_cast<std::size_t>(r)], lags_[static_cast<std::size_t>(c)]);
    }

    if (config_.aux_dim == 0) {
        if (!config_.aux_points.empty()) throw std::invalid_argument("aux points given without aux_dim");
        aux_count_ = 1;
        ka_ = Eigen::MatrixXd::Ones(1, 1);
    } else {
        if (config_.aux_points.empty() || config_.aux_points.size() % config_.aux_dim != 0) {
            throw std::invalid_argument("aux lattice is empty or ragged");
        }
        config_.aux_kernel.validate();
        aux_count_ = config_.aux_points.size() / config_.aux_dim;
        ka_ = gramian(config_.aux_kernel, config_.aux_points, config_.aux_dim);
    }
    stencil_.resize(aux_count_);
    for (std::size_t q = 0; q < aux_count_; ++q) {
        for (std::size_t r = 0; r < aux_count_; ++r) {
            const double v = ka(q, r);
            if (std::abs(v) > 1e-16) stencil_[q].emplace_back(r, v);
        }
    }

    std::vector<std::size_t> constrained_lags;
    if (config_.constrain_all_lags || clip.empty()) {
        for (std::size_t l = 0; l < lags_.size(); ++l) constrained_lags.push_back(l);
    } else {
        for (double t : clip) constrained_lags.push_back(locate(t));
    }
    for (std::size_t q = 0; q < aux_count_; ++q) {
        for (std::size_t l : constrained_lags) constraints_.push_back(index(l, q));
    }
}

std::span<const double> Dictionary::aux(std::size_t q) const {
    return std::span<const double>(config_.aux_points).subspan(q * config_.aux_dim, config_.aux_dim);
}

std::size_t Dictionary::snap(double lag) const {
    if (!(lag >= 0.0) || !(lag <= config_.z)) return npos;
    auto k = static_cast<std::size_t>(std::nearbyint(lag / config_.snap_step));
    k = std::min(k, snap_to_lag_.size() - 1);
    return snap_to_lag_[k];
}

std::size_t Dictionary::nearest_aux(std::span<const double> point) const {
    if (config_.aux_dim == 0) return 0;
    if (point.size() != config_.aux_dim) throw std::invalid_argument("aux point has the wrong dimension");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < aux_count_; ++q) {
        const auto c = aux(q);
        double d = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) d += (c[k] - point[k]) * (c[k] - point[k]);
        if (d < best_d) {
            best_d = d;
            best = q;
        }
    }
    return best;
}

double Dictionary::k(std::size_t d1, std::size_t d2) const {
    const std::size_t nl = lags_.size();
    return kt(d1 % nl, d2 % nl) * ka(d1 / nl, d2 / nl);
}

Kernel Dictionary::kernel() const {
    if (config_.aux_dim == 0) return config_.time_kernel;
    return Kernel::product(config_.time_kernel, config_.aux_kernel);
}

std::vector<double> Dictionary::center(std::size_t d) const {
    const std::size_t nl = lags_.size();
    std::vector<double> c{lags_[d % nl]};
    const auto a = aux(d / nl);
    c.insert(c.end(), a.begin(), a.end());
    return c;
}

DictionaryFunction::DictionaryFunction(const Dictionary* dict)
    : dict_(dict), a_(dict->size(), 0.0), v_(dict->size(), 0.0) {}

void DictionaryFunction::add(std::size_t d, double w) {
    if (w == 0.0) return;
    const double ws = w / scale_;
    a_[d] += ws;
    const std::size_t nl = dict_->lag_count();
    const std::size_t l = d % nl;
    const std::size_t q = d / nl;
    const double* col = dict_->kt_column(l);
    for (const auto& [q2, kaq] : dict_->aux_stencil(q)) {
        const double c = ws * kaq;
        double* out = v_.data() + q2 * nl;
        for (std::size_t r = 0; r < nl; ++r) out[r] += c * col[r];
    }
}

void DictionaryFunction::scale(double factor) {
    if (factor == 1.0) return;
    if (factor == 0.0) {
        std::fill(a_.begin(), a_.end(), 0.0);
        std::fill(v_.begin(), v_.end(), 0.0);
        scale_ = 1.0;
        return;
    }
    scale_ *= factor;
    if (std::abs(scale_) < 1e-100 || std::abs(scale_) > 1e100) {
        for (double& x : a_) x *= scale_;
        for (double& x : v_) x *= scale_;
        scale_ = 1.0;
    }
}

void DictionaryFunction::fill(double coefficient) {
    std::fill(a_.begin(), a_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
    scale_ = 1.0;
    for (std::size_t d = 0; d < a_.size(); ++d) add(d, coefficient);
}

double DictionaryFunction::norm_sq() const {
    double acc = 0.0;
    for (std::size_t d = 0; d < a_.size(); ++d) acc += a_[d] * v_[d];
    return std::max(0.0, scale_ * scale_ * acc);
}

double DictionaryFunction::min_constraint_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t d : dict_->constraints()) m = std::min(m, v_[d]);
    return scale_ * m;
}

std::size_t DictionaryFunction::nonzero_count() const {
    return static_cast<std::size_t>(std::count_if(a_.begin(), a_.end(), [](double x) { return x != 0.0; }));
}

ProjectionStats DictionaryFunction::project(const NnqpOptions& options) {
    ProjectionStats stats;
    stats.min_value = min_constraint_value();
    if (stats.min_value >= -options.feas_tol) return stats;
    const auto& cons = dict_->constraints();
    ImplicitDual dual;
    dual.size = cons.size();
    dual.value = [&](std::size_t p) { return value(cons[p]); };
    dual.diag = [&](std::size_t p) { return dict_->k(cons[p], cons[p]); };
    dual.step = [&](std::size_t p, double s) { add(cons[p], s); };
    const auto sol = solve_nonneg_dual(dual, options);
    stats.projected = true;
    stats.converged = sol.converged;
    stats.min_value = min_constraint_value();
    return stats;
}

std::size_t DictionaryFunction::truncate(std::size_t budget) {
    std::size_t count = nonzero_count();
    std::size_t dropped = 0;
    while (count > budget) {
        std::size_t worst = a_.size();
        double worst_w = std::numeric_limits<double>::infinity();
        for (std::size_t d = 0; d < a_.size(); ++d) {
            if (a_[d] == 0.0) continue;
            const double w = std::abs(a_[d]) * dict_->k(d, d);
            if (w < worst_w) {
                worst_w = w;
                worst = d;
            }
        }
        add(worst, -coefficient(worst));
        a_[worst] = 0.0;
        --count;
        ++dropped;
    }
    return dropped;
}

void DictionaryFunction::refresh() {
    std::vector<double> a(a_.size());
    for (std::size_t d = 0; d < a_.size(); ++d) a[d] = coefficient(d);
    std::fill(a_.begin(), a_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
    scale_ = 1.0;
    for (std::size_t d = 0; d < a.size(); ++d) add(d, a[d]);
}

KernelExpansion DictionaryFunction::to_expansion() const {
    KernelExpansion f(dict_->kernel(), dict_->center_dim(), KernelExpansion::kUnbounded, dict_->config().z);
    for (std::size_t d = 0; d < a_.size(); ++d) {
        if (a_[d] != 0.0) f.append(dict_->center(d), coefficient(d));
    }
    return f;
}

void DictionaryFunction::assign(const KernelExpansion& f) {
    std::fill(a_.begin(), a_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
    scale_ = 1.0;
    for (std::size_t s = 0; s < f.size(); ++s) {
        const auto c = f.center(s);
        const std::size_t l = dict_->snap(c[0]);
        if (l == Dictionary::npos) throw std::invalid_argument("expansion center outside the dictionary window");
        add(dict_->index(l, dict_->nearest_aux(c.subspan(1))), f.coefficient(s));
    }
}

}  // namespace npole
