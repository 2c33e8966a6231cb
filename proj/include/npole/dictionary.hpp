#pragma once

#include "npole/kernels.hpp"
#include "npole/projection.hpp"

#include <Eigen/Dense>

#include <span>
#include <utility>
#include <vector>

namespace npole {

/// A fixed lattice of centers (lag, aux) with the Gramian precomputed as a
/// product K = K_time(lag, lag') * K_aux(aux, aux'). Lags are the snap grid
/// {0, g, 2g, ...} on [0, z] merged with the clip grid; the aux lattice is a
/// single empty point for unmarked processes.
class Dictionary {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    struct Config {
        Kernel time_kernel = Kernel::gaussian(0.2);
        double z = 3.0;
        double snap_step = 0.02;
        std::size_t clip_points = 61;
        Kernel aux_kernel = Kernel::gaussian(1.0);
        std::vector<double> aux_points;  // aux_count * aux_dim values; empty when unmarked
        std::size_t aux_dim = 0;
        bool constrain_all_lags = true;  // false: only clip-grid lags carry constraints
    };

    explicit Dictionary(Config config);

    const Config& config() const { return config_; }
    std::size_t lag_count() const { return lags_.size(); }
    std::size_t aux_count() const { return aux_count_; }
    std::size_t size() const { return lags_.size() * aux_count_; }
    std::size_t center_dim() const { return 1 + config_.aux_dim; }
    double lag(std::size_t l) const { return lags_[l]; }
    std::span<const double> aux(std::size_t q) const;
    std::size_t index(std::size_t l, std::size_t q) const { return q * lags_.size() + l; }

    /// Dictionary lag index of round(lag / snap_step) * snap_step, or npos
    /// when lag lies outside [0, z].
    std::size_t snap(double lag) const;
    std::size_t nearest_aux(std::span<const double> point) const;

    double kt(std::size_t l1, std::size_t l2) const { return kt_(static_cast<Eigen::Index>(l1), static_cast<Eigen::Index>(l2)); }
    const double* kt_column(std::size_t l) const { return kt_.col(static_cast<Eigen::Index>(l)).data(); }
    double ka(std::size_t q1, std::size_t q2) const { return ka_(static_cast<Eigen::Index>(q1), static_cast<Eigen::Index>(q2)); }
    double k(std::size_t d1, std::size_t d2) const;

    /// Aux neighbours q' of q with K_aux(q, q') above 1e-16.
    const std::vector<std::pair<std::size_t, double>>& aux_stencil(std::size_t q) const { return stencil_[q]; }

    const std::vector<std::size_t>& constraints() const { return constraints_; }

    /// Time kernel for unmarked dictionaries, product(time, aux) otherwise.
    Kernel kernel() const;
    std::vector<double> center(std::size_t d) const;

private:
    Config config_;
    std::vector<double> lags_;
    std::vector<std::size_t> snap_to_lag_;
    std::size_t aux_count_ = 1;
    Eigen::MatrixXd kt_;
    Eigen::MatrixXd ka_;
    std::vector<std::vector<std::pair<std::size_t, double>>> stencil_;
    std::vector<std::size_t> constraints_;
};

struct ProjectionStats {
    bool projected = false;
    bool converged = true;
    double min_value = 0.0;
};

/// f = sum_d a_d K(d, .) over a dictionary, with the values v = K a kept up to
/// date so evaluation at a center is O(1). Coefficients and values share a
/// lazy scale factor so shrinkage costs O(1).
class DictionaryFunction {
public:
    DictionaryFunction() = default;
    explicit DictionaryFunction(const Dictionary* dict);

    const Dictionary& dictionary() const { return *dict_; }
    double value(std::size_t d) const { return scale_ * v_[d]; }
    double coefficient(std::size_t d) const { return scale_ * a_[d]; }

    /// a_d += w.
    void add(std::size_t d, double w);
    void scale(double factor);
    void fill(double coefficient);

    double norm_sq() const;
    double min_constraint_value() const;
    std::size_t nonzero_count() const;

    /// Exact RKHS projection onto {f >= 0 at the dictionary constraints}. The
    /// dual is solved in place, so no constraint Gramian is ever formed.
    ProjectionStats project(const NnqpOptions& options = {});

    /// Drops the smallest |a_d| K(d, d) centers until at most `budget` remain.
    std::size_t truncate(std::size_t budget);

    /// Recomputes v = K a from the coefficients (drift control for long runs).
    void refresh();

    /// Nonzero centers as an expansion with support window z.
    KernelExpansion to_expansion() const;
    void assign(const KernelExpansion& f);

private:
    const Dictionary* dict_ = nullptr;
    std::vector<double> a_;
    std::vector<double> v_;
    double scale_ = 1.0;
};

}  // namespace npole
