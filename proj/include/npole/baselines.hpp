#pragma once

#include "npole/discretize.hpp"
#include "npole/npole.hpp"
#include "npole/process.hpp"

#include <vector>

namespace npole {

/// f_{i,j}(t) = alpha_{i,j} exp(-beta_{i,j} t) with the decays known in advance.
struct ExpModel {
    std::size_t p = 0;
    std::vector<double> alpha;  // p * p, row-major
    std::vector<double> beta;
    std::vector<double> mu;

    double f(std::size_t i, std::size_t j, double t) const;
    /// The same parameters as a HawkesModel of ExpDecay triggers.
    HawkesModel to_model() const;
};

struct ExpSnapshot {
    std::size_t epoch = 0;
    std::vector<double> mu;
    std::vector<double> alpha;
};

struct ExpFitResult {
    ExpModel model;  // final iterate
    UpdateGrid grid;
    std::vector<ExpSnapshot> trace;
    std::vector<double> risk;       // epochs * p when traced
    std::vector<double> intensity;  // same layout
    double min_alpha = 0.0;
    double seconds = 0.0;
};

/// d l_{i,k} / d alpha_{i,j} = rho sum_{window events of j} exp(-beta lag) + zeta alpha.
double exp_alpha_gradient(double rho, std::span<const double> lags, double beta, double alpha, double zeta);

/// Projected online gradient descent on the discretized risk with the same
/// grid, window z, step schedule and regularization as NPOLE-MHP. `beta` is
/// p * p; an empty vector means 2 for every pair.
ExpFitResult ogd_exp_fit(const EventStream& stream, const HyperParams& hyper, std::vector<double> beta = {},
                         const FitOptions& options = {});

}  // namespace npole
