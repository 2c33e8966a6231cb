#pragma once

#include "npole/kernels.hpp"

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

namespace npole {

struct NnqpOptions {
    double kkt_tol = 1e-6;
    double feas_tol = 1e-10;
    std::size_t max_sweeps = 20000;
};

struct NnqpResult {
    std::vector<double> nu;
    std::vector<double> values;  // q * nu + c, the projected function on the grid
    std::size_t sweeps = 0;
    double kkt_residual = 0.0;
    bool converged = true;
};

/// min_{nu >= 0} 0.5 nu^T Q nu + nu^T c by cyclic coordinate descent over the
/// working set {nu_p > 0 or value_p < 0}, followed by a feasibility polish.
/// When Q is the grid Gramian and c the function's grid values, the result
/// f + sum_p nu_p K(p, .) is the RKHS projection onto {f(p) >= 0}.
NnqpResult solve_nonneg_dual(const Eigen::MatrixXd& q, std::vector<double> c, const NnqpOptions& options = {});

/// The same iteration on an implicit Gramian. value(p) reads the current
/// constraint value, step(p, s) applies nu_p += s and must update every
/// value by s * Q(., p); diag(p) is Q(p, p). Only nu is filled in.
struct ImplicitDual {
    std::size_t size = 0;
    std::function<double(std::size_t)> value;
    std::function<double(std::size_t)> diag;
    std::function<void(std::size_t, double)> step;
};
NnqpResult solve_nonneg_dual(const ImplicitDual& problem, const NnqpOptions& options = {});

/// Uniform grid of `points` lags on [0, z].
std::vector<double> clip_grid(double z, std::size_t points);

struct ClipResult {
    KernelExpansion f;
    bool changed = false;
    bool converged = true;  // false: best iterate returned after max_sweeps
    double kkt_residual = 0.0;
    double min_grid_value = 0.0;
};

/// Nearest expansion (in RKHS norm) that is nonnegative on the grid. The
/// representation uses the input centers plus the grid points, so the result
/// is the exact projection onto {f(t_g) >= 0}. Inputs already nonnegative up
/// to feas_tol are returned unchanged. `grid` holds points of f.dim() each.
ClipResult project_grid_clip(const KernelExpansion& f, std::span<const double> grid,
                             const NnqpOptions& options = {});

struct SdpOptions {
    double rho = 1.0;
    double tol = 1e-10;
    std::size_t max_iter = 50000;
};

struct SdpResult {
    KernelExpansion f;
    double min_eigenvalue = 0.0;  // of G diag(b) + diag(b) G
    double objective = 0.0;       // -2 a^T K b + b^T K b
    std::size_t iterations = 0;
    bool converged = true;
    bool fallback = false;  // grid-clip result returned instead
};

/// G diag(b) + diag(b) G with G the Gramian of (scale x y + offset)^d.
Eigen::MatrixXd poly_lmi(const Kernel& kernel, std::span<const double> centers, const Eigen::VectorXd& b);

/// min -2 a^T K b + b^T K b  s.t.  G diag(b) + diag(b) G >= 0, solved by ADMM
/// with an eigendecomposition-based PSD step. Throws UnsupportedModel-like
/// std::logic_error for non-polynomial or non-scalar kernels.
SdpResult project_poly_sdp(const KernelExpansion& f, const SdpOptions& options = {});

}  // namespace npole
