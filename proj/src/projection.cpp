#include "npole/projection.hpp"

#include "npole/process.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace npole {

namespace {

double residual(double nu, double value) { return nu > 0.0 ? std::abs(value) : std::max(0.0, -value); }

}  // namespace

NnqpResult solve_nonneg_dual(const ImplicitDual& problem, const NnqpOptions& options) {
    const std::size_t n = problem.size;
    NnqpResult out;
    out.nu.assign(n, 0.0);
    auto& nu = out.nu;
    std::vector<std::size_t> work;
    work.reserve(n);
    auto apply = [&](std::size_t k, double s) {
        nu[k] += s;
        problem.step(k, s);
    };
    while (out.sweeps < options.max_sweeps) {
        work.clear();
        double worst = 0.0;
        double lowest = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double v = problem.value(k);
            worst = std::max(worst, residual(nu[k], v));
            lowest = std::min(lowest, v);
            if (nu[k] > 0.0 || v < 0.0) work.push_back(k);
        }
        out.kkt_residual = worst;
        if (worst <= options.kkt_tol && lowest >= -options.feas_tol) break;
        if (worst <= options.kkt_tol) {
            // Complementarity is good enough; only lift the remaining violations.
            for (std::size_t k : work) {
                const double v = problem.value(k);
                if (v < -options.feas_tol) apply(k, -v / problem.diag(k));
            }
        } else {
            for (std::size_t k : work) {
                const double s = std::max(-nu[k], -problem.value(k) / problem.diag(k));
                if (s != 0.0) apply(k, s);
                if (nu[k] < 0.0) nu[k] = 0.0;
            }
        }
        ++out.sweeps;
    }
    if (out.sweeps >= options.max_sweeps) out.converged = false;
    return out;
}

NnqpResult solve_nonneg_dual(const Eigen::MatrixXd& q, std::vector<double> c, const NnqpOptions& options) {
    const auto n = static_cast<Eigen::Index>(c.size());
    if (q.rows() != n || q.cols() != n) throw std::invalid_argument("dual QP matrix size mismatch");
    std::vector<double> values = std::move(c);
    ImplicitDual problem;
    problem.size = values.size();
    problem.value = [&](std::size_t k) { return values[k]; };
    problem.diag = [&](std::size_t k) { return q(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)); };
    problem.step = [&](std::size_t k, double s) {
        const double* col = q.col(static_cast<Eigen::Index>(k)).data();
        for (std::size_t r = 0; r < values.size(); ++r) values[r] += s * col[r];
    };
    NnqpResult out = solve_nonneg_dual(problem, options);
    out.values = std::move(values);
    return out;
}

std::vector<double> clip_grid(double z, std::size_t points) {
    if (points == 0 || !(z > 0.0)) throw std::invalid_argument("clip grid needs z > 0 and at least one point");
    std::vector<double> g(points);
    if (points == 1) {
        g[0] = 0.0;
        return g;
    }
    for (std::size_t k = 0; k < points; ++k) g[k] = z * static_cast<double>(k) / static_cast<double>(points - 1);
    return g;
}

ClipResult project_grid_clip(const KernelExpansion& f, std::span<const double> grid, const NnqpOptions& options) {
    const std::size_t dim = f.dim();
    if (grid.empty() || grid.size() % dim != 0) throw std::invalid_argument("projection grid is empty or ragged");
    const std::size_t m = grid.size() / dim;
    std::vector<double> values(m);
    for (std::size_t g = 0; g < m; ++g) values[g] = f.raw(grid.subspan(g * dim, dim));
    ClipResult out{f};
    out.min_grid_value = *std::min_element(values.begin(), values.end());
    if (out.min_grid_value >= -options.feas_tol) return out;
    const Eigen::MatrixXd q = gramian(f.kernel(), grid, dim);
    const auto sol = solve_nonneg_dual(q, std::move(values), options);
    for (std::size_t g = 0; g < m; ++g) {
        if (sol.nu[g] > 0.0) out.f.add(grid.subspan(g * dim, dim), sol.nu[g]);
    }
    out.changed = true;
    out.converged = sol.converged;
    out.kkt_residual = sol.kkt_residual;
    out.min_grid_value = *std::min_element(sol.values.begin(), sol.values.end());
    return out;
}

Eigen::MatrixXd poly_lmi(const Kernel& kernel, std::span<const double> centers, const Eigen::VectorXd& b) {
    const auto n = static_cast<Eigen::Index>(centers.size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
            const double g = std::pow(kernel.scale * centers[static_cast<std::size_t>(r)] *
                                              centers[static_cast<std::size_t>(c)] +
                                          kernel.offset,
                                      kernel.half_degree);
            m(r, c) = g * (b(r) + b(c));
        }
    }
    return m;
}

SdpResult project_poly_sdp(const KernelExpansion& f, const SdpOptions& options) {
    const Kernel& kernel = f.kernel();
    if (kernel.kind != Kernel::Kind::kPolynomial || f.dim() != 1) {
        throw UnsupportedModel("SDP projection needs a scalar polynomial kernel");
    }
    const auto n = static_cast<Eigen::Index>(f.size());
    SdpResult out{f};
    if (n == 0) return out;
    const auto centers = f.centers();
    const Eigen::MatrixXd k = f.gramian();
    const Eigen::VectorXd a = f.coefficient_vector();
    auto objective = [&](const Eigen::VectorXd& b) { return -2.0 * a.dot(k * b) + b.dot(k * b); };
    auto min_eig = [&](const Eigen::VectorXd& b) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(poly_lmi(kernel, centers, b),
                                                                Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    };
    out.min_eigenvalue = min_eig(a);
    out.objective = objective(a);
    if (out.min_eigenvalue >= 0.0) return out;

    // G has rank half_degree + 1. With at least 2 half_degree + 1 distinct centers,
    // M(b) >= 0 forces diag(b) to preserve the range of G, so b must be constant.
    if (n >= 2 * kernel.half_degree + 1) {
        const Eigen::VectorXd one = Eigen::VectorXd::Ones(n);
        const double c = std::max(0.0, one.dot(k * a) / one.dot(k * one));
        const Eigen::VectorXd b = c * one;
        out.min_eigenvalue = min_eig(b);
        out.objective = objective(b);
        out.converged = true;
        out.f.set_coefficients(std::vector<double>(b.data(), b.data() + n));
        return out;
    }

    // L(b) = G diag(b) + diag(b) G is linear in b; assemble L^T L from unit vectors.
    std::vector<Eigen::MatrixXd> basis(static_cast<std::size_t>(n));
    for (Eigen::Index s = 0; s < n; ++s) {
        basis[static_cast<std::size_t>(s)] = poly_lmi(kernel, centers, Eigen::VectorXd::Unit(n, s));
    }
    auto adjoint = [&](const Eigen::MatrixXd& m) {
        Eigen::VectorXd v(n);
        for (Eigen::Index s = 0; s < n; ++s) v(s) = (basis[static_cast<std::size_t>(s)].array() * m.array()).sum();
        return v;
    };
    Eigen::MatrixXd ltl(n, n);
    for (Eigen::Index s = 0; s < n; ++s) ltl.col(s) = adjoint(basis[static_cast<std::size_t>(s)]);
    // Scale the penalty with the problem so the ADMM steps stay balanced.
    double rho = options.rho * std::max(1.0, k.diagonal().maxCoeff()) / std::max(1e-300, ltl.diagonal().maxCoeff());
    Eigen::LDLT<Eigen::MatrixXd> solver;
    auto factor = [&] { solver.compute(2.0 * k + rho * ltl + 1e-14 * Eigen::MatrixXd::Identity(n, n)); };
    factor();
    Eigen::VectorXd b = a;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, n);
    bool converged = false;
    std::size_t it = 0;
    for (; it < options.max_iter; ++it) {
        b = solver.solve(2.0 * k * a + rho * adjoint(x - u));
        const Eigen::MatrixXd lb = poly_lmi(kernel, centers, b);
        const Eigen::MatrixXd w = lb + u;
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (w + w.transpose()));
        const Eigen::MatrixXd x_new = es.eigenvectors() *
                                      es.eigenvalues().cwiseMax(0.0).asDiagonal() *
                                      es.eigenvectors().transpose();
        const double dual = rho * (x_new - x).norm();
        x = x_new;
        u += lb - x;
        const double primal = (lb - x).norm();
        const double scale = std::max(1.0, lb.norm());
        if (primal <= options.tol * scale && dual <= options.tol * scale) {
            converged = true;
            break;
        }
        // Residual balancing; u is the scaled dual and rescales with rho.
        if (it % 20 == 19) {
            if (primal > 10.0 * dual) {
                rho *= 2.0;
                u /= 2.0;
                factor();
            } else if (dual > 10.0 * primal) {
                rho /= 2.0;
                u *= 2.0;
                factor();
            }
        }
    }
    const double lam = min_eig(b);
    out.iterations = it;
    out.converged = converged;
    out.min_eigenvalue = lam;
    out.objective = objective(b);
    if (lam < -1e-6) {
        std::vector<double> grid = clip_grid(std::max(1.0, *std::max_element(centers.begin(), centers.end())), 61);
        auto clip = project_grid_clip(f, grid);
        out.f = std::move(clip.f);
        out.fallback = true;
        return out;
    }
    out.f.set_coefficients(std::vector<double>(b.data(), b.data() + n));
    return out;
}

}  // namespace npole
