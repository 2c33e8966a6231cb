#pragma once

#include "npole/kernels.hpp"
#include "npole/npole.hpp"
#include "npole/process.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace npole {

// ---------------------------------------------------------------- marks

enum class MarkMode { kJoint, kSeparable };

std::string to_string(MarkMode mode);
MarkMode parse_mark_mode(std::string_view text);

/// Running mean / standard deviation over the marks seen so far (each mark
/// included in its own statistics), frozen once `warmup` marks are in.
struct MarkScaler {
    double mean = 0.0;
    double scale = 1.0;  // 1 while the spread is degenerate

    double operator()(double mark) const { return (mark - mean) / scale; }
};

/// Standardized marks in arrival order, and the frozen scaler.
std::vector<double> standardize_marks(std::span<const double> marks, std::size_t warmup, MarkScaler* frozen = nullptr);

struct MarkedHyper {
    HyperParams base = HyperParams{};
    MarkMode mode = MarkMode::kJoint;
    Kernel mark_kernel = Kernel::gaussian(1.0);
    std::vector<double> mark_lattice;  // standardized; empty: -3 to 3 in steps of 0.5
    std::size_t warmup = 1000;
    bool g_first = true;  // separable mode update order within an epoch

    std::vector<double> resolved_lattice() const;
};

/// f(t, v) as one expansion over (lag, standardized mark) centers, or as the
/// product g(t) h(v) of two expansions.
struct MarkedTrigger {
    MarkMode mode = MarkMode::kJoint;
    KernelExpansion joint;
    bool squared = false;
    KernelExpansion g;
    KernelExpansion h;
    MarkScaler scaler;

    /// Value at a lag and a raw (unstandardized) mark.
    double operator()(double t, double mark) const;
};

struct MarkedFitResult {
    std::size_t p = 0;
    MarkMode mode = MarkMode::kJoint;
    UpdateGrid grid;
    std::vector<double> mu;
    std::vector<MarkedTrigger> f;  // p * p, row-major
    MarkScaler scaler;
    FitDiagnostics diag;

    const MarkedTrigger& at(std::size_t i, std::size_t j) const { return f[i * p + j]; }
};

/// rho sum_n K((lag_n, mark_n), .) + zeta f. Throws std::invalid_argument
/// when there is not one mark per lag.
KernelExpansion mmhp_gradient_joint(const KernelExpansion& f, std::span<const double> lags,
                                    std::span<const double> marks, double rho, double zeta);

struct SeparableDelta {
    KernelExpansion g;  // rho sum_n h(v_n) K(lag_n, .) + zeta g
    KernelExpansion h;  // rho sum_n g(lag_n) K(v_n, .) + zeta h
};

SeparableDelta mmhp_gradient_separable(const KernelExpansion& g, const KernelExpansion& h,
                                       std::span<const double> lags, std::span<const double> marks, double rho,
                                       double zeta);

/// NPOLE-MMHP. Joint mode runs the NPOLE-MHP engine on a (lag x mark)
/// dictionary; separable mode alternates g and h steps within each epoch
/// and supports grid-clip projection only.
MarkedFitResult mmhp_fit(const EventStream& stream, const MarkedHyper& hyper, const FitOptions& options = {});

/// Long-format `t,v,value` on the product of the two lattices.
void write_marked_csv(std::ostream& out, const MarkedTrigger& f, std::span<const double> lags,
                      std::span<const double> marks);

// ---------------------------------------------------------------- space

/// Rectangle [x0, x0 + width] x [y0, y0 + height] cut into nx * ny cells.
struct SpatialGrid {
    double x0 = 0.0;
    double y0 = 0.0;
    double width = 1.0;
    double height = 1.0;
    std::size_t nx = 2;
    std::size_t ny = 2;

    static constexpr std::size_t kMaxCells = 400;

    std::size_t cells() const { return nx * ny; }
    double cell_width() const { return width / static_cast<double>(nx); }
    double cell_height() const { return height / static_cast<double>(ny); }
    double area(std::size_t) const { return cell_width() * cell_height(); }
    std::array<double, 2> center(std::size_t c) const;
    bool contains(double x, double y) const;
    /// Cell holding (x, y); points on the far edges belong to the last cell.
    /// Throws std::invalid_argument outside the rectangle.
    std::size_t cell_of(double x, double y) const;
    void validate() const;
};

/// lambda(t, x) = mu + sum_n time(t - tau_n) exp(-|x - x_n|^2 / spatial_scale^2),
/// with mu a rate per unit area.
struct SpatialModel {
    double mu = 0.5;
    GroundTruthFn time = GroundTruthFn::exp_decay(1.0, 2.0);
    double spatial_scale = 1.0;

    double f(double t, double dx, double dy) const;
};

/// Exact space-time thinning on the grid's rectangle. Returns a 1-dim stream
/// with 2-d locations.
EventStream shp_simulate(const SpatialModel& model, const SpatialGrid& region, double horizon, std::uint64_t seed);

struct ShpHyper {
    HyperParams base = HyperParams{};
    Kernel space_kernel = Kernel::gaussian(0.5);
    double displacement_step = 0.0;    // <= 0: cell width
    double displacement_radius = -1.0; // < 0: largest cell-center offset
};

struct ShpFitResult {
    UpdateGrid grid;
    double mu = 0.0;            // per unit area
    TriggerEstimate f;          // centers (lag, dx, dy)
    std::vector<double> displacements;  // lattice, 2 per point
    FitDiagnostics diag;
    double seconds = 0.0;
};

/// NPOLE-SHP on a cell partition. Events are binned to their cells, the loss
/// at each epoch is sum_c dt lambda_c area_c - x_c log lambda_c with lambda_c
/// the intensity at the cell center, and f lives on (lag x displacement).
ShpFitResult shp_fit(const EventStream& stream, const SpatialGrid& cells, const ShpHyper& hyper,
                     const FitOptions& options = {});

/// int over [0, z] x [-r, r]^2 of |truth - estimate|, midpoint rule with
/// `nt` time and `nx` per-axis space points. With estimate == nullptr
/// returns the L1 norm of the truth on the same box.
double shp_l1_error(const SpatialModel& truth, const TriggerEstimate* estimate, double z, double radius,
                    std::size_t nt = 150, std::size_t nx = 10);

}  // namespace npole
