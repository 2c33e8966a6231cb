#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace npole {

/// Reproducing kernel over points whose first coordinate is a time lag.
///
/// Gaussian and Laplacian kernels act on the Euclidean distance between
/// points and satisfy K(x, x) = 1. The polynomial kernel is
/// (scale * <x, y> + offset)^(2 * half_degree), always of even degree.
/// A product kernel multiplies a kernel on the first coordinate with a
/// kernel on the remaining coordinates (a mark or a spatial displacement).
struct Kernel {
    enum class Kind { kGaussian, kLaplacian, kPolynomial, kProduct };

    Kind kind = Kind::kGaussian;
    double bandwidth = 0.2;
    int half_degree = 2;
    double scale = 1.0;
    double offset = 1.0;
    std::vector<Kernel> factors;

    static Kernel gaussian(double bandwidth);
    static Kernel laplacian(double bandwidth);
    static Kernel polynomial(int half_degree, double scale = 1.0, double offset = 1.0);
    static Kernel product(Kernel time, Kernel aux);

    /// Throws std::invalid_argument when a parameter is not strictly positive.
    void validate() const;

    double operator()(std::span<const double> x, std::span<const double> y) const;
    double operator()(double x, double y) const;

    /// True when K(x, x) == 1 for every x.
    bool unit_diagonal() const;

    std::string describe() const;
    static Kernel parse(std::string_view text);

    friend bool operator==(const Kernel&, const Kernel&) = default;
};

/// Checked evaluation: rejects non-finite inputs.
double kernel_eval(const Kernel& kernel, std::span<const double> x, std::span<const double> y);
double kernel_eval(const Kernel& kernel, double x, double y);

/// Gramian over a flat list of points with the given dimension.
Eigen::MatrixXd gramian(const Kernel& kernel, std::span<const double> points, std::size_t dim);

/// f(x) = sum_s a_s K(s, x), with at most `budget` centers. The first
/// coordinate of the argument is a lag; outside [0, support_window] the
/// expansion evaluates to zero.
class KernelExpansion {
public:
    static constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

    explicit KernelExpansion(Kernel kernel = Kernel::gaussian(0.2), std::size_t dim = 1,
                             std::size_t budget = kUnbounded,
                             double support_window = std::numeric_limits<double>::infinity());

    const Kernel& kernel() const { return kernel_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return coefficients_.size(); }
    bool empty() const { return coefficients_.empty(); }
    std::size_t budget() const { return budget_; }
    double support_window() const { return window_; }
    void set_budget(std::size_t budget) { budget_ = budget; }
    void set_support_window(double window) { window_ = window; }

    std::span<const double> center(std::size_t i) const {
        return std::span<const double>(centers_).subspan(i * dim_, dim_);
    }
    std::span<const double> centers() const { return centers_; }
    const std::vector<double>& coefficients() const { return coefficients_; }
    double coefficient(std::size_t i) const { return coefficients_[i]; }
    void set_coefficient(std::size_t i, double value) { coefficients_[i] = value; }
    void set_coefficients(std::vector<double> values);

    /// Adds weight to a center, merging with an identical existing center.
    /// Does not enforce the budget; see truncate_budget.
    void add(std::span<const double> center, double weight);
    void add(double lag, double weight) { add(std::span<const double>(&lag, 1), weight); }

    /// Appends without the merge scan. Caller guarantees the center is new.
    void append(std::span<const double> center, double weight);

    void remove(std::size_t i);
    void scale(double factor);
    void clear();

    double operator()(std::span<const double> x) const;
    double operator()(double lag) const { return (*this)(std::span<const double>(&lag, 1)); }

    /// Evaluation ignoring the support window.
    double raw(std::span<const double> x) const;

    Eigen::MatrixXd gramian() const;
    Eigen::Map<const Eigen::VectorXd> coefficient_vector() const {
        return Eigen::Map<const Eigen::VectorXd>(coefficients_.data(),
                                                 static_cast<Eigen::Index>(coefficients_.size()));
    }

    /// Index of an identical center, or size() when absent.
    std::size_t find(std::span<const double> center) const;

private:
    Kernel kernel_;
    std::size_t dim_;
    std::size_t budget_;
    double window_;
    std::vector<double> centers_;
    std::vector<double> coefficients_;
};

double expansion_eval(const KernelExpansion& f, std::span<const double> x);
double expansion_eval(const KernelExpansion& f, double x);

/// a^T G a, clamped at zero when round-off makes it slightly negative.
double rkhs_norm_sq(const KernelExpansion& f);

/// ||f - g||^2 in the RKHS; both expansions must share kernel and dimension.
double rkhs_distance_sq(const KernelExpansion& f, const KernelExpansion& g);

/// <f, g> in the RKHS.
double rkhs_inner(const KernelExpansion& f, const KernelExpansion& g);

/// Number of times a negative quadratic form was clamped to zero.
std::size_t rkhs_clamp_count();

struct TruncationResult {
    KernelExpansion expansion;
    double rkhs_distance = 0.0;
    std::size_t dropped = 0;
};

/// Keeps at most budget() centers by repeatedly dropping the center with the
/// smallest |a_s| K(s, s). Remaining coefficients are unchanged.
TruncationResult truncate_budget(const KernelExpansion& f);

/// round(t / step) * step.
double snap_center(double t, double step);

/// CSV with a '#' header line carrying kernel, dimension, budget, window.
void write_expansion_csv(std::ostream& out, const KernelExpansion& f);
KernelExpansion read_expansion_csv(std::istream& in);

}  // namespace npole
