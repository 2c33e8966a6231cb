#include "npole/kernels.hpp"

#include "npole/format.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace npole {

namespace {

std::atomic<std::size_t> g_clamp_count{0};

double squared_distance(std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

double dot(std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// Extracts the text between the first '(' and its matching ')'.
std::string_view inner_args(std::string_view text) {
    const auto open = text.find('(');
    if (open == std::string_view::npos || text.back() != ')') {
        throw std::invalid_argument("malformed kernel description: " + std::string(text));
    }
    return text.substr(open + 1, text.size() - open - 2);
}

double named_arg(std::string_view args, std::string_view name) {
    for (auto part : split(args, ',')) {
        part = trim(part);
        const auto eq = part.find('=');
        if (eq != std::string_view::npos && trim(part.substr(0, eq)) == name) {
            return parse_double(part.substr(eq + 1));
        }
    }
    throw std::invalid_argument("kernel description missing '" + std::string(name) + "'");
}

}  // namespace

Kernel Kernel::gaussian(double bandwidth) {
    Kernel k;
    k.kind = Kind::kGaussian;
    k.bandwidth = bandwidth;
    k.validate();
    return k;
}

Kernel Kernel::laplacian(double bandwidth) {
    Kernel k;
    k.kind = Kind::kLaplacian;
    k.bandwidth = bandwidth;
    k.validate();
    return k;
}

Kernel Kernel::polynomial(int half_degree, double scale, double offset) {
    Kernel k;
    k.kind = Kind::kPolynomial;
    k.half_degree = half_degree;
    k.scale = scale;
    k.offset = offset;
    k.validate();
    return k;
}

Kernel Kernel::product(Kernel time, Kernel aux) {
    Kernel k;
    k.kind = Kind::kProduct;
    k.factors = {std::move(time), std::move(aux)};
    k.validate();
    return k;
}

void Kernel::validate() const {
    switch (kind) {
        case Kind::kGaussian:
        case Kind::kLaplacian:
            if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
                throw std::invalid_argument("kernel bandwidth must be positive and finite");
            }
            break;
        case Kind::kPolynomial:
            if (half_degree < 1 || !(scale > 0.0) || !(offset > 0.0)) {
                throw std::invalid_argument("polynomial kernel needs d >= 1, alpha > 0, beta > 0");
            }
            break;
        case Kind::kProduct:
            if (factors.size() != 2) throw std::invalid_argument("product kernel needs two factors");
            if (factors[0].kind == Kind::kProduct) {
                throw std::invalid_argument("product kernel time factor must be one-dimensional");
            }
            factors[0].validate();
            factors[1].validate();
            break;
    }
}

double Kernel::operator()(std::span<const double> x, std::span<const double> y) const {
    switch (kind) {
        case Kind::kGaussian:
            return std::exp(-squared_distance(x, y) / (2.0 * bandwidth * bandwidth));
        case Kind::kLaplacian:
            return std::exp(-std::sqrt(squared_distance(x, y)) / bandwidth);
        case Kind::kPolynomial: {
            const double base = scale * dot(x, y) + offset;
            double out = 1.0;
            for (int i = 0; i < 2 * half_degree; ++i) out *= base;
            return out;
        }
        case Kind::kProduct:
            return factors[0](x.first(1), y.first(1)) * factors[1](x.subspan(1), y.subspan(1));
    }
    return 0.0;
}

double Kernel::operator()(double x, double y) const {
    return (*this)(std::span<const double>(&x, 1), std::span<const double>(&y, 1));
}

bool Kernel::unit_diagonal() const {
    switch (kind) {
        case Kind::kGaussian:
        case Kind::kLaplacian:
            return true;
        case Kind::kPolynomial:
            return false;
        case Kind::kProduct:
            return factors[0].unit_diagonal() && factors[1].unit_diagonal();
    }
    return false;
}

std::string Kernel::describe() const {
    switch (kind) {
        case Kind::kGaussian:
            return "gaussian(h=" + format_double(bandwidth) + ")";
        case Kind::kLaplacian:
            return "laplacian(h=" + format_double(bandwidth) + ")";
        case Kind::kPolynomial:
            return "polynomial(d=" + std::to_string(half_degree) + ",alpha=" + format_double(scale) +
                   ",beta=" + format_double(offset) + ")";
        case Kind::kProduct:
            return "product(" + factors[0].describe() + ";" + factors[1].describe() + ")";
    }
    return {};
}

Kernel Kernel::parse(std::string_view text) {
    text = trim(text);
    if (text.starts_with("gaussian")) return gaussian(named_arg(inner_args(text), "h"));
    if (text.starts_with("laplacian")) return laplacian(named_arg(inner_args(text), "h"));
    if (text.starts_with("polynomial")) {
        const auto args = inner_args(text);
        return polynomial(static_cast<int>(named_arg(args, "d")), named_arg(args, "alpha"),
                          named_arg(args, "beta"));
    }
    if (text.starts_with("product")) {
        const auto args = inner_args(text);
        int depth = 0;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == '(') ++depth;
            if (args[i] == ')') --depth;
            if (args[i] == ';' && depth == 0) {
                return product(parse(args.substr(0, i)), parse(args.substr(i + 1)));
            }
        }
    }
    throw std::invalid_argument("unknown kernel description: " + std::string(text));
}

double kernel_eval(const Kernel& kernel, std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("kernel arguments differ in dimension");
    if (!all_finite(x) || !all_finite(y)) throw std::invalid_argument("kernel argument is not finite");
    return kernel(x, y);
}

double kernel_eval(const Kernel& kernel, double x, double y) {
    return kernel_eval(kernel, std::span<const double>(&x, 1), std::span<const double>(&y, 1));
}

Eigen::MatrixXd gramian(const Kernel& kernel, std::span<const double> points, std::size_t dim) {
    const auto n = static_cast<Eigen::Index>(points.size() / dim);
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto xi = points.subspan(static_cast<std::size_t>(i) * dim, dim);
        g(i, i) = kernel(xi, xi);
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = kernel(xi, points.subspan(static_cast<std::size_t>(j) * dim, dim));
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return g;
}

KernelExpansion::KernelExpansion(Kernel kernel, std::size_t dim, std::size_t budget,
                                 double support_window)
    : kernel_(std::move(kernel)), dim_(dim), budget_(budget), window_(support_window) {
    kernel_.validate();
    if (dim_ == 0) throw std::invalid_argument("expansion dimension must be positive");
    if (kernel_.kind == Kernel::Kind::kProduct && dim_ < 2) {
        throw std::invalid_argument("product kernel expansion needs dimension >= 2");
    }
    if (!(support_window > 0.0)) throw std::invalid_argument("support window must be positive");
}

void KernelExpansion::set_coefficients(std::vector<double> values) {
    if (values.size() != coefficients_.size()) {
        throw std::invalid_argument("coefficient count does not match center count");
    }
    coefficients_ = std::move(values);
}

std::size_t KernelExpansion::find(std::span<const double> center) const {
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
        if (std::equal(center.begin(), center.end(), centers_.begin() + static_cast<std::ptrdiff_t>(i * dim_))) {
            return i;
        }
    }
    return n;
}

void KernelExpansion::add(std::span<const double> center, double weight) {
    if (center.size() != dim_) throw std::invalid_argument("center dimension mismatch");
    if (!all_finite(center) || !std::isfinite(weight)) {
        throw std::invalid_argument("expansion center or weight is not finite");
    }
    const std::size_t idx = find(center);
    if (idx < size()) {
        coefficients_[idx] += weight;
        return;
    }
    append(center, weight);
}

void KernelExpansion::append(std::span<const double> center, double weight) {
    centers_.insert(centers_.end(), center.begin(), center.end());
    coefficients_.push_back(weight);
}

void KernelExpansion::remove(std::size_t i) {
    const auto off = static_cast<std::ptrdiff_t>(i * dim_);
    centers_.erase(centers_.begin() + off, centers_.begin() + off + static_cast<std::ptrdiff_t>(dim_));
    coefficients_.erase(coefficients_.begin() + static_cast<std::ptrdiff_t>(i));
}

void KernelExpansion::scale(double factor) {
    for (double& c : coefficients_) c *= factor;
}

void KernelExpansion::clear() {
    centers_.clear();
    coefficients_.clear();
}

double KernelExpansion::raw(std::span<const double> x) const {
    double acc = 0.0;
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) acc += coefficients_[i] * kernel_(center(i), x);
    return acc;
}

double KernelExpansion::operator()(std::span<const double> x) const {
    if (std::isfinite(window_) && (x[0] < 0.0 || x[0] > window_)) return 0.0;
    return raw(x);
}

Eigen::MatrixXd KernelExpansion::gramian() const { return npole::gramian(kernel_, centers_, dim_); }

double expansion_eval(const KernelExpansion& f, std::span<const double> x) {
    if (x.size() != f.dim()) throw std::invalid_argument("evaluation point dimension mismatch");
    if (!all_finite(x)) throw std::invalid_argument("evaluation point is not finite");
    return f(x);
}

double expansion_eval(const KernelExpansion& f, double x) {
    return expansion_eval(f, std::span<const double>(&x, 1));
}

double rkhs_norm_sq(const KernelExpansion& f) {
    if (f.empty()) return 0.0;
    const auto a = f.coefficient_vector();
    const double q = a.dot(f.gramian() * a);
    if (q < 0.0) {
        g_clamp_count.fetch_add(1, std::memory_order_relaxed);
        return 0.0;
    }
    return q;
}

double rkhs_inner(const KernelExpansion& f, const KernelExpansion& g) {
    if (!(f.kernel() == g.kernel()) || f.dim() != g.dim()) {
        throw std::invalid_argument("RKHS inner product needs matching kernels");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (std::size_t j = 0; j < g.size(); ++j) {
            acc += f.coefficient(i) * g.coefficient(j) * f.kernel()(f.center(i), g.center(j));
        }
    }
    return acc;
}

double rkhs_distance_sq(const KernelExpansion& f, const KernelExpansion& g) {
    KernelExpansion diff = f;
    for (std::size_t i = 0; i < g.size(); ++i) diff.add(g.center(i), -g.coefficient(i));
    return rkhs_norm_sq(diff);
}

std::size_t rkhs_clamp_count() { return g_clamp_count.load(); }

TruncationResult truncate_budget(const KernelExpansion& f) {
    TruncationResult out{f, 0.0, 0};
    if (f.size() <= f.budget()) return out;
    KernelExpansion removed(f.kernel(), f.dim());
    while (out.expansion.size() > out.expansion.budget()) {
        std::size_t worst = 0;
        double worst_score = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < out.expansion.size(); ++i) {
            const auto c = out.expansion.center(i);
            const double score = std::abs(out.expansion.coefficient(i)) * f.kernel()(c, c);
            if (score < worst_score) {
                worst_score = score;
                worst = i;
            }
        }
        removed.append(out.expansion.center(worst), out.expansion.coefficient(worst));
        out.expansion.remove(worst);
        ++out.dropped;
    }
    out.rkhs_distance = std::sqrt(rkhs_norm_sq(removed));
    return out;
}

double snap_center(double t, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("snap step must be positive");
    if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("snap input must be finite and >= 0");
    return std::nearbyint(t / step) * step;
}

void write_expansion_csv(std::ostream& out, const KernelExpansion& f) {
    out << "# npole-expansion kernel=" << f.kernel().describe() << " dim=" << f.dim() << " budget="
        << (f.budget() == KernelExpansion::kUnbounded ? std::string("inf") : std::to_string(f.budget()))
        << " window=" << format_double(f.support_window()) << "\n";
    for (std::size_t d = 0; d < f.dim(); ++d) out << "c" << (d + 1) << ",";
    out << "coefficient\n";
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (double c : f.center(i)) out << format_double(c) << ",";
        out << format_double(f.coefficient(i)) << "\n";
    }
}

KernelExpansion read_expansion_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || !line.starts_with("# npole-expansion")) {
        throw std::invalid_argument("missing expansion header");
    }
    std::string kernel_text;
    std::size_t dim = 1;
    std::size_t budget = KernelExpansion::kUnbounded;
    double window = std::numeric_limits<double>::infinity();
    for (auto tok : split(std::string_view(line).substr(2), ' ')) {
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos) continue;
        const auto key = tok.substr(0, eq);
        const auto value = tok.substr(eq + 1);
        if (key == "kernel") kernel_text = std::string(value);
        if (key == "dim") dim = static_cast<std::size_t>(parse_double(value));
        if (key == "budget" && value != "inf") budget = static_cast<std::size_t>(parse_double(value));
        if (key == "window") window = value == "inf" ? std::numeric_limits<double>::infinity() : parse_double(value);
    }
    KernelExpansion f(Kernel::parse(kernel_text), dim, budget, window);
    std::getline(in, line);  // column names
    std::vector<double> center(dim);
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (cells.size() != dim + 1) throw std::invalid_argument("expansion row has wrong column count");
        for (std::size_t d = 0; d < dim; ++d) center[d] = parse_double(cells[d]);
        f.append(center, parse_double(cells[dim]));
    }
    return f;
}

}  // namespace npole
