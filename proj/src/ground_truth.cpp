#include "npole/ground_truth.hpp"

#include "npole/format.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace npole {

namespace {

constexpr double kPi = std::numbers::pi;

double arg(std::string_view args, std::string_view name) {
    for (auto part : split(args, ',')) {
        part = trim(part);
        const auto eq = part.find('=');
        if (eq != std::string_view::npos && trim(part.substr(0, eq)) == name) {
            return parse_double(part.substr(eq + 1));
        }
    }
    throw std::invalid_argument("function description missing '" + std::string(name) + "'");
}

std::string_view inside(std::string_view text) {
    const auto open = text.find('(');
    if (open == std::string_view::npos || text.back() != ')') {
        throw std::invalid_argument("malformed function description: " + std::string(text));
    }
    return text.substr(open + 1, text.size() - open - 2);
}

}  // namespace

GroundTruthFn GroundTruthFn::exp_decay(double amplitude, double rate) {
    if (!(rate > 0.0) || amplitude < 0.0) throw std::invalid_argument("exp decay needs a >= 0, b > 0");
    GroundTruthFn f;
    f.kind_ = Kind::kExpDecay;
    f.a_ = amplitude;
    f.b_ = rate;
    return f;
}

GroundTruthFn GroundTruthFn::gauss_bump(double amplitude, double center, double sharpness) {
    if (!(sharpness > 0.0) || amplitude < 0.0) throw std::invalid_argument("gauss bump needs a >= 0, s > 0");
    GroundTruthFn f;
    f.kind_ = Kind::kGaussBump;
    f.a_ = amplitude;
    f.b_ = center;
    f.c_ = sharpness;
    return f;
}

GroundTruthFn GroundTruthFn::cosine_damped() {
    GroundTruthFn f;
    f.kind_ = Kind::kCosineDamped;
    return f;
}

GroundTruthFn GroundTruthFn::pow_exp(double amplitude, double base) {
    if (!(base > 1.0) || amplitude < 0.0) throw std::invalid_argument("pow-exp needs a >= 0, c > 1");
    GroundTruthFn f;
    f.kind_ = Kind::kPowExp;
    f.a_ = amplitude;
    f.b_ = base;
    return f;
}

GroundTruthFn GroundTruthFn::t_exp() {
    GroundTruthFn f;
    f.kind_ = Kind::kTExp;
    return f;
}

GroundTruthFn GroundTruthFn::mixture(std::vector<GroundTruthFn> parts) {
    GroundTruthFn f;
    f.kind_ = Kind::kMixture;
    f.parts_ = std::move(parts);
    return f;
}

bool GroundTruthFn::is_zero() const {
    switch (kind_) {
        case Kind::kZero:
            return true;
        case Kind::kExpDecay:
        case Kind::kGaussBump:
        case Kind::kPowExp:
            return a_ == 0.0;
        case Kind::kMixture:
            return std::all_of(parts_.begin(), parts_.end(), [](const auto& p) { return p.is_zero(); });
        default:
            return false;
    }
}

double GroundTruthFn::operator()(double t) const {
    if (t < 0.0) return 0.0;
    switch (kind_) {
        case Kind::kExpDecay:
            return a_ * std::exp(-b_ * t);
        case Kind::kGaussBump:
            return a_ * std::exp(-c_ * (t - b_) * (t - b_));
        case Kind::kCosineDamped:
            return 0.5 * (1.0 + std::cos(kPi * t)) * std::exp(-t);
        case Kind::kPowExp:
            return a_ * std::pow(b_, -5.0 * t);
        case Kind::kTExp:
            return t * std::exp(-5.0 * (t - 1.0) * (t - 1.0));
        case Kind::kZero:
            return 0.0;
        case Kind::kMixture: {
            double acc = 0.0;
            for (const auto& p : parts_) acc += p(t);
            return acc;
        }
    }
    return 0.0;
}

double GroundTruthFn::derivative(double t) const {
    if (t < 0.0) return 0.0;
    switch (kind_) {
        case Kind::kExpDecay:
            return -a_ * b_ * std::exp(-b_ * t);
        case Kind::kGaussBump:
            return -2.0 * c_ * (t - b_) * (*this)(t);
        case Kind::kCosineDamped:
            return -0.5 * std::exp(-t) * (kPi * std::sin(kPi * t) + 1.0 + std::cos(kPi * t));
        case Kind::kPowExp:
            return -5.0 * std::log(b_) * (*this)(t);
        case Kind::kTExp:
            return std::exp(-5.0 * (t - 1.0) * (t - 1.0)) * (1.0 - 10.0 * t * (t - 1.0));
        case Kind::kZero:
            return 0.0;
        case Kind::kMixture: {
            double acc = 0.0;
            for (const auto& p : parts_) acc += p.derivative(t);
            return acc;
        }
    }
    return 0.0;
}

double GroundTruthFn::integral(double u) const {
    if (u <= 0.0) return 0.0;
    switch (kind_) {
        case Kind::kExpDecay:
            return a_ / b_ * -std::expm1(-b_ * u);
        case Kind::kGaussBump: {
            const double rs = std::sqrt(c_);
            return a_ * 0.5 * std::sqrt(kPi / c_) * (std::erf((u - b_) * rs) + std::erf(b_ * rs));
        }
        case Kind::kCosineDamped: {
            const double decayed =
                std::isinf(u) ? 0.0 : std::exp(-u) * (kPi * std::sin(kPi * u) - std::cos(kPi * u));
            const double osc = (decayed + 1.0) / (1.0 + kPi * kPi);
            return 0.5 * (-std::expm1(-u) + osc);
        }
        case Kind::kPowExp: {
            const double r = 5.0 * std::log(b_);
            return a_ / r * -std::expm1(-r * u);
        }
        case Kind::kTExp: {
            const double r5 = std::sqrt(5.0);
            return (std::exp(-5.0) - std::exp(-5.0 * (u - 1.0) * (u - 1.0))) / 10.0 +
                   0.5 * std::sqrt(kPi / 5.0) * (std::erf(r5 * (u - 1.0)) + std::erf(r5));
        }
        case Kind::kZero:
            return 0.0;
        case Kind::kMixture: {
            double acc = 0.0;
            for (const auto& p : parts_) acc += p.integral(u);
            return acc;
        }
    }
    return 0.0;
}

double GroundTruthFn::integral() const { return integral(std::numeric_limits<double>::infinity()); }

double GroundTruthFn::effective_support(double tol) const {
    if (is_zero()) return 0.0;
    constexpr double kStep = 0.01;
    constexpr double kLimit = 2000.0;
    double last = 0.0;
    for (double t = 0.0; t <= kLimit; t += kStep) {
        if (std::abs((*this)(t)) >= tol) last = t;
    }
    return last + kStep;
}

std::string GroundTruthFn::describe() const {
    switch (kind_) {
        case Kind::kExpDecay:
            return "exp(a=" + format_double(a_) + ",b=" + format_double(b_) + ")";
        case Kind::kGaussBump:
            return "gauss(a=" + format_double(a_) + ",g=" + format_double(b_) + ",s=" + format_double(c_) + ")";
        case Kind::kCosineDamped:
            return "cosine";
        case Kind::kPowExp:
            return "powexp(a=" + format_double(a_) + ",c=" + format_double(b_) + ")";
        case Kind::kTExp:
            return "texp";
        case Kind::kZero:
            return "zero";
        case Kind::kMixture: {
            std::string out = "mix(";
            for (std::size_t i = 0; i < parts_.size(); ++i) {
                if (i) out += "+";
                out += parts_[i].describe();
            }
            return out + ")";
        }
    }
    return {};
}

GroundTruthFn GroundTruthFn::parse(const std::string& raw) {
    const std::string_view text = trim(raw);
    if (text == "zero" || text == "0") return zero();
    if (text == "cosine") return cosine_damped();
    if (text == "texp") return t_exp();
    if (text.starts_with("exp(")) {
        const auto a = inside(text);
        return exp_decay(arg(a, "a"), arg(a, "b"));
    }
    if (text.starts_with("gauss(")) {
        const auto a = inside(text);
        return gauss_bump(arg(a, "a"), arg(a, "g"), arg(a, "s"));
    }
    if (text.starts_with("powexp(")) {
        const auto a = inside(text);
        return pow_exp(arg(a, "a"), arg(a, "c"));
    }
    if (text.starts_with("mix(")) {
        const auto body = inside(text);
        std::vector<GroundTruthFn> parts;
        int depth = 0;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= body.size(); ++i) {
            if (i < body.size() && body[i] == '(') ++depth;
            if (i < body.size() && body[i] == ')') --depth;
            if (i == body.size() || (body[i] == '+' && depth == 0)) {
                parts.push_back(parse(std::string(body.substr(start, i - start))));
                start = i + 1;
            }
        }
        return mixture(std::move(parts));
    }
    throw std::invalid_argument("unknown function description: " + std::string(text));
}

RunningSup::RunningSup(const GroundTruthFn& f, double step) : step_(step) {
    support_ = f.effective_support();
    if (support_ <= 0.0) return;
    const auto n = static_cast<std::size_t>(std::ceil(support_ / step_)) + 2;
    table_.resize(n);
    double lipschitz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * step_;
        table_[i] = f(t);
        lipschitz = std::max(lipschitz, std::abs(f.derivative(t)));
    }
    for (std::size_t i = n - 1; i-- > 0;) table_[i] = std::max(table_[i], table_[i + 1]);
    for (double& v : table_) v += step_ * lipschitz;
}

double RunningSup::operator()(double lag) const {
    if (table_.empty()) return 0.0;
    if (lag < 0.0) return table_.front();
    const auto idx = static_cast<std::size_t>(lag / step_);
    if (idx >= table_.size()) return 0.0;
    return table_[idx];
}

}  // namespace npole
