#pragma once

#include <string>
#include <vector>

namespace npole {

/// Closed-form triggering function, zero for t < 0.
///
///   ExpDecay(a, b)       a * exp(-b t)
///   GaussBump(a, g, s)   a * exp(-s (t - g)^2)
///   CosineDamped         (1 + cos(pi t)) exp(-t) / 2
///   PowExp(a, c)         a * c^(-5 t)
///   TExp                 t * exp(-5 (t - 1)^2)
///   Zero
///   Mixture              sum of components
class GroundTruthFn {
public:
    enum class Kind { kExpDecay, kGaussBump, kCosineDamped, kPowExp, kTExp, kZero, kMixture };

    GroundTruthFn() = default;

    static GroundTruthFn exp_decay(double amplitude, double rate);
    static GroundTruthFn gauss_bump(double amplitude, double center, double sharpness);
    static GroundTruthFn cosine_damped();
    static GroundTruthFn pow_exp(double amplitude, double base);
    static GroundTruthFn t_exp();
    static GroundTruthFn zero() { return {}; }
    static GroundTruthFn mixture(std::vector<GroundTruthFn> parts);

    Kind kind() const { return kind_; }
    double amplitude() const { return a_; }
    double rate() const { return b_; }
    const std::vector<GroundTruthFn>& components() const { return parts_; }
    bool is_zero() const;

    double operator()(double t) const;
    double derivative(double t) const;

    /// Integral over [0, infinity).
    double integral() const;
    /// Integral over [0, upper].
    double integral(double upper) const;

    /// Lag beyond which sup_{u >= lag} |f(u)| < tol.
    double effective_support(double tol = 1e-12) const;

    std::string describe() const;
    static GroundTruthFn parse(const std::string& text);

private:
    Kind kind_ = Kind::kZero;
    double a_ = 0.0;
    double b_ = 0.0;
    double c_ = 0.0;
    std::vector<GroundTruthFn> parts_;
};

/// Non-increasing upper envelope sup_{u >= s} f(u), tabulated on a fine
/// grid with an absolute Lipschitz slack so it dominates f between samples.
class RunningSup {
public:
    RunningSup() = default;
    RunningSup(const GroundTruthFn& f, double step = 0.005);

    double operator()(double lag) const;
    double support() const { return support_; }

private:
    double step_ = 0.005;
    double support_ = 0.0;
    std::vector<double> table_;
};

}  // namespace npole
