#pragma once

#include "rlab/gradient_system.hpp"
#include "rlab/numkit.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>

namespace rlab {

/// One-layer model: yhat = s( sum_x r((K*I)(x)) ), r = Swish, s = sigmoid.
struct Cnn1Config {
    Field2D<double> image;
    int label = 1;
    double beta = 1.0;
    double alpha = 0.0;
    /// Side of the square kernel support; offsets run over [-w/2, w/2).
    /// Setting it to the image side gives the unwindowed flow.
    std::size_t window = 32;
    double dt = 0.01;
    std::size_t steps = 1000;
    Precision precision = Precision::Double;
    Boundary boundary = Boundary::Periodic;

    void validate() const;
};

enum class Regime { Transitioning, Activated, NotActivated };

std::string to_string(Regime r);

// Swish r(x) = x / (1 + exp(-beta x)) and its derivatives, written through a
// sign-split logistic so neither branch overflows.

template <class T>
T logistic(T t) {
    if (t >= T(0)) return T(1) / (T(1) + std::exp(-t));
    const T e = std::exp(t);
    return e / (T(1) + e);
}

/// log(1 + e^x) without overflow or loss of the small tail.
template <class T>
T softplus(T x) {
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

/// Logit bound equivalent to clamping yhat to [1e-12, 1 - 1e-12].
inline constexpr double logit_clamp = 27.631021115928547;

/// yhat - y from the logit: for y = 1 this is -s(-z), which keeps its
/// relative precision as yhat -> 1 where the direct difference cancels.
template <class T>
T output_residual(T logit, int label) {
    return label == 1 ? -logistic(-logit) : logistic(logit);
}

/// Cross-entropy -log(yhat) or -log(1 - yhat) evaluated from the logit,
/// with yhat clamped to [1e-12, 1 - 1e-12]; sets `clamped` when that bites.
template <class T>
T cross_entropy(T logit, int label, bool& clamped) {
    const T bound = static_cast<T>(logit_clamp);
    if (logit < -bound || logit > bound) {
        logit = std::clamp(logit, -bound, bound);
        clamped = true;
    }
    return softplus(label == 1 ? -logit : logit);
}

template <class T>
T swish(T x, T beta) {
    return x * logistic(beta * x);
}

template <class T>
T swish_prime(T x, T beta) {
    const T t = beta * x, s = logistic(t);
    return s + t * s * (T(1) - s);
}

template <class T>
T swish_second(T x, T beta) {
    const T t = beta * x, s = logistic(t);
    return beta * s * (T(1) - s) * (T(2) + t * (T(1) - T(2) * s));
}

template <class T>
struct LossValue {
    T value{};
    bool clamped = false;
};

template <class T>
struct StepResult {
    Field2D<T> kernel;
    bool diverged = false;
};

/// True when any entry is non-finite or |K|_inf exceeds 1e12.
template <class T>
bool kernel_diverged(const Field2D<T>& k) {
    for (T v : k.values())
        if (!std::isfinite(v) || std::abs(v) > T(1e12)) return true;
    return false;
}

struct RegimeMap {
    std::size_t rows = 0, cols = 0;
    std::vector<Regime> labels;
    std::array<std::size_t, 3> counts{};  ///< indexed by Regime

    std::size_t count(Regime r) const { return counts[static_cast<std::size_t>(r)]; }
};

/// Model bound to one configuration in working precision T.
template <class T>
class Cnn1Model {
public:
    explicit Cnn1Model(const Cnn1Config& cfg);

    const Cnn1Config& config() const { return cfg_; }
    std::size_t window() const { return cfg_.window; }
    Origin origin() const;

    struct Forward {
        Field2D<T> preact;  ///< K*I
        Field2D<T> gate;    ///< logistic(beta (K*I)), shared by r and r'
        T logit{};          ///< sum_x r((K*I)(x))
        T yhat{};
    };

    Forward forward_pass(const Field2D<T>& k) const;
    T forward(const Field2D<T>& k) const { return forward_pass(k).yhat; }

    /// Binary cross-entropy plus (alpha/2) sum K^2; yhat is clamped to
    /// [1e-12, 1 - 1e-12] before the log.
    LossValue<T> loss(const Field2D<T>& k) const;
    LossValue<T> loss(const Forward& f, const Field2D<T>& k) const;

    /// Exact gradient (yhat - y) (r'(K*I) * I) + alpha K on the window.
    Field2D<T> grad(const Field2D<T>& k) const;
    Field2D<T> grad(const Forward& f, const Field2D<T>& k) const;

    StepResult<T> gd_step(const Field2D<T>& k) const;

    /// [-(a/2)(Ibar + beta (K*I)*I) - alpha K] on the window, a frozen.
    Field2D<T> linear_rhs(const Field2D<T>& k, T a) const;
    Field2D<T> linear_step(const Field2D<T>& k, T a) const;

    /// Linearization of -grad around K = 0 with a = yhat - y expanded too:
    /// -(1/2)(s(0) - y) beta (K*I)*I - (1/4) s'(0) Ibar^2 Kbar - alpha K.
    Field2D<T> linear_rhs_nonconstant_a(const Field2D<T>& k) const;

    RegimeMap regime_classify(const Field2D<T>& k, double tau = 2.0) const;

    /// sum_x I(x+z) at each kernel offset (Ibar everywhere when periodic).
    const Field2D<T>& ones_taps() const { return ones_taps_; }
    T image_sum() const { return image_sum_; }

private:
    Cnn1Config cfg_;
    ImageCorrelator<T> corr_;
    Field2D<T> ones_taps_;
    T image_sum_{};
    T beta_, alpha_, dt_, y_;
};

/// Per-frequency growth factor 1 - dt (alpha + a beta |I^(w)|^2 / 2) of the
/// unwindowed linear flow.
struct AmplifierSpectrum {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;

    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double max_abs() const;
};

AmplifierSpectrum amplifier(const Cnn1Config& cfg, double a);

/// |I^(w)|^2 over the image's frequency grid, in double.
std::vector<double> image_power_spectrum(const Field2D<double>& image);

enum class Scheme { GradientDescent, Nesterov };

/// Stable window for alpha. z(w) = alpha + c(w) is the per-frequency
/// gradient amplifier; c ranges over [shift_min, shift_max].
struct StabilityBounds {
    double alpha_min = 0.0;
    double alpha_max = 0.0;
    Regime regime = Regime::Transitioning;
    Scheme scheme = Scheme::GradientDescent;
    double dt = 0.0;
    double shift_min = 0.0;
    double shift_max = 0.0;

    /// Largest stable step at this alpha (0 when some mode grows for every dt).
    double dt_max(double alpha) const;
    bool contains(double alpha) const { return alpha > alpha_min && alpha < alpha_max; }
};

/// Transitioning-regime bounds. With a < 0 these are
/// alpha_max = 2/dt - (a beta / 2) min|I^|^2, alpha_min = -(a beta / 2) max|I^|^2;
/// for a > 0 the roles of min and max swap.
StabilityBounds stability_bounds(const Cnn1Config& cfg, double a);

/// Bounds of the regime-specific linear flows. Transitioning uses a.
StabilityBounds regime_bounds(const Cnn1Config& cfg, Regime regime, double a = -0.5);

/// Standard normal entries, seeded.
Field2D<double> random_kernel(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Periodic fast path for the frozen-a linear flow: (K*I)*I on the window is
/// the convolution of K with the image autocorrelation, evaluated on a
/// zero-padded grid just large enough to avoid wrap-around.
template <class T>
class LinearFlow {
public:
    LinearFlow(const Cnn1Config& cfg, double a);

    /// Right-hand side and quadratic energy
    /// Q(K) = (a/2) Ibar Kbar + (a beta/4) |K*I|^2 + (alpha/2) |K|^2, whose
    /// negative gradient the right-hand side is.
    Field2D<T> rhs(const Field2D<T>& k, double* energy = nullptr) const;
    Field2D<T> step(const Field2D<T>& k) const;

    double a() const { return a_; }
    std::size_t window() const { return w_; }

private:
    Field2D<T> autocorr_apply(const Field2D<T>& k) const;

    std::size_t w_, pr_, pc_;
    double a_;
    T beta_, alpha_, dt_, ibar_;
    std::vector<std::complex<T>> kernel_spectrum_;
};

/// Gradient-system view of the nonlinear model; theta is the kernel in
/// row-major order.
template <class T>
class Cnn1System final : public GradientSystem<T> {
public:
    explicit Cnn1System(const Cnn1Config& cfg) : model_(cfg) {}
    std::size_t dimension() const override { return model_.window() * model_.window(); }
    double evaluate(std::span<const T> theta, std::span<T> grad) const override;
    const Cnn1Model<T>& model() const { return model_; }

private:
    Cnn1Model<T> model_;
};

/// Gradient-system view of the frozen-a linear flow (energy Q as the loss).
template <class T>
class LinearFlowSystem final : public GradientSystem<T> {
public:
    LinearFlowSystem(const Cnn1Config& cfg, double a) : flow_(cfg, a), w_(cfg.window) {}
    std::size_t dimension() const override { return w_ * w_; }
    double evaluate(std::span<const T> theta, std::span<T> grad) const override;

private:
    LinearFlow<T> flow_;
    std::size_t w_;
};

}  // namespace rlab
