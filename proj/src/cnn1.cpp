#include "rlab/cnn1.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace rlab {

void Cnn1Config::validate() const {
    if (image.size() == 0) throw std::invalid_argument("cnn1: empty image");
    if (!(beta > 0)) throw std::invalid_argument("cnn1: beta must be > 0");
    if (label != 0 && label != 1) throw std::invalid_argument("cnn1: label must be 0 or 1");
    if (window == 0 || window > image.rows() || window > image.cols())
        throw std::invalid_argument("cnn1: window must be in [1, image extent]");
    if (!(dt >= 0)) throw std::invalid_argument("cnn1: dt must be >= 0");
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::Transitioning: return "transitioning";
        case Regime::Activated: return "activated";
        case Regime::NotActivated: return "not_activated";
    }
    return "?";
}

namespace {

template <class T>
Field2D<T> ones_taps_for(const ImageCorrelator<T>& corr, std::size_t w, Origin o, T image_sum) {
    if (corr.boundary() == Boundary::Periodic) return Field2D<T>(w, w, image_sum);
    Field2D<T> ones(corr.image().rows(), corr.image().cols(), T(1));
    return corr.taps(ones, w, w, o);
}

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
    T acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace

template <class T>
Cnn1Model<T>::Cnn1Model(const Cnn1Config& cfg)
    : cfg_((cfg.validate(), cfg)),
      corr_(cfg.image.cast<T>(), cfg.boundary, cfg.window),
      beta_(static_cast<T>(cfg.beta)),
      alpha_(static_cast<T>(cfg.alpha)),
      dt_(static_cast<T>(cfg.dt)),
      y_(static_cast<T>(cfg.label)) {
    image_sum_ = det_sum<T>(corr_.image().values());
    ones_taps_ = ones_taps_for(corr_, cfg_.window, origin(), image_sum_);
}

template <class T>
Origin Cnn1Model<T>::origin() const {
    const auto h = static_cast<std::ptrdiff_t>(cfg_.window / 2);
    return {h, h};
}

template <class T>
typename Cnn1Model<T>::Forward Cnn1Model<T>::forward_pass(const Field2D<T>& k) const {
    if (k.rows() != cfg_.window || k.cols() != cfg_.window)
        throw std::invalid_argument("cnn1: kernel shape does not match the window");
    Forward f;
    f.preact = corr_.correlate(k, origin());
    f.gate = Field2D<T>(f.preact.rows(), f.preact.cols());
    std::vector<T> act(f.preact.size());
    for (std::size_t i = 0; i < act.size(); ++i) {
        const T x = f.preact.values()[i];
        const T s = logistic(beta_ * x);
        f.gate.storage()[i] = s;
        act[i] = x * s;  // swish(x, beta)
    }
    f.logit = det_sum<T>(act);
    f.yhat = logistic(f.logit);
    return f;
}

template <class T>
LossValue<T> Cnn1Model<T>::loss(const Forward& f, const Field2D<T>& k) const {
    LossValue<T> out;
    const T ce = cross_entropy(f.logit, cfg_.label, out.clamped);
    std::vector<T> sq(k.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = k.values()[i] * k.values()[i];
    out.value = ce + T(0.5) * alpha_ * det_sum<T>(sq);
    return out;
}

template <class T>
LossValue<T> Cnn1Model<T>::loss(const Field2D<T>& k) const {
    return loss(forward_pass(k), k);
}

template <class T>
Field2D<T> Cnn1Model<T>::grad(const Forward& f, const Field2D<T>& k) const {
    Field2D<T> g(f.preact.rows(), f.preact.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
        // swish_prime(x, beta) with the logistic taken from the forward pass.
        const T t = beta_ * f.preact.values()[i], s = f.gate.values()[i];
        g.storage()[i] = s + t * s * (T(1) - s);
    }
    Field2D<T> t = corr_.taps(g, cfg_.window, cfg_.window, origin());
    const T a = output_residual(f.logit, cfg_.label);
    for (std::size_t i = 0; i < t.size(); ++i) t.storage()[i] = a * t.storage()[i] + alpha_ * k.values()[i];
    return t;
}

template <class T>
Field2D<T> Cnn1Model<T>::grad(const Field2D<T>& k) const {
    return grad(forward_pass(k), k);
}

template <class T>
StepResult<T> Cnn1Model<T>::gd_step(const Field2D<T>& k) const {
    const Field2D<T> g = grad(k);
    StepResult<T> r{k, false};
    for (std::size_t i = 0; i < k.size(); ++i) r.kernel.storage()[i] = k.values()[i] - dt_ * g.values()[i];
    r.diverged = kernel_diverged(r.kernel);
    return r;
}

template <class T>
Field2D<T> Cnn1Model<T>::linear_rhs(const Field2D<T>& k, T a) const {
    const Field2D<T> b = corr_.correlate(k, origin());
    Field2D<T> t = corr_.taps(b, cfg_.window, cfg_.window, origin());
    const T h = a / T(2);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.storage()[i] = -h * (ones_taps_.values()[i] + beta_ * t.storage()[i]) - alpha_ * k.values()[i];
    return t;
}

template <class T>
Field2D<T> Cnn1Model<T>::linear_step(const Field2D<T>& k, T a) const {
    Field2D<T> r = linear_rhs(k, a);
    for (std::size_t i = 0; i < r.size(); ++i) r.storage()[i] = k.values()[i] + dt_ * r.storage()[i];
    return r;
}

template <class T>
Field2D<T> Cnn1Model<T>::linear_rhs_nonconstant_a(const Field2D<T>& k) const {
    const T s0 = T(0.5), sp0 = T(0.25);
    const Field2D<T> b = corr_.correlate(k, origin());
    Field2D<T> t = corr_.taps(b, cfg_.window, cfg_.window, origin());
    // sum_x (K*I)(x) = <K, ones_taps>, which is Ibar * Kbar when periodic.
    const T m = dot<T>(k.values(), ones_taps_.values());
    const T c1 = -(s0 - y_) * beta_ / T(2);
    const T c2 = sp0 * m / T(4);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.storage()[i] = c1 * t.storage()[i] - c2 * ones_taps_.values()[i] - alpha_ * k.values()[i];
    return t;
}

template <class T>
RegimeMap Cnn1Model<T>::regime_classify(const Field2D<T>& k, double tau) const {
    if (!(tau > 0)) throw std::invalid_argument("regime_classify: tau must be > 0");
    const Field2D<T> p = corr_.correlate(k, origin());
    RegimeMap m{p.rows(), p.cols(), std::vector<Regime>(p.size()), {}};
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double v = static_cast<double>(beta_) * static_cast<double>(p.values()[i]);
        const Regime r = v > tau ? Regime::Activated : (v < -tau ? Regime::NotActivated : Regime::Transitioning);
        m.labels[i] = r;
        ++m.counts[static_cast<std::size_t>(r)];
    }
    return m;
}

std::vector<double> image_power_spectrum(const Field2D<double>& image) {
    const auto s = dft2(image);
    std::vector<double> p(s.coeffs.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(s.coeffs[i]);
    return p;
}

double AmplifierSpectrum::max_abs() const { return rlab::max_abs<double>(values); }

AmplifierSpectrum amplifier(const Cnn1Config& cfg, double a) {
    const auto p = image_power_spectrum(cfg.image);
    AmplifierSpectrum out{cfg.image.rows(), cfg.image.cols(), std::vector<double>(p.size())};
    for (std::size_t i = 0; i < p.size(); ++i)
        out.values[i] = 1.0 - cfg.dt * (cfg.alpha + 0.5 * a * cfg.beta * p[i]);
    return out;
}

double StabilityBounds::dt_max(double alpha) const {
    if (!(alpha + shift_min > 0)) return 0.0;
    const double z = alpha + shift_max;
    return scheme == Scheme::GradientDescent ? 2.0 / z : 2.0 / std::sqrt(3.0 * z);
}

StabilityBounds stability_bounds(const Cnn1Config& cfg, double a) {
    const auto p = image_power_spectrum(cfg.image);
    const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    const double c_lo = 0.5 * a * cfg.beta * *lo, c_hi = 0.5 * a * cfg.beta * *hi;
    StabilityBounds b;
    b.dt = cfg.dt;
    b.shift_min = std::min(c_lo, c_hi);
    b.shift_max = std::max(c_lo, c_hi);
    b.alpha_min = -b.shift_min;
    b.alpha_max = 2.0 / cfg.dt - b.shift_max;
    return b;
}

StabilityBounds regime_bounds(const Cnn1Config& cfg, Regime regime, double a) {
    if (regime == Regime::Transitioning) return stability_bounds(cfg, a);
    StabilityBounds b;
    b.regime = regime;
    b.dt = cfg.dt;
    if (regime == Regime::Activated) {
        const double ibar = det_sum<double>(cfg.image.values());
        b.shift_min = b.shift_max = ibar * ibar / 8.0;
    }
    b.alpha_min = -b.shift_min;
    b.alpha_max = 2.0 / cfg.dt - b.shift_max;
    return b;
}

Field2D<double> random_kernel(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Field2D<double> k(rows, cols);
    for (auto& v : k.storage()) v = n(rng);
    return k;
}

template <class T>
LinearFlow<T>::LinearFlow(const Cnn1Config& cfg, double a)
    : w_(cfg.window),
      pr_(next_pow2(2 * cfg.window - 1)),
      pc_(next_pow2(2 * cfg.window - 1)),
      a_(a),
      beta_(static_cast<T>(cfg.beta)),
      alpha_(static_cast<T>(cfg.alpha)),
      dt_(static_cast<T>(cfg.dt)) {
    cfg.validate();
    if (cfg.boundary != Boundary::Periodic) throw std::invalid_argument("LinearFlow: periodic boundary only");
    ibar_ = static_cast<T>(det_sum<double>(cfg.image.values()));
    // Autocorrelation C(d) = sum_x I(x) I(x+d) = idft(|I^|^2).
    const auto p = image_power_spectrum(cfg.image);
    const std::size_t H = cfg.image.rows(), W = cfg.image.cols();
    Spectrum2D<double> ps{H, W, std::vector<std::complex<double>>(p.begin(), p.end())};
    const Field2D<double> c = idft2(ps);
    Field2D<double> cs(pr_, pc_);
    const auto wi = static_cast<std::ptrdiff_t>(w_);
    auto wrap = [](std::ptrdiff_t i, std::size_t n) {
        const auto m = static_cast<std::ptrdiff_t>(n);
        return static_cast<std::size_t>(((i % m) + m) % m);
    };
    for (std::ptrdiff_t dr = 1 - wi; dr < wi; ++dr)
        for (std::ptrdiff_t dc = 1 - wi; dc < wi; ++dc) cs(wrap(dr, pr_), wrap(dc, pc_)) = c(wrap(dr, H), wrap(dc, W));
    const auto spec = rdft2(cs);
    kernel_spectrum_.resize(spec.coeffs.size());
    for (std::size_t i = 0; i < spec.coeffs.size(); ++i)
        kernel_spectrum_[i] = {static_cast<T>(spec.coeffs[i].real()), static_cast<T>(spec.coeffs[i].imag())};
}

template <class T>
Field2D<T> LinearFlow<T>::autocorr_apply(const Field2D<T>& k) const {
    Field2D<T> buf(pr_, pc_);
    for (std::size_t r = 0; r < w_; ++r)
        for (std::size_t c = 0; c < w_; ++c) buf(r, c) = k(r, c);
    HalfSpectrum<T> s = rdft2(buf);
    for (std::size_t i = 0; i < s.coeffs.size(); ++i) {
        const auto x = s.coeffs[i], y = kernel_spectrum_[i];
        s.coeffs[i] = {x.real() * y.real() - x.imag() * y.imag(), x.real() * y.imag() + x.imag() * y.real()};
    }
    const Field2D<T> full = irdft2(s);
    Field2D<T> out(w_, w_);
    for (std::size_t r = 0; r < w_; ++r)
        for (std::size_t c = 0; c < w_; ++c) out(r, c) = full(r, c);
    return out;
}

template <class T>
Field2D<T> LinearFlow<T>::rhs(const Field2D<T>& k, double* energy) const {
    if (k.rows() != w_ || k.cols() != w_) throw std::invalid_argument("LinearFlow: kernel shape mismatch");
    Field2D<T> ck = autocorr_apply(k);
    const T h = static_cast<T>(a_) / T(2);
    if (energy) {
        const T kbar = det_sum<T>(k.values());
        const T kck = dot<T>(k.values(), ck.values());
        const T kk = dot<T>(k.values(), k.values());
        *energy = static_cast<double>(h * ibar_ * kbar + h * beta_ * kck / T(2) + alpha_ * kk / T(2));
    }
    for (std::size_t i = 0; i < ck.size(); ++i)
        ck.storage()[i] = -h * (ibar_ + beta_ * ck.storage()[i]) - alpha_ * k.values()[i];
    return ck;
}

template <class T>
Field2D<T> LinearFlow<T>::step(const Field2D<T>& k) const {
    Field2D<T> r = rhs(k);
    for (std::size_t i = 0; i < r.size(); ++i) r.storage()[i] = k.values()[i] + dt_ * r.storage()[i];
    return r;
}

template <class T>
double Cnn1System<T>::evaluate(std::span<const T> theta, std::span<T> grad) const {
    const std::size_t w = model_.window();
    Field2D<T> k(w, w);
    std::copy(theta.begin(), theta.end(), k.storage().begin());
    const auto f = model_.forward_pass(k);
    const auto g = model_.grad(f, k);
    std::copy(g.values().begin(), g.values().end(), grad.begin());
    return static_cast<double>(model_.loss(f, k).value);
}

template <class T>
double LinearFlowSystem<T>::evaluate(std::span<const T> theta, std::span<T> grad) const {
    Field2D<T> k(w_, w_);
    std::copy(theta.begin(), theta.end(), k.storage().begin());
    double q = 0;
    const auto r = flow_.rhs(k, &q);
    for (std::size_t i = 0; i < r.size(); ++i) grad[i] = -r.values()[i];
    return q;
}

template class Cnn1Model<float>;
template class Cnn1Model<double>;
template class LinearFlow<float>;
template class LinearFlow<double>;
template class Cnn1System<float>;
template class Cnn1System<double>;
template class LinearFlowSystem<float>;
template class LinearFlowSystem<double>;

}  // namespace rlab
