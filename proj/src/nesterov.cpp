#include "rlab/nesterov.hpp"

#include <algorithm>
#include <cmath>

namespace rlab {

void NesterovConfig::validate() const {
    if (!(mu >= 0 && mu < 1)) throw std::invalid_argument("nesterov: mu must be in [0, 1)");
    if (!(dt > 0)) throw std::invalid_argument("nesterov: dt must be > 0");
}

double NesterovConfig::damping() const { return 2.0 * (1.0 - mu) / ((1.0 + mu) * dt); }

double NesterovConfig::gradient_step() const { return 2.0 * dt * dt / (2.0 + damping() * dt); }

template <class T>
NesterovStep<T> nesterov_step(const GradientSystem<T>& sys, std::span<const T> k, std::span<const T> k_prev,
                              T mu, T h) {
    const std::size_t n = k.size();
    NesterovStep<T> out;
    out.lookahead.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.lookahead[i] = k[i] + mu * (k[i] - k_prev[i]);
    std::vector<T> g(n);
    out.loss_at_lookahead = sys.evaluate(out.lookahead, g);
    out.next.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.next[i] = out.lookahead[i] - h * g[i];
        if (!std::isfinite(out.next[i]) || std::abs(out.next[i]) > T(1e12)) out.diverged = true;
    }
    return out;
}

std::vector<double> gradient_amplifier(const Cnn1Config& cfg, double a) {
    auto p = image_power_spectrum(cfg.image);
    for (double& v : p) v = cfg.alpha + 0.5 * a * cfg.beta * v;
    return p;
}

namespace {

StabilityBounds nesterov_window(const NesterovConfig& cfg, double a, double z_dt2_limit) {
    cfg.validate();
    StabilityBounds b = stability_bounds(cfg.base, a);
    b.scheme = Scheme::Nesterov;
    b.dt = cfg.dt;
    b.alpha_max = z_dt2_limit / (cfg.dt * cfg.dt) - b.shift_max;
    return b;
}

}  // namespace

StabilityBounds nesterov_bounds(const NesterovConfig& cfg, double a) { return nesterov_window(cfg, a, 4.0 / 3.0); }

StabilityBounds nesterov_exact_bounds(const NesterovConfig& cfg, double a) {
    return nesterov_window(cfg, a, 4.0 / (1.0 + 2.0 * cfg.mu));
}

template NesterovStep<float> nesterov_step<float>(const GradientSystem<float>&, std::span<const float>,
                                                  std::span<const float>, float, float);
template NesterovStep<double> nesterov_step<double>(const GradientSystem<double>&, std::span<const double>,
                                                    std::span<const double>, double, double);

}  // namespace rlab
