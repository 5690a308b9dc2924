#pragma once

#include "rlab/cnn1.hpp"
#include "rlab/gradient_system.hpp"

#include <vector>

namespace rlab {

/// Nesterov momentum as the semi-implicit discretization of
/// K_tt + d K_t = -grad L. The momentum coefficient mu = (2 - d dt)/(2 + d dt)
/// is the user-facing knob; the damping d is derived from it.
struct NesterovConfig {
    double mu = 0.9;
    double dt = 1e-4;
    Cnn1Config base;

    void validate() const;
    double damping() const;  ///< d = 2 (1 - mu) / ((1 + mu) dt)
    /// Step applied to the look-ahead gradient, 2 dt^2 / (2 + d dt) = dt^2 (1 + mu) / 2.
    double gradient_step() const;
};

template <class T>
struct NesterovStep {
    std::vector<T> next;
    std::vector<T> lookahead;  ///< V^n
    double loss_at_lookahead = 0.0;
    bool diverged = false;
};

/// V = K_n + mu (K_n - K_prev);  K_{n+1} = V - h grad L(V), all in precision T.
/// Pass K_prev = K_n on the first step.
template <class T>
NesterovStep<T> nesterov_step(const GradientSystem<T>& sys, std::span<const T> k, std::span<const T> k_prev,
                              T mu, T h);

template <class T>
NesterovStep<T> nesterov_step(const GradientSystem<T>& sys, std::span<const T> k, std::span<const T> k_prev,
                              const NesterovConfig& cfg) {
    return nesterov_step(sys, k, k_prev, static_cast<T>(cfg.mu), static_cast<T>(cfg.gradient_step()));
}

/// z(w) = alpha + (1/2) a beta |I^(w)|^2 on the image's frequency grid.
std::vector<double> gradient_amplifier(const Cnn1Config& cfg, double a);

/// alpha_max = 4/(3 dt^2) - max c, alpha_min = -min c with c = a beta |I^|^2 / 2,
/// and dt_max(alpha) = 2 / sqrt(3 z_max). This is the large-momentum limit.
StabilityBounds nesterov_bounds(const NesterovConfig& cfg, double a);

/// Exact stability window of the two-step recursion at the configured mu:
/// every mode needs 0 < z h < 2 (1 + mu) / (1 + 2 mu), i.e.
/// 0 < z dt^2 < 4 / (1 + 2 mu). Tends to nesterov_bounds as mu -> 1.
StabilityBounds nesterov_exact_bounds(const NesterovConfig& cfg, double a);

}  // namespace rlab
