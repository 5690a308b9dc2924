#pragma once

#include "rlab/numkit.hpp"

#include <cstdint>
#include <vector>

namespace rlab {

struct HeatConfig {
    double kappa = 1.0;
    double dx = 1.0;
    double dt = 0.4;
    std::size_t steps = 2000;
    Field1D<double> u0;
    double bc_left = 0.0, bc_right = 0.0;
    /// Wraps the stencil around instead of pinning the endpoints.
    bool periodic = false;

    double ratio() const { return kappa * dt / (dx * dx); }
    void validate() const;
};

/// One forward-Euler step of u_t = kappa u_xx with the three-point stencil.
Field1D<double> heat_step(const Field1D<double>& u, const HeatConfig& cfg);

/// Growth factor of the explicit scheme for a Fourier mode of angular
/// frequency omega: 1 - (2 kappa dt / dx^2)(1 - cos(omega dx)).
double heat_amplifier(double omega, const HeatConfig& cfg);

/// Largest stable explicit step, dx^2 / (2 kappa).
double heat_cfl_max_dt(const HeatConfig& cfg);

/// Symmetric triangle on n points peaking at `peak` in the middle, zero at
/// both ends.
Field1D<double> triangle_profile(std::size_t n, double dx, double peak);

struct HeatRun {
    std::vector<double> sup_norm;  ///< sup|u| before each step, then final
    std::vector<double> energy;    ///< (kappa/2) sum (u_x)^2 dx, same indexing
    Field1D<double> final_u;
    bool diverged = false;         ///< stopped early on a non-finite value or sup|u| > 1e12
};

HeatRun run_heat(const HeatConfig& cfg);

struct BeltramiConfig {
    double delta = 0.01;
    double lambda = 1.0;
    double dx = 1.0;
    double dt = 0.0;  ///< 0 selects the strict CFL step
    std::size_t steps = 10000;
    Field1D<double> target;  ///< I
    Field1D<double> u0;

    void validate() const;
};

/// Riemann sum of (lambda/2)(I-u)^2 + sqrt(u_x^2 + delta^2) with forward
/// differences; the last point carries no gradient term.
double beltrami_loss(const Field1D<double>& u, const BeltramiConfig& cfg);

/// Explicit step of u_t = (u_x / sqrt(u_x^2 + delta^2))_x + lambda (I - u)
/// with fluxes on the half points and zero flux through both ends. This is
/// exactly u - (dt/dx) * grad(beltrami_loss).
Field1D<double> beltrami_step(const Field1D<double>& u, const BeltramiConfig& cfg);

struct BeltramiCfl {
    Field1D<double> per_point;    ///< 1 / (lambda + 2 kappa / dx^2), kappa = (u_x^2 + delta^2)^(-1/2)
    double strict_dt = 0.0;       ///< 1 / (lambda + 2 / (delta dx^2)), worst case over all slopes
    double strict_dt_small_lambda = 0.0;  ///< delta dx^2 / 2
};

BeltramiCfl beltrami_local_cfl(const Field1D<double>& u, const BeltramiConfig& cfg);

/// Unit step at the midpoint plus uniform noise in [-noise, noise].
Field1D<double> noisy_step_signal(std::size_t n, double noise, std::uint64_t seed, double dx = 1.0);

struct BeltramiRun {
    std::vector<double> loss;      ///< loss before each step, then final
    std::vector<double> sup_norm;
    std::vector<double> step_inf;  ///< |u_{n+1} - u_n|_inf / dt, i.e. the update direction
    Field1D<double> final_u;
    bool diverged = false;
};

BeltramiRun run_beltrami(const BeltramiConfig& cfg);

}  // namespace rlab
