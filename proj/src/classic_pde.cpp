#include "rlab/classic_pde.hpp"

#include <cmath>
#include <random>

namespace rlab {

namespace {

double sup_abs(const std::vector<double>& v) { return max_abs<double>(v); }

bool blew_up(double s) { return !std::isfinite(s) || s > 1e12; }

}  // namespace

void HeatConfig::validate() const {
    if (!(kappa > 0)) throw std::invalid_argument("heat: kappa must be > 0");
    if (!(dx > 0)) throw std::invalid_argument("heat: dx must be > 0");
    if (!(dt > 0)) throw std::invalid_argument("heat: dt must be > 0");
    if (u0.size() < 3) throw std::invalid_argument("heat: need at least 3 grid points");
}

Field1D<double> heat_step(const Field1D<double>& u, const HeatConfig& cfg) {
    const std::size_t n = u.size();
    const double r = cfg.kappa * cfg.dt / (cfg.dx * cfg.dx);
    Field1D<double> out{std::vector<double>(n), u.dx};
    if (cfg.periodic) {
        for (std::size_t i = 0; i < n; ++i) {
            const double l = u.values[(i + n - 1) % n], c = u.values[i], rr = u.values[(i + 1) % n];
            out.values[i] = c + r * (l - 2.0 * c + rr);
        }
        return out;
    }
    out.values.front() = cfg.bc_left;
    out.values.back() = cfg.bc_right;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double l = u.values[i - 1], c = u.values[i], rr = u.values[i + 1];
        out.values[i] = c + r * (l - 2.0 * c + rr);
    }
    return out;
}

double heat_amplifier(double omega, const HeatConfig& cfg) {
    return 1.0 - (2.0 * cfg.kappa * cfg.dt / (cfg.dx * cfg.dx)) * (1.0 - std::cos(omega * cfg.dx));
}

double heat_cfl_max_dt(const HeatConfig& cfg) { return cfg.dx * cfg.dx / (2.0 * cfg.kappa); }

Field1D<double> triangle_profile(std::size_t n, double dx, double peak) {
    Field1D<double> f{std::vector<double>(n), dx};
    const double mid = static_cast<double>(n - 1) / 2.0;
    for (std::size_t i = 0; i < n; ++i) f.values[i] = peak * (1.0 - std::abs(static_cast<double>(i) - mid) / mid);
    return f;
}

namespace {

double heat_energy(const Field1D<double>& u, const HeatConfig& cfg) {
    std::vector<double> terms;
    const std::size_t n = u.size();
    const std::size_t m = cfg.periodic ? n : n - 1;
    terms.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double d = (u.values[(i + 1) % n] - u.values[i]) / cfg.dx;
        terms.push_back(0.5 * cfg.kappa * d * d * cfg.dx);
    }
    return det_sum<double>(terms);
}

}  // namespace

HeatRun run_heat(const HeatConfig& cfg) {
    cfg.validate();
    HeatRun run;
    Field1D<double> u = cfg.u0;
    for (std::size_t n = 0; n < cfg.steps; ++n) {
        run.sup_norm.push_back(sup_abs(u.values));
        run.energy.push_back(heat_energy(u, cfg));
        if (blew_up(run.sup_norm.back())) {
            run.diverged = true;
            break;
        }
        u = heat_step(u, cfg);
    }
    if (!run.diverged) {
        run.sup_norm.push_back(sup_abs(u.values));
        run.energy.push_back(heat_energy(u, cfg));
        run.diverged = blew_up(run.sup_norm.back());
    }
    run.final_u = std::move(u);
    return run;
}

void BeltramiConfig::validate() const {
    if (!(delta > 0)) throw std::invalid_argument("beltrami: delta must be > 0");
    if (!(lambda >= 0)) throw std::invalid_argument("beltrami: lambda must be >= 0");
    if (!(dx > 0)) throw std::invalid_argument("beltrami: dx must be > 0");
    if (!(dt >= 0)) throw std::invalid_argument("beltrami: dt must be >= 0");
    if (target.size() != u0.size()) throw std::invalid_argument("beltrami: target and u0 lengths differ");
    if (u0.size() < 2) throw std::invalid_argument("beltrami: need at least 2 grid points");
}

double beltrami_loss(const Field1D<double>& u, const BeltramiConfig& cfg) {
    const std::size_t n = u.size();
    std::vector<double> terms;
    terms.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const double e = cfg.target.values[i] - u.values[i];
        terms.push_back(0.5 * cfg.lambda * e * e * cfg.dx);
        if (i + 1 < n) {
            const double d = (u.values[i + 1] - u.values[i]) / cfg.dx;
            terms.push_back(std::sqrt(d * d + cfg.delta * cfg.delta) * cfg.dx);
        }
    }
    return det_sum<double>(terms);
}

Field1D<double> beltrami_step(const Field1D<double>& u, const BeltramiConfig& cfg) {
    const std::size_t n = u.size();
    // q[i] sits at x_{i+1/2}; the two end fluxes are zero.
    std::vector<double> q(n + 1, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double d = (u.values[i + 1] - u.values[i]) / cfg.dx;
        q[i + 1] = d / std::sqrt(d * d + cfg.delta * cfg.delta);
    }
    Field1D<double> out{std::vector<double>(n), u.dx};
    for (std::size_t i = 0; i < n; ++i) {
        const double div = (q[i + 1] - q[i]) / cfg.dx;
        out.values[i] = u.values[i] + cfg.dt * (div + cfg.lambda * (cfg.target.values[i] - u.values[i]));
    }
    return out;
}

BeltramiCfl beltrami_local_cfl(const Field1D<double>& u, const BeltramiConfig& cfg) {
    const std::size_t n = u.size();
    BeltramiCfl out;
    out.per_point = Field1D<double>{std::vector<double>(n), u.dx};
    const double dx2 = cfg.dx * cfg.dx;
    for (std::size_t i = 0; i < n; ++i) {
        // Slope at the point: forward difference, backward at the last point.
        const double d = i + 1 < n ? (u.values[i + 1] - u.values[i]) / cfg.dx
                                   : (u.values[i] - u.values[i - 1]) / cfg.dx;
        const double kappa = 1.0 / std::sqrt(d * d + cfg.delta * cfg.delta);
        out.per_point.values[i] = 1.0 / (cfg.lambda + 2.0 * kappa / dx2);
    }
    out.strict_dt = 1.0 / (cfg.lambda + 2.0 / (cfg.delta * dx2));
    out.strict_dt_small_lambda = dx2 * cfg.delta / 2.0;
    return out;
}

Field1D<double> noisy_step_signal(std::size_t n, double noise, std::uint64_t seed, double dx) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-noise, noise);
    Field1D<double> f{std::vector<double>(n), dx};
    for (std::size_t i = 0; i < n; ++i) f.values[i] = (i >= n / 2 ? 1.0 : 0.0) + u(rng);
    return f;
}

BeltramiRun run_beltrami(const BeltramiConfig& cfg_in) {
    cfg_in.validate();
    BeltramiConfig cfg = cfg_in;
    if (cfg.dt == 0.0) cfg.dt = beltrami_local_cfl(cfg.u0, cfg).strict_dt;
    BeltramiRun run;
    Field1D<double> u = cfg.u0;
    for (std::size_t n = 0; n < cfg.steps; ++n) {
        run.loss.push_back(beltrami_loss(u, cfg));
        run.sup_norm.push_back(sup_abs(u.values));
        if (blew_up(run.sup_norm.back()) || !std::isfinite(run.loss.back())) {
            run.diverged = true;
            run.step_inf.push_back(std::numeric_limits<double>::quiet_NaN());
            break;
        }
        Field1D<double> next = beltrami_step(u, cfg);
        double m = 0;
        for (std::size_t i = 0; i < u.size(); ++i) m = std::max(m, std::abs(next.values[i] - u.values[i]));
        run.step_inf.push_back(m / cfg.dt);
        u = std::move(next);
    }
    if (!run.diverged) {
        run.loss.push_back(beltrami_loss(u, cfg));
        run.sup_norm.push_back(sup_abs(u.values));
        run.step_inf.push_back(std::numeric_limits<double>::quiet_NaN());
        run.diverged = blew_up(run.sup_norm.back()) || !std::isfinite(run.loss.back());
    }
    run.final_u = std::move(u);
    return run;
}

}  // namespace rlab
