#include "doctest.h"
#include "rlab/nesterov.hpp"

#include <cmath>

using namespace rlab;

namespace {

/// L = (1/2) sum lambda_i x_i^2.
class Diagonal final : public GradientSystem<double> {
public:
    explicit Diagonal(std::vector<double> lambda) : lambda_(std::move(lambda)) {}
    std::size_t dimension() const override { return lambda_.size(); }
    double evaluate(std::span<const double> x, std::span<double> g) const override {
        double l = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            g[i] = lambda_[i] * x[i];
            l += 0.5 * lambda_[i] * x[i] * x[i];
        }
        return l;
    }

private:
    std::vector<double> lambda_;
};

Field2D<double> checkerboard(std::size_t n) {
    Field2D<double> f(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) f(r, c) = ((r + c) % 2 == 0) ? 1.0 : -1.0;
    return f;
}

NesterovConfig checker_config(double mu, double dt, std::size_t window) {
    NesterovConfig cfg;
    cfg.mu = mu;
    cfg.dt = dt;
    cfg.base.image = checkerboard(256);
    cfg.base.window = window;
    return cfg;
}

/// Runs the scalar recursion x_{n+1} = c((1+mu) x_n - mu x_{n-1}) for
/// `steps` steps and returns max |x|.
double scalar_sup(double z, double h, double mu, int steps) {
    const double c = 1.0 - h * z;
    double x = 1.0, xp = 1.0, sup = 1.0;
    for (int n = 0; n < steps; ++n) {
        const double nx = c * ((1 + mu) * x - mu * xp);
        xp = x;
        x = nx;
        sup = std::max(sup, std::abs(x));
    }
    return sup;
}

}  // namespace

TEST_CASE("mu and damping are consistent") {
    NesterovConfig cfg;
    cfg.dt = 1e-3;
    for (double mu : {0.0, 0.5, 0.9, 0.99}) {
        cfg.mu = mu;
        const double d = cfg.damping();
        CHECK((2 - d * cfg.dt) / (2 + d * cfg.dt) == doctest::Approx(mu).epsilon(1e-12));
        CHECK(cfg.gradient_step() == doctest::Approx(2 * cfg.dt * cfg.dt / (2 + d * cfg.dt)).epsilon(1e-14));
        CHECK(cfg.gradient_step() == doctest::Approx(cfg.dt * cfg.dt * (1 + mu) / 2).epsilon(1e-12));
    }
    cfg.mu = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.mu = -0.1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("zero gradient at rest leaves the iterate unchanged") {
    Diagonal sys({0.0, 0.0, 0.0});
    std::vector<double> k{1.0, -2.0, 3.0};
    auto s = nesterov_step<double>(sys, k, k, 0.9, 0.1);
    CHECK(s.next == k);
    CHECK(s.lookahead == k);
    CHECK_FALSE(s.diverged);
}

TEST_CASE("mu = 0 is plain gradient descent with the derived step") {
    Diagonal sys({2.0, 5.0});
    NesterovConfig cfg;
    cfg.mu = 0.0;
    cfg.dt = 0.3;
    const double h = cfg.gradient_step();
    CHECK(h == doctest::Approx(2 * 0.09 / (2 + cfg.damping() * 0.3)));
    std::vector<double> k{1.0, 1.0}, prev{7.0, -3.0};
    auto s = nesterov_step(sys, std::span<const double>(k), std::span<const double>(prev), cfg);
    CHECK(s.next[0] == doctest::Approx(1.0 - h * 2.0).epsilon(1e-15));
    CHECK(s.next[1] == doctest::Approx(1.0 - h * 5.0).epsilon(1e-15));
}

TEST_CASE("quadratic iterates match the scalar two-term recursion") {
    const double lambda = 3.0, mu = 0.9, h = 0.2;
    Diagonal sys({lambda});
    std::vector<double> k{1.0}, prev{1.0};
    double x = 1.0, xp = 1.0;
    const double c = 1.0 - h * lambda;
    for (int n = 0; n < 200; ++n) {
        auto s = nesterov_step<double>(sys, k, prev, mu, h);
        prev = k;
        k = s.next;
        const double nx = c * ((1 + mu) * x - mu * xp);
        xp = x;
        x = nx;
        REQUIRE(std::abs(k[0] - x) <= 1e-12 * std::max(1.0, std::abs(x)));
    }
}

TEST_CASE("divergence is flagged") {
    Diagonal sys({1e14});
    std::vector<double> k{1.0};
    auto s = nesterov_step<double>(sys, k, k, 0.5, 1.0);
    CHECK(s.diverged);
}

TEST_CASE("gradient amplifier") {
    NesterovConfig cfg = checker_config(0.9, 1e-4, 32);
    cfg.base.alpha = 0.0;
    auto z0 = gradient_amplifier(cfg.base, 0.0);
    for (double v : z0) CHECK(v == 0.0);

    cfg.base.alpha = 123.0;
    auto z = gradient_amplifier(cfg.base, -0.5);
    const std::size_t nyq = 128 * 256 + 128;
    CHECK(z[nyq] == doctest::Approx(123.0 - 0.25 * 65536.0 * 65536.0));
    CHECK(z[nyq] == doctest::Approx(123.0 - 1.073741824e9));

    // Gradient-descent amplifier is 1 - dt z.
    cfg.base.dt = 1e-9;
    auto amp = amplifier(cfg.base, -0.5);
    REQUIRE(amp.values.size() == z.size());
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(amp.values[i] == doctest::Approx(1.0 - 1e-9 * z[i]));
}

TEST_CASE("analytic bounds") {
    NesterovConfig cfg = checker_config(0.9, 1e-4, 256);
    auto b = nesterov_bounds(cfg, -0.5);
    CHECK(b.alpha_max == doctest::Approx(4.0 / 3.0 * 1e8).epsilon(1e-9));
    auto gd = stability_bounds(cfg.base, -0.5);
    CHECK(b.alpha_min == gd.alpha_min);
    CHECK(b.alpha_min == doctest::Approx(1.073741824e9));
    CHECK(b.scheme == Scheme::Nesterov);

    // dt bound: 2 / sqrt(3 z_max).
    const double alpha = 2e9;
    const double zmax = alpha;  // min|I^|^2 = 0 on the checkerboard
    CHECK(b.dt_max(alpha) == doctest::Approx(2.0 / std::sqrt(3.0 * zmax)));

    // More generous than gradient descent whenever dt < 2/3.
    for (double dt : {1e-4, 1e-2, 0.5, 0.66}) {
        cfg.dt = dt;
        cfg.base.dt = dt;
        CHECK(nesterov_bounds(cfg, -0.5).alpha_max > stability_bounds(cfg.base, -0.5).alpha_max);
    }
}

TEST_CASE("exact recursion window tends to the analytic one as mu -> 1") {
    NesterovConfig cfg = checker_config(0.9, 1e-4, 256);
    CHECK(nesterov_exact_bounds(cfg, -0.5).alpha_max == doctest::Approx(4.0 / 2.8 * 1e8));
    cfg.mu = 0.5;
    CHECK(nesterov_exact_bounds(cfg, -0.5).alpha_max == doctest::Approx(2e8));
    cfg.mu = 0.999999;
    CHECK(nesterov_exact_bounds(cfg, -0.5).alpha_max ==
          doctest::Approx(nesterov_bounds(cfg, -0.5).alpha_max).epsilon(1e-5));
}

TEST_CASE("exact window agrees with the scalar recursion") {
    // Brute-force the scalar mode: stable just inside, unstable just outside.
    for (double mu : {0.0, 0.3, 0.5, 0.9, 0.97}) {
        const double dt = 1e-2;
        NesterovConfig cfg;
        cfg.mu = mu;
        cfg.dt = dt;
        const double h = cfg.gradient_step();
        const double zlim = 4.0 / ((1 + 2 * mu) * dt * dt);
        CHECK(scalar_sup(zlim * 0.99, h, mu, 20000) < 1e3);
        CHECK(scalar_sup(zlim * 1.01, h, mu, 20000) > 1e6);
        CHECK(scalar_sup(zlim * 0.01, h, mu, 20000) < 10.0);
        CHECK(scalar_sup(-zlim * 0.01, h, mu, 20000) > 1e6);
    }
}
