#include "doctest.h"
#include "rlab/multilayer.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace rlab;

namespace {

Field2D<double> uniform_field(std::size_t r, std::size_t c, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Field2D<double> f(r, c);
    for (auto& v : f.storage()) v = u(rng);
    return f;
}

template <class T>
bool bit_equal(const Field2D<T>& a, const Field2D<T>& b) {
    return a.size() == b.size() && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(T)) == 0;
}

/// Literal-loop forward of a kernel stack in long double.
struct NaiveStack {
    std::vector<Field2D<double>> kernels;
    double beta;
    bool periodic;

    Field2D<long double> layer(const Field2D<double>& k, const Field2D<long double>& in) const {
        const long R = static_cast<long>(in.rows()), C = static_cast<long>(in.cols());
        const long o = static_cast<long>(k.rows() / 2);
        Field2D<long double> out(in.rows(), in.cols());
        for (long r = 0; r < R; ++r)
            for (long c = 0; c < C; ++c) {
                long double p = 0;
                for (long i = 0; i < static_cast<long>(k.rows()); ++i)
                    for (long j = 0; j < static_cast<long>(k.cols()); ++j) {
                        long rr = r + i - o, cc = c + j - o;
                        if (periodic) {
                            rr = (rr % R + R) % R;
                            cc = (cc % C + C) % C;
                        } else if (rr < 0 || cc < 0 || rr >= R || cc >= C) {
                            continue;
                        }
                        p += static_cast<long double>(k(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) *
                             in(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
                    }
                out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = p / (1.0L + std::exp(-beta * p));
            }
        return out;
    }

    long double yhat(const Field2D<double>& image) const {
        Field2D<long double> x(image.rows(), image.cols());
        for (std::size_t i = 0; i < x.size(); ++i) x.storage()[i] = image.values()[i];
        for (const auto& k : kernels) x = layer(k, x);
        long double s = 0;
        for (auto v : x.values()) s += v;
        return 1.0L / (1.0L + std::exp(-s));
    }
};

MlcnnConfig config(std::vector<std::size_t> sizes, Boundary b, double alpha = 0.0, int label = 1) {
    MlcnnConfig c;
    c.kernel_sizes = std::move(sizes);
    c.boundary = b;
    c.alpha = alpha;
    c.label = label;
    return c;
}

template <class T>
void check_single_layer_matches_cnn1(Boundary b, std::size_t n, std::size_t w) {
    Cnn1Config cc;
    cc.image = uniform_field(n, n, -1, 1, 3);
    cc.window = w;
    cc.alpha = 0.7;
    cc.beta = 1.3;
    cc.boundary = b;
    const Cnn1Model<T> model(cc);
    const Field2D<T> k = random_kernel(w, w, 9).cast<T>();

    MlcnnConfig mc = config({w}, b, 0.7);
    mc.beta = 1.3;
    LayerStack<T> s;
    s.kernels = {k};
    const Field2D<T> img = cc.image.cast<T>();
    const auto g = ml_grad(s, mc, img);
    const auto f = model.forward_pass(k);
    CHECK(s.yhat == f.yhat);
    CHECK(s.logit == f.logit);
    CHECK(bit_equal(s.preacts[0], f.preact));
    CHECK(ml_loss(s, mc).value == model.loss(k).value);
    CHECK(bit_equal(g[0], model.grad(k)));
}

/// Central-difference relative L2 error of the stacked gradient.
double fd_error(const MlcnnConfig& cfg, const Field2D<double>& image, LayerStack<double> s) {
    const auto g = ml_grad(s, cfg, image);
    double num = 0, den = 0;
    const double h = 1e-6;
    for (std::size_t l = 0; l < s.layers(); ++l)
        for (std::size_t j = 0; j < s.kernels[l].size(); ++j) {
            LayerStack<double> p = s, m = s;
            p.kernels[l].storage()[j] += h;
            m.kernels[l].storage()[j] -= h;
            ml_forward(p, cfg, image);
            ml_forward(m, cfg, image);
            const double fd = (ml_loss(p, cfg).value - ml_loss(m, cfg).value) / (2 * h);
            const double e = fd - g[l].values()[j];
            num += e * e;
            den += fd * fd;
        }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("config validation") {
    MlcnnConfig c;
    c.kernel_sizes = {};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.kernel_sizes = {3, 0};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.kernel_sizes = {3};
    c.label = 2;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);

    LayerStack<double> s = make_stack<double>(config({3, 3}, Boundary::Periodic), 0.1, 1);
    const Field2D<double> img(8, 8, 1.0);
    CHECK_THROWS_AS(ml_forward(s, config({3}, Boundary::Periodic), img), std::invalid_argument);
    CHECK_THROWS_AS(ml_forward(s, config({3, 5}, Boundary::Periodic), img), std::invalid_argument);
    CHECK_THROWS_AS(ml_forward(s, config({3, 3}, Boundary::Periodic), Field2D<double>(2, 2)), std::invalid_argument);
}

TEST_CASE("one layer is bit-identical to cnn1") {
    check_single_layer_matches_cnn1<double>(Boundary::Periodic, 32, 8);  // transform path
    check_single_layer_matches_cnn1<double>(Boundary::Periodic, 16, 3);  // direct path
    check_single_layer_matches_cnn1<double>(Boundary::ZeroPad, 16, 5);
    check_single_layer_matches_cnn1<float>(Boundary::Periodic, 32, 8);
    check_single_layer_matches_cnn1<float>(Boundary::ZeroPad, 16, 5);
}

TEST_CASE("zero kernels give yhat one half") {
    const auto cfg = config({3, 5, 3}, Boundary::Periodic);
    LayerStack<double> s = make_stack<double>(cfg, 0.0, 1);
    CHECK(ml_forward(s, cfg, uniform_field(8, 8, -1, 1, 2)) == 0.5);
}

TEST_CASE("two layers match a naive implementation") {
    for (Boundary b : {Boundary::Periodic, Boundary::ZeroPad}) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            const auto cfg = config({3, 5}, b);
            LayerStack<double> s = make_stack<double>(cfg, 0.2, seed);
            const auto img = uniform_field(9, 11, -1, 1, seed + 100);
            NaiveStack naive{s.kernels, cfg.beta, b == Boundary::Periodic};
            CHECK(std::abs(ml_forward(s, cfg, img) - static_cast<double>(naive.yhat(img))) < 1e-12);
        }
    }
}

TEST_CASE("first-layer gradient at K1 = 0 has the closed form") {
    // P1 = 0 so I2 = 0 and r'(0) = 1/2 at both layers; the downstream field is
    // (1/2) sum K2 everywhere (periodic), so every tap of the layer-1 gradient
    // is (yhat - y) (1/2)(1/2) sum(K2) sum(I).
    const auto cfg = config({3, 3}, Boundary::Periodic);
    LayerStack<double> s = make_stack<double>(cfg, 0.5, 4);
    s.kernels[0] = Field2D<double>(3, 3, 0.0);
    const auto img = uniform_field(8, 8, 0, 1, 5);
    const auto g = ml_grad(s, cfg, img);
    double ksum = 0, isum = 0;
    for (double v : s.kernels[1].values()) ksum += v;
    for (double v : img.values()) isum += v;
    const double expected = (0.5 - 1.0) * 0.25 * ksum * isum;
    for (double v : g[0].values()) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
    for (double v : g[1].values()) CHECK(v == 0.0);
}

TEST_CASE("gradient matches finite differences on 30 random three-layer instances") {
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const Boundary b = seed % 2 ? Boundary::Periodic : Boundary::ZeroPad;
        const auto cfg = config({3, 5, 3}, b, seed % 3 ? 0.1 : 0.0, static_cast<int>(seed % 2));
        auto s = make_stack<double>(cfg, 0.25, seed);
        const auto img = uniform_field(8, 8, -1, 1, seed + 1000);
        ml_forward(s, cfg, img);
        REQUIRE_FALSE(ml_loss(s, cfg).clamped);
        const double err = fd_error(cfg, img, s);
        CHECK(err < 1e-5);
        ++checked;
    }
    CHECK(checked == 30);
}

TEST_CASE("regime jacobian") {
    const auto cfg = config({3, 3}, Boundary::Periodic);
    const auto img = uniform_field(8, 8, 0.1, 1, 6);

    LayerStack<double> z = make_stack<double>(cfg, 0.0, 1);
    ml_forward(z, cfg, img);
    auto jz = regime_jacobian(z, 0, cfg);
    for (double v : jz.regime.values()) CHECK(v == 0.5);
    for (double v : jz.exact.values()) CHECK(v == 0.5);
    CHECK(jz.regimes.count(Regime::Transitioning) == 64);

    LayerStack<double> on = make_stack<double>(cfg, 0.0, 1);
    on.kernels[0] = Field2D<double>(3, 3, 1.0);
    on.kernels[1] = Field2D<double>(3, 3, 2.0);
    ml_forward(on, cfg, img);
    auto jon = regime_jacobian(on, 0, cfg);
    for (double v : jon.regime.values()) CHECK(v == 1.0);
    CHECK(jon.max_deviation() < 1e-3);

    CHECK_THROWS_AS(regime_jacobian(on, 1, cfg), std::invalid_argument);

    // Mixed signs: scale the second kernel until every pixel is saturated, then
    // keep doubling; the gap to the regime factor shrinks monotonically to 0.
    LayerStack<double> m = make_stack<double>(cfg, 0.5, 8);
    ml_forward(m, cfg, uniform_field(8, 8, -1, 1, 7));
    double pmin = 1e300;
    for (double v : m.preacts[1].values()) pmin = std::min(pmin, std::abs(v));
    REQUIRE(pmin > 0);
    const Field2D<double> k2 = m.kernels[1];
    double last = 1e300;
    std::size_t negative = 0;
    for (int step = 0; step < 6; ++step) {
        const double sc = (3.0 / pmin) * std::pow(2.0, step);
        for (std::size_t j = 0; j < k2.size(); ++j) m.kernels[1].storage()[j] = sc * k2.values()[j];
        ml_forward(m, cfg, uniform_field(8, 8, -1, 1, 7));
        auto jm = regime_jacobian(m, 0, cfg);
        CHECK(jm.regimes.count(Regime::Transitioning) == 0);
        negative = jm.regimes.count(Regime::NotActivated);
        const double d = jm.max_deviation();
        CHECK(d < last);
        last = d;
    }
    CHECK(negative > 0);
    CHECK(last < 1e-6);
}

TEST_CASE("effective a") {
    const auto img = uniform_field(8, 8, -1, 1, 11);
    {
        const auto cfg = config({5}, Boundary::Periodic);
        LayerStack<double> s = make_stack<double>(cfg, 0.2, 3);
        ml_grad(s, cfg, img);
        CHECK(downstream_gamma(s, 0, GammaMode::Mean) == 1.0);
        CHECK(effective_a(s, 0, cfg) == doctest::Approx(s.yhat - 1.0).epsilon(1e-15));
    }
    {
        // Next layer is a 1x1 kernel c on a fully activated map: gamma = c.
        const auto cfg = config({3, 1}, Boundary::Periodic);
        LayerStack<double> s = make_stack<double>(cfg, 0.0, 1);
        s.kernels[0] = Field2D<double>(3, 3, 1.0);
        s.kernels[1] = Field2D<double>(1, 1, 2.0);
        ml_grad(s, cfg, Field2D<double>(8, 8, 1.0));
        CHECK(downstream_gamma(s, 0, GammaMode::Mean) == doctest::Approx(2.0).epsilon(1e-6));
        CHECK(downstream_gamma(s, 1, GammaMode::Mean) == 1.0);
    }
    {
        // gamma is the mean directional derivative of the downstream sum along ones.
        const auto cfg = config({3, 3, 5}, Boundary::ZeroPad);
        LayerStack<double> s = make_stack<double>(cfg, 0.4, 21);
        ml_grad(s, cfg, img);
        const double gamma = downstream_gamma(s, 0, GammaMode::Mean);
        MlcnnConfig sub = config({3, 5}, Boundary::ZeroPad);
        LayerStack<double> tail;
        tail.kernels = {s.kernels[1], s.kernels[2]};
        const double h = 1e-5;
        Field2D<double> up = s.inputs[1], dn = s.inputs[1];
        for (auto& v : up.storage()) v += h;
        for (auto& v : dn.storage()) v -= h;
        ml_forward(tail, sub, up);
        const double lp = tail.logit;
        ml_forward(tail, sub, dn);
        const double fd = (lp - tail.logit) / (2 * h) / 64.0;
        CHECK(std::abs(gamma - fd) <= 0.05 * std::abs(fd));
        CHECK(std::abs(downstream_gamma(s, 0, GammaMode::MaxAbs)) >= std::abs(gamma));
    }
}

TEST_CASE("layer bounds") {
    const auto img = uniform_field(16, 16, -1, 1, 12);
    const auto cfg = config({5}, Boundary::Periodic, 0.1);
    LayerStack<double> s = make_stack<double>(cfg, 0.2, 3);
    ml_grad(s, cfg, img);
    Cnn1Config cc;
    cc.image = img;
    cc.window = 5;
    cc.alpha = 0.1;
    cc.dt = cfg.dt;
    const auto a = stability_bounds(cc, output_residual(s.logit, 1));
    const auto b = layer_bounds(s, 0, cfg);
    CHECK(a.alpha_min == b.alpha_min);
    CHECK(a.alpha_max == b.alpha_max);

    // With a negative base a, growing |gamma| raises both bounds.
    double lo = -1e300, hi = -1e300;
    for (double gamma : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const auto g = stability_bounds(cc, -0.5 * gamma);
        CHECK(g.alpha_min >= lo);
        CHECK(g.alpha_max >= hi);
        lo = g.alpha_min;
        hi = g.alpha_max;
    }
}

TEST_CASE("dataset system") {
    const auto data = synth_dataset(SynthKind::StripesVsBlobs, 6, 10, 5);
    SUBCASE("single sample equals the per-image loss and gradient") {
        Dataset one{{data.images[1]}, {data.labels[1]}};
        auto cfg = config({3, 3}, Boundary::ZeroPad, 0.2, data.labels[1]);
        MlDatasetSystem<double> sys(cfg, one);
        LayerStack<double> s = make_stack<double>(cfg, 0.3, 2);
        const auto theta = sys.flatten(s);
        std::vector<double> g(sys.dimension());
        const double l = sys.evaluate(theta, g);
        const auto gk = ml_grad(s, cfg, data.images[1]);
        CHECK(l == doctest::Approx(ml_loss(s, cfg).value).epsilon(1e-14));
        for (std::size_t j = 0; j < 9; ++j) CHECK(g[j] == doctest::Approx(gk[0].values()[j]).epsilon(1e-13));
        for (std::size_t j = 0; j < 9; ++j) CHECK(g[9 + j] == doctest::Approx(gk[1].values()[j]).epsilon(1e-13));
    }
    SUBCASE("mean loss gradient matches finite differences") {
        auto cfg = config({3, 3}, Boundary::Periodic, 0.05);
        MlDatasetSystem<double> sys(cfg, data);
        const auto theta = sys.flatten(make_stack<double>(cfg, 0.3, 3));
        std::vector<double> g(sys.dimension()), scratch(sys.dimension());
        sys.evaluate(theta, g);
        double num = 0, den = 0;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            auto p = theta, m = theta;
            p[j] += 1e-6;
            m[j] -= 1e-6;
            const double fd = (sys.evaluate(p, scratch) - sys.evaluate(m, scratch)) / 2e-6;
            num += (fd - g[j]) * (fd - g[j]);
            den += fd * fd;
        }
        CHECK(std::sqrt(num / den) < 1e-6);
        CHECK(sys.accuracy(theta) >= 0.0);
        CHECK(sys.accuracy(theta) <= 1.0);
    }
}
