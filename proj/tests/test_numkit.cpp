#include "doctest.h"
#include "rlab/numkit.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

using namespace rlab;

namespace {

Field2D<double> random_field(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Field2D<double> f(r, c);
    for (auto& v : f.storage()) v = u(rng);
    return f;
}

Field2D<double> checkerboard(std::size_t n) {
    Field2D<double> f(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) f(r, c) = ((r + c) % 2 == 0) ? 1.0 : -1.0;
    return f;
}

/// Literal double sum for one frequency pair.
std::complex<double> direct_coeff(const Field2D<double>& f, std::size_t wr, std::size_t wc) {
    std::complex<double> acc = 0;
    const double H = static_cast<double>(f.rows()), W = static_cast<double>(f.cols());
    for (std::size_t r = 0; r < f.rows(); ++r)
        for (std::size_t c = 0; c < f.cols(); ++c) {
            const double ph = -2.0 * std::numbers::pi *
                              (static_cast<double>((wr * r) % f.rows()) / H +
                               static_cast<double>((wc * c) % f.cols()) / W);
            acc += f(r, c) * std::complex<double>(std::cos(ph), std::sin(ph));
        }
    return acc;
}

Field2D<double> naive_xcorr(const Field2D<double>& k, const Field2D<double>& img, bool periodic) {
    const long R = static_cast<long>(img.rows()), C = static_cast<long>(img.cols());
    const long oR = static_cast<long>(k.rows() / 2), oC = static_cast<long>(k.cols() / 2);
    Field2D<double> out(img.rows(), img.cols());
    for (long r = 0; r < R; ++r)
        for (long c = 0; c < C; ++c) {
            double s = 0;
            for (long i = 0; i < static_cast<long>(k.rows()); ++i)
                for (long j = 0; j < static_cast<long>(k.cols()); ++j) {
                    long rr = r + i - oR, cc = c + j - oC;
                    if (periodic) {
                        rr = ((rr % R) + R) % R;
                        cc = ((cc % C) + C) % C;
                    } else if (rr < 0 || cc < 0 || rr >= R || cc >= C) {
                        continue;
                    }
                    s += k(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                         img(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
                }
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s;
        }
    return out;
}

double max_diff(const Field2D<double>& a, const Field2D<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

}  // namespace

TEST_CASE("checkerboard spectrum is a single Nyquist coefficient") {
    const auto f = checkerboard(256);
    const auto s = dft2(f);
    double largest_other = 0;
    for (std::size_t r = 0; r < 256; ++r)
        for (std::size_t c = 0; c < 256; ++c)
            if (!(r == 128 && c == 128)) largest_other = std::max(largest_other, std::abs(s(r, c)));
    CHECK(std::abs(s(128, 128)) == doctest::Approx(65536.0).epsilon(1e-12));
    CHECK(largest_other < 1e-6);
    // Spot-check against the literal double sum.
    const std::size_t probes[][2] = {{128, 128}, {0, 0}, {1, 5}, {128, 0}, {77, 200}};
    for (auto& p : probes) {
        const auto want = direct_coeff(f, p[0], p[1]);
        CHECK(std::abs(s(p[0], p[1]) - want) < 1e-6);
    }
}

TEST_CASE("dft2 matches the direct double sum on small fields") {
    for (auto [r, c] : {std::pair{8ul, 8ul}, {6ul, 10ul}, {16ul, 4ul}, {5ul, 7ul}}) {
        const auto f = random_field(r, c, 11 + r * c);
        const auto s = dft2(f);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) CHECK(std::abs(s(i, j) - direct_coeff(f, i, j)) < 1e-11);
    }
}

TEST_CASE("delta and constant fields") {
    Field2D<double> d(8, 8);
    d(0, 0) = 1;
    for (const auto& v : dft2(d).coeffs) CHECK(std::abs(v - std::complex<double>(1, 0)) < 1e-15);
    Field2D<double> k(6, 10, 2.5);
    const auto s = dft2(k);
    CHECK(std::abs(s(0, 0) - std::complex<double>(2.5 * 60, 0)) < 1e-12);
    for (std::size_t i = 1; i < s.coeffs.size(); ++i) CHECK(std::abs(s.coeffs[i]) < 1e-12);
}

TEST_CASE("round trip, Parseval and conjugate symmetry") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t r = seed % 2 ? 32 : 12, c = seed % 3 ? 16 : 9;
        const auto f = random_field(r, c, seed);
        const auto s = dft2(f);
        const auto back = idft2(s);
        CHECK(max_diff(back, f) <= 1e-10 * max_abs<double>(f.values()));
        double e = 0, es = 0;
        for (double v : f.values()) e += v * v;
        for (const auto& z : s.coeffs) es += std::norm(z);
        CHECK(std::abs(e - es / static_cast<double>(r * c)) <= 1e-8 * e);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                CHECK(std::abs(s(i, j) - std::conj(s((r - i) % r, (c - j) % c))) < 1e-10);
    }
}

TEST_CASE("correlation theorem on padded kernels") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto img = random_field(16, 16, 100 + seed);
        const auto k = random_field(5, 5, 200 + seed);
        const auto kpad = embed_periodic(k, 16, 16, centered_origin(k));
        const auto lhs = dft2(xcorr2(kpad, img, Boundary::Periodic, Origin{0, 0}));
        const auto ks = dft2(kpad), is = dft2(img);
        double scale = 0;
        for (const auto& z : lhs.coeffs) scale = std::max(scale, std::abs(z));
        for (std::size_t i = 0; i < lhs.coeffs.size(); ++i)
            CHECK(std::abs(lhs.coeffs[i] - std::conj(ks.coeffs[i]) * is.coeffs[i]) <= 1e-8 * scale);
    }
}

TEST_CASE("xcorr2 against the naive loop") {
    const auto img = random_field(8, 8, 5);
    const auto k = random_field(3, 3, 6);
    CHECK(max_diff(xcorr2(k, img, Boundary::Periodic), naive_xcorr(k, img, true)) < 1e-14);
    CHECK(max_diff(xcorr2(k, img, Boundary::ZeroPad), naive_xcorr(k, img, false)) < 1e-14);
    // Transform path (large kernel, power-of-two image) agrees with the loop.
    const auto big = random_field(32, 32, 7);
    const auto kb = random_field(9, 9, 8);
    CHECK(ImageCorrelator<double>(big, Boundary::Periodic).uses_transform(9, 9));
    CHECK(max_diff(xcorr2(kb, big, Boundary::Periodic), naive_xcorr(kb, big, true)) < 1e-12);
}

TEST_CASE("identity and scalar kernels") {
    const auto img = random_field(7, 9, 1);
    Field2D<double> delta(3, 3);
    delta(1, 1) = 1;
    CHECK(xcorr2(delta, img, Boundary::ZeroPad) == img);
    Field2D<double> c(1, 1, -3.0);
    const auto out = xcorr2(c, img, Boundary::Periodic);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(out.values()[i] == -3.0 * img.values()[i]);
    CHECK_THROWS_AS(xcorr2(Field2D<double>(10, 2), img, Boundary::Periodic), std::invalid_argument);
}

TEST_CASE("adjoint identities") {
    // <K*I, G> = <K, taps(G, I)> = <I, image_adjoint(K, G)>
    for (auto b : {Boundary::Periodic, Boundary::ZeroPad})
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto img = random_field(16, 16, 300 + seed);
            const auto g = random_field(16, 16, 400 + seed);
            const auto k = random_field(seed % 2 ? 3 : 6, 5, 500 + seed);
            const auto o = centered_origin(k);
            const auto kc = xcorr2(k, img, b, o);
            const auto t = xcorr2_taps(g, img, b, k.rows(), k.cols(), o);
            const auto a = xcorr2_image_adjoint(k, g, b, o);
            double l = 0, m = 0, n = 0;
            for (std::size_t i = 0; i < g.size(); ++i) l += kc.values()[i] * g.values()[i];
            for (std::size_t i = 0; i < k.size(); ++i) m += k.values()[i] * t.values()[i];
            for (std::size_t i = 0; i < img.size(); ++i) n += img.values()[i] * a.values()[i];
            CHECK(m == doctest::Approx(l).epsilon(1e-12));
            CHECK(n == doctest::Approx(l).epsilon(1e-12));
        }
}

TEST_CASE("det_sum") {
    CHECK(det_sum(std::span<const double>{}, Precision::Double) == 0.0);
    const std::vector<double> xs{1, 2, 3};
    CHECK(det_sum(std::span<const double>(xs), Precision::Double) == 6.0);
    const std::vector<double> tenths(1000000, 0.1);
    const double a = det_sum(std::span<const double>(tenths), Precision::Single);
    const double b = det_sum(std::span<const double>(tenths), Precision::Single);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
    // Binary32 accumulation drifts well away from the exact 1e5.
    CHECK(std::abs(a - 1e5) > 1.0);
    CHECK(static_cast<double>(static_cast<float>(a)) == a);
}

TEST_CASE("transforms are bit-reproducible in both precisions") {
    const auto f = random_field(64, 32, 9);
    CHECK(dft2(f).coeffs == dft2(f).coeffs);
    const auto ff = f.cast<float>();
    CHECK(dft2(ff).coeffs == dft2(ff).coeffs);
    CHECK(idft2(dft2(ff)) == idft2(dft2(ff)));
    CHECK(significand_bits(Precision::Single) == 24);
    CHECK(significand_bits(Precision::Double) == 53);
}

TEST_CASE("next_smooth") {
    CHECK(next_smooth(1) == 1);
    CHECK(next_smooth(256) == 256);
    CHECK(next_smooth(287) == 288);
    CHECK(next_smooth(11) == 12);
    CHECK(next_smooth(13) == 14);
    for (std::size_t n = 1; n < 2000; ++n) {
        const std::size_t m = next_smooth(n);
        REQUIRE(m >= n);
        std::size_t r = m;
        for (std::size_t p : {2, 3, 5, 7})
            while (r % p == 0) r /= p;
        CHECK(r == 1);
        for (std::size_t c = n; c < m; ++c) {
            std::size_t q = c;
            for (std::size_t p : {2, 3, 5, 7})
                while (q % p == 0) q /= p;
            CHECK(q != 1);
        }
    }
}

TEST_CASE("zero-padded transform path matches the direct sum") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1, 1);
    Field2D<double> img(37, 29), k(9, 9);
    for (auto& v : img.storage()) v = u(rng);
    for (auto& v : k.storage()) v = u(rng);
    const ImageCorrelator<double> fast(img, Boundary::ZeroPad, 9), direct(img, Boundary::ZeroPad);
    REQUIRE(fast.uses_transform(9, 9));
    REQUIRE_FALSE(direct.uses_transform(9, 9));
    const auto a = fast.correlate(k, {4, 4}), b = direct.correlate(k, {4, 4});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-12));
    const auto ta = fast.taps(img, 9, 9, {4, 4}), tb = direct.taps(img, 9, 9, {4, 4});
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta.values()[i] == doctest::Approx(tb.values()[i]).epsilon(1e-12));
}
