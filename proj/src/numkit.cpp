#include "rlab/numkit.hpp"

#include "fft_plan.hpp"

#include <cmath>

namespace rlab {

int significand_bits(Precision p) { return p == Precision::Single ? 24 : 53; }

std::string to_string(Precision p) { return p == Precision::Single ? "single" : "double"; }

Precision parse_precision(const std::string& s) {
    if (s == "single" || s == "float32") return Precision::Single;
    if (s == "double" || s == "float64") return Precision::Double;
    throw std::invalid_argument("unknown precision '" + s + "' (expected single or double)");
}

std::string to_string(Boundary b) { return b == Boundary::Periodic ? "periodic" : "zeropad"; }

Boundary parse_boundary(const std::string& s) {
    if (s == "periodic") return Boundary::Periodic;
    if (s == "zeropad" || s == "zero") return Boundary::ZeroPad;
    throw std::invalid_argument("unknown boundary '" + s + "' (expected periodic or zeropad)");
}

double det_sum(std::span<const double> xs, Precision p) {
    if (p == Precision::Double) return det_sum<double>(xs);
    float acc = 0.0f;
    for (double x : xs) acc += static_cast<float>(x);
    return acc;
}

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

std::size_t next_smooth(std::size_t n) {
    for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
        std::size_t r = m;
        for (std::size_t f : {2, 3, 5, 7})
            while (r % f == 0) r /= f;
        if (r == 1) return m;
    }
}

template <class T>
void fft2d(std::span<std::complex<T>> data, std::size_t rows, std::size_t cols, bool inverse) {
    if (data.size() != rows * cols) throw std::invalid_argument("fft2d: size mismatch");
    if (data.empty()) return;
    auto& plan = detail::complex_fft<T>(rows, cols);
    std::copy(data.begin(), data.end(), plan.data());
    inverse ? plan.inverse() : plan.forward();
    std::copy(plan.data(), plan.data() + data.size(), data.begin());
}

template <class T>
Spectrum2D<T> dft2(const Field2D<T>& f) {
    Spectrum2D<T> s{f.rows(), f.cols(), {}};
    s.coeffs.resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) s.coeffs[i] = {f.values()[i], T(0)};
    fft2d<T>(s.coeffs, s.rows, s.cols, false);
    return s;
}

template <class T>
Field2D<T> idft2(const Spectrum2D<T>& s) {
    std::vector<std::complex<T>> buf = s.coeffs;
    fft2d<T>(buf, s.rows, s.cols, true);
    Field2D<T> f(s.rows, s.cols);
    const T scale = T(1) / static_cast<T>(s.rows * s.cols);
    for (std::size_t i = 0; i < buf.size(); ++i) f.storage()[i] = buf[i].real() * scale;
    return f;
}

template <class T>
HalfSpectrum<T> rdft2(const Field2D<T>& f) {
    auto& plan = detail::real_fft<T>(f.rows(), f.cols());
    std::copy(f.values().begin(), f.values().end(), plan.real());
    plan.forward();
    HalfSpectrum<T> s{f.rows(), f.cols(), {}};
    s.coeffs.assign(plan.spectrum(), plan.spectrum() + f.rows() * plan.half_cols());
    return s;
}

template <class T>
Field2D<T> irdft2(const HalfSpectrum<T>& s) {
    auto& plan = detail::real_fft<T>(s.rows, s.cols);
    std::copy(s.coeffs.begin(), s.coeffs.end(), plan.spectrum());
    plan.inverse();
    Field2D<T> f(s.rows, s.cols);
    const T scale = T(1) / static_cast<T>(s.rows * s.cols);
    for (std::size_t i = 0; i < f.size(); ++i) f.storage()[i] = plan.real()[i] * scale;
    return f;
}

namespace {

void check_kernel_fits(std::size_t kr, std::size_t kc, std::size_t ir, std::size_t ic) {
    if (kr > ir || kc > ic)
        throw std::invalid_argument("xcorr2: kernel " + std::to_string(kr) + "x" + std::to_string(kc) +
                                    " larger than image " + std::to_string(ir) + "x" +
                                    std::to_string(ic));
}

inline std::ptrdiff_t wrap(std::ptrdiff_t i, std::ptrdiff_t n) {
    i %= n;
    return i < 0 ? i + n : i;
}

/// Fetch I(r, c) under the boundary rule; returns false for a zero-pad miss.
template <class T>
inline bool fetch(const Field2D<T>& img, std::ptrdiff_t r, std::ptrdiff_t c, Boundary b, T& out) {
    const auto R = static_cast<std::ptrdiff_t>(img.rows());
    const auto C = static_cast<std::ptrdiff_t>(img.cols());
    if (b == Boundary::Periodic) {
        out = img(static_cast<std::size_t>(wrap(r, R)), static_cast<std::size_t>(wrap(c, C)));
        return true;
    }
    if (r < 0 || c < 0 || r >= R || c >= C) return false;
    out = img(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    return true;
}

template <class T>
Field2D<T> direct_xcorr(const Field2D<T>& k, const Field2D<T>& img, Boundary b, Origin o) {
    Field2D<T> out(img.rows(), img.cols(), T(0), img.dx());
    for (std::size_t r = 0; r < img.rows(); ++r)
        for (std::size_t c = 0; c < img.cols(); ++c) {
            T acc = 0;
            for (std::size_t i = 0; i < k.rows(); ++i)
                for (std::size_t j = 0; j < k.cols(); ++j) {
                    T v;
                    if (fetch(img, static_cast<std::ptrdiff_t>(r + i) - o.row,
                              static_cast<std::ptrdiff_t>(c + j) - o.col, b, v))
                        acc += k(i, j) * v;
                }
            out(r, c) = acc;
        }
    return out;
}

template <class T>
Field2D<T> direct_taps(const Field2D<T>& g, const Field2D<T>& img, Boundary b, std::size_t kr,
                       std::size_t kc, Origin o) {
    Field2D<T> out(kr, kc, T(0), img.dx());
    for (std::size_t i = 0; i < kr; ++i)
        for (std::size_t j = 0; j < kc; ++j) {
            T acc = 0;
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) {
                    T v;
                    if (fetch(img, static_cast<std::ptrdiff_t>(r + i) - o.row,
                              static_cast<std::ptrdiff_t>(c + j) - o.col, b, v))
                        acc += g(r, c) * v;
                }
            out(i, j) = acc;
        }
    return out;
}

constexpr std::size_t kDirectTapLimit = 16;

}  // namespace

template <class T>
Field2D<T> embed_periodic(const Field2D<T>& kernel, std::size_t rows, std::size_t cols, Origin o) {
    check_kernel_fits(kernel.rows(), kernel.cols(), rows, cols);
    Field2D<T> out(rows, cols, T(0), kernel.dx());
    const auto R = static_cast<std::ptrdiff_t>(rows), C = static_cast<std::ptrdiff_t>(cols);
    for (std::size_t i = 0; i < kernel.rows(); ++i)
        for (std::size_t j = 0; j < kernel.cols(); ++j)
            out(static_cast<std::size_t>(wrap(static_cast<std::ptrdiff_t>(i) - o.row, R)),
                static_cast<std::size_t>(wrap(static_cast<std::ptrdiff_t>(j) - o.col, C))) = kernel(i, j);
    return out;
}

template <class T>
ImageCorrelator<T>::ImageCorrelator(Field2D<T> image, Boundary b, std::size_t max_kernel)
    : image_(std::move(image)), boundary_(b), grid_rows_(image_.rows()), grid_cols_(image_.cols()) {
    if (boundary_ == Boundary::Periodic) {
        max_kernel_ = std::min(image_.rows(), image_.cols());
        spectrum_ = rdft2(image_);
        return;
    }
    if (max_kernel * max_kernel <= kDirectTapLimit) return;
    max_kernel_ = std::min({max_kernel, image_.rows(), image_.cols()});
    grid_rows_ = next_smooth(image_.rows() + max_kernel_ - 1);
    grid_cols_ = next_smooth(image_.cols() + max_kernel_ - 1);
    Field2D<T> padded(grid_rows_, grid_cols_, T(0), image_.dx());
    for (std::size_t r = 0; r < image_.rows(); ++r)
        for (std::size_t c = 0; c < image_.cols(); ++c) padded(r, c) = image_(r, c);
    spectrum_ = rdft2(padded);
}

template <class T>
bool ImageCorrelator<T>::uses_transform(std::size_t kr, std::size_t kc) const {
    return kr * kc > kDirectTapLimit && kr <= max_kernel_ && kc <= max_kernel_;
}

namespace {

/// plan.real() <- idft(conj(fft(plan.real())) * image spectrum), unscaled.
template <class T>
void correlate_in_plan(detail::RealFft2<T>& plan, const HalfSpectrum<T>& img) {
    plan.forward();
    std::complex<T>* s = plan.spectrum();
    for (std::size_t i = 0; i < img.coeffs.size(); ++i) {
        const T ar = s[i].real(), ai = -s[i].imag();
        const T br = img.coeffs[i].real(), bi = img.coeffs[i].imag();
        s[i] = {ar * br - ai * bi, ar * bi + ai * br};
    }
    plan.inverse();
}

}  // namespace

template <class T>
Field2D<T> ImageCorrelator<T>::correlate(const Field2D<T>& kernel, Origin origin) const {
    check_kernel_fits(kernel.rows(), kernel.cols(), image_.rows(), image_.cols());
    if (!uses_transform(kernel.rows(), kernel.cols())) return direct_xcorr(kernel, image_, boundary_, origin);
    const std::size_t R = grid_rows_, C = grid_cols_;
    auto& plan = detail::real_fft<T>(R, C);
    std::fill(plan.real(), plan.real() + R * C, T(0));
    const auto Ri = static_cast<std::ptrdiff_t>(R), Ci = static_cast<std::ptrdiff_t>(C);
    for (std::size_t i = 0; i < kernel.rows(); ++i)
        for (std::size_t j = 0; j < kernel.cols(); ++j)
            plan.real()[static_cast<std::size_t>(wrap(static_cast<std::ptrdiff_t>(i) - origin.row, Ri)) * C +
                        static_cast<std::size_t>(wrap(static_cast<std::ptrdiff_t>(j) - origin.col, Ci))] = kernel(i, j);
    correlate_in_plan(plan, spectrum_);
    Field2D<T> out(image_.rows(), image_.cols());
    const T scale = T(1) / static_cast<T>(R * C);
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = plan.real()[r * C + c] * scale;
    return out;
}

template <class T>
Field2D<T> ImageCorrelator<T>::taps(const Field2D<T>& g, std::size_t kr, std::size_t kc, Origin origin) const {
    check_kernel_fits(kr, kc, image_.rows(), image_.cols());
    if (!g.same_shape(image_)) throw std::invalid_argument("xcorr2_taps: field and image shapes differ");
    if (!uses_transform(kr, kc)) return direct_taps(g, image_, boundary_, kr, kc, origin);
    // out(z) = sum_x G(x) I(x+z) is (G*I) read at offset z.
    const std::size_t R = grid_rows_, C = grid_cols_;
    auto& plan = detail::real_fft<T>(R, C);
    std::fill(plan.real(), plan.real() + R * C, T(0));
    for (std::size_t r = 0; r < g.rows(); ++r)
        std::copy_n(g.values().begin() + static_cast<std::ptrdiff_t>(r * g.cols()), g.cols(), plan.real() + r * C);
    correlate_in_plan(plan, spectrum_);
    Field2D<T> out(kr, kc, T(0), image_.dx());
    const T scale = T(1) / static_cast<T>(R * C);
    const auto Ri = static_cast<std::ptrdiff_t>(R), Ci = static_cast<std::ptrdiff_t>(C);
    for (std::size_t i = 0; i < kr; ++i)
        for (std::size_t j = 0; j < kc; ++j)
            out(i, j) = plan.real()[static_cast<std::size_t>(wrap(static_cast<std::ptrdiff_t>(i) - origin.row, Ri)) * C +
                                    static_cast<std::size_t>(wrap(static_cast<std::ptrdiff_t>(j) - origin.col, Ci))] *
                        scale;
    return out;
}

template <class T>
Field2D<T> xcorr2(const Field2D<T>& kernel, const Field2D<T>& image, Boundary b, Origin origin) {
    return ImageCorrelator<T>(image, b, std::max(kernel.rows(), kernel.cols())).correlate(kernel, origin);
}

template <class T>
Field2D<T> xcorr2(const Field2D<T>& kernel, const Field2D<T>& image, Boundary b) {
    return xcorr2(kernel, image, b, centered_origin(kernel));
}

template <class T>
Field2D<T> xcorr2_taps(const Field2D<T>& g, const Field2D<T>& image, Boundary b, std::size_t kr,
                       std::size_t kc, Origin origin) {
    return ImageCorrelator<T>(image, b, std::max(kr, kc)).taps(g, kr, kc, origin);
}

template <class T>
Field2D<T> xcorr2_image_adjoint(const Field2D<T>& kernel, const Field2D<T>& g, Boundary b, Origin o) {
    check_kernel_fits(kernel.rows(), kernel.cols(), g.rows(), g.cols());
    // Scatter form of out(y) = sum_z K(z) G(y - z), accumulated per output
    // cell in fixed (z row-major) order.
    Field2D<T> out(g.rows(), g.cols(), T(0), g.dx());
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) {
            T acc = 0;
            for (std::size_t i = 0; i < kernel.rows(); ++i)
                for (std::size_t j = 0; j < kernel.cols(); ++j) {
                    T v;
                    if (fetch(g, static_cast<std::ptrdiff_t>(r) - (static_cast<std::ptrdiff_t>(i) - o.row),
                              static_cast<std::ptrdiff_t>(c) - (static_cast<std::ptrdiff_t>(j) - o.col), b, v))
                        acc += kernel(i, j) * v;
                }
            out(r, c) = acc;
        }
    return out;
}

#define RLAB_NUMKIT_INSTANTIATE(T)                                                                      \
    template HalfSpectrum<T> rdft2<T>(const Field2D<T>&);                                               \
    template Field2D<T> irdft2<T>(const HalfSpectrum<T>&);                                              \
    template void fft2d<T>(std::span<std::complex<T>>, std::size_t, std::size_t, bool);                 \
    template Spectrum2D<T> dft2<T>(const Field2D<T>&);                                                  \
    template Field2D<T> idft2<T>(const Spectrum2D<T>&);                                                 \
    template Field2D<T> embed_periodic<T>(const Field2D<T>&, std::size_t, std::size_t, Origin);         \
    template Field2D<T> xcorr2<T>(const Field2D<T>&, const Field2D<T>&, Boundary);                      \
    template Field2D<T> xcorr2<T>(const Field2D<T>&, const Field2D<T>&, Boundary, Origin);              \
    template Field2D<T> xcorr2_taps<T>(const Field2D<T>&, const Field2D<T>&, Boundary, std::size_t,     \
                                       std::size_t, Origin);                                            \
    template Field2D<T> xcorr2_image_adjoint<T>(const Field2D<T>&, const Field2D<T>&, Boundary, Origin); \
    template class ImageCorrelator<T>;

RLAB_NUMKIT_INSTANTIATE(float)
RLAB_NUMKIT_INSTANTIATE(double)

}  // namespace rlab
