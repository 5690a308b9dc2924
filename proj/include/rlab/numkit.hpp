#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlab {

/// Floating-point format used for a whole run. Single rounds every
/// arithmetic result to binary32 (24-bit significand), Double to binary64.
enum class Precision { Single, Double };

int significand_bits(Precision p);
std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

enum class Boundary { Periodic, ZeroPad };

std::string to_string(Boundary b);
Boundary parse_boundary(const std::string& s);

/// Uniform 1-D grid.
template <class T>
struct Field1D {
    std::vector<T> values;
    double dx = 1.0;

    std::size_t size() const { return values.size(); }
};

/// Row-major 2-D grid. Spacing is 1 unless stated otherwise.
template <class T>
class Field2D {
public:
    Field2D() = default;
    Field2D(std::size_t rows, std::size_t cols, T fill = T{}, double dx = 1.0)
        : rows_(rows), cols_(cols), dx_(dx), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    double dx() const { return dx_; }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    bool same_shape(const Field2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    /// Elementwise conversion; each value rounds once to U.
    template <class U>
    Field2D<U> cast() const {
        Field2D<U> out(rows_, cols_, U{}, dx_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.storage()[i] = static_cast<U>(data_[i]);
        return out;
    }

    friend bool operator==(const Field2D&, const Field2D&) = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    double dx_ = 1.0;
    std::vector<T> data_;
};

/// Complex spectrum on the same index grid as its source field.
template <class T>
struct Spectrum2D {
    std::size_t rows = 0, cols = 0;
    std::vector<std::complex<T>> coeffs;

    std::complex<T>& operator()(std::size_t r, std::size_t c) { return coeffs[r * cols + c]; }
    const std::complex<T>& operator()(std::size_t r, std::size_t c) const { return coeffs[r * cols + c]; }
};

/// Left-to-right accumulation in the working precision of T.
template <class T>
T det_sum(std::span<const T> xs) {
    T acc = T(0);
    for (T x : xs) acc += x;
    return acc;
}

/// Runtime-precision variant: each input rounds to the format first.
double det_sum(std::span<const double> xs, Precision p);

template <class T>
T max_abs(std::span<const T> xs) {
    T m = T(0);
    for (T x : xs) {
        T a = x < T(0) ? -x : x;
        if (!(a <= m)) m = a;  // NaN propagates
    }
    return m;
}

/// Forward transform, F(w) = sum_x f(x) exp(-2 pi i w.x / n), no scaling.
template <class T>
Spectrum2D<T> dft2(const Field2D<T>& f);

/// Inverse transform including the 1/(H*W) factor; returns the real part.
template <class T>
Field2D<T> idft2(const Spectrum2D<T>& s);

/// Non-redundant half of a real field's spectrum: rows x (cols/2 + 1).
template <class T>
struct HalfSpectrum {
    std::size_t rows = 0, cols = 0;  ///< shape of the real field
    std::vector<std::complex<T>> coeffs;

    std::size_t half_cols() const { return cols / 2 + 1; }
};

template <class T>
HalfSpectrum<T> rdft2(const Field2D<T>& f);

/// Inverse of rdft2 including the 1/(H*W) factor.
template <class T>
Field2D<T> irdft2(const HalfSpectrum<T>& s);

/// In-place 2-D complex transform on a row-major rows x cols array
/// (unnormalized in both directions).
template <class T>
void fft2d(std::span<std::complex<T>> data, std::size_t rows, std::size_t cols, bool inverse);

/// Position of offset zero inside a kernel array.
struct Origin {
    std::ptrdiff_t row = 0, col = 0;
};

template <class T>
Origin centered_origin(const Field2D<T>& k) {
    return {static_cast<std::ptrdiff_t>(k.rows() / 2), static_cast<std::ptrdiff_t>(k.cols() / 2)};
}

/// Cross-correlation (K*I)(x) = sum_z K(z) I(x+z). Kernel entry (i,j) holds
/// offset z = (i - origin.row, j - origin.col); the default origin is the
/// kernel centre. Output has the image's size.
template <class T>
Field2D<T> xcorr2(const Field2D<T>& kernel, const Field2D<T>& image, Boundary b);
template <class T>
Field2D<T> xcorr2(const Field2D<T>& kernel, const Field2D<T>& image, Boundary b, Origin origin);

/// Kernel-shaped adjoint of xcorr2 with respect to the kernel:
/// out(z) = sum_x G(x) I(x+z) for every offset z of a kr x kc kernel.
template <class T>
Field2D<T> xcorr2_taps(const Field2D<T>& g, const Field2D<T>& image, Boundary b,
                       std::size_t kr, std::size_t kc, Origin origin);

/// Image-shaped adjoint of xcorr2 with respect to the image:
/// out(y) = sum_z K(z) G(y - z).
template <class T>
Field2D<T> xcorr2_image_adjoint(const Field2D<T>& kernel, const Field2D<T>& g, Boundary b,
                                Origin origin);

/// Places a kernel on an H x W periodic grid so that offset z lands at
/// index (z mod H, z mod W). The result correlates with origin {0,0}.
template <class T>
Field2D<T> embed_periodic(const Field2D<T>& kernel, std::size_t rows, std::size_t cols,
                          Origin origin);

/// Correlation against one fixed image. Caches the image spectrum when the
/// transform path applies (kernels larger than a few taps); otherwise falls
/// back to direct sums. Zero padding runs on a grid enlarged by max_kernel - 1
/// so nothing wraps, and only kernels up to max_kernel use it. The choice
/// depends only on shapes, so results are reproducible.
template <class T>
class ImageCorrelator {
public:
    ImageCorrelator(Field2D<T> image, Boundary b, std::size_t max_kernel = 0);

    const Field2D<T>& image() const { return image_; }
    Boundary boundary() const { return boundary_; }

    Field2D<T> correlate(const Field2D<T>& kernel, Origin origin) const;
    Field2D<T> taps(const Field2D<T>& g, std::size_t kr, std::size_t kc, Origin origin) const;

    bool uses_transform(std::size_t kr, std::size_t kc) const;

private:
    Field2D<T> image_;
    Boundary boundary_;
    std::size_t max_kernel_ = 0;
    std::size_t grid_rows_ = 0, grid_cols_ = 0;
    HalfSpectrum<T> spectrum_;  ///< of the image on the grid
};

bool is_pow2(std::size_t n);
std::size_t next_pow2(std::size_t n);
/// Smallest n' >= n whose prime factors are all in {2, 3, 5, 7}.
std::size_t next_smooth(std::size_t n);

}  // namespace rlab
