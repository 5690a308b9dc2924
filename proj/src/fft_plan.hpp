#pragma once

#include <complex>
#include <cstddef>
#include <memory>

namespace rlab::detail {

/// Fixed FFTW plan pair (forward r2c, inverse c2r) for one real shape. The
/// plan owns its aligned work buffers; callers copy data in and out, so every
/// execution sees the same alignment and therefore the same codelets.
template <class T>
class RealFft2 {
public:
    RealFft2(std::size_t rows, std::size_t cols);
    ~RealFft2();
    RealFft2(const RealFft2&) = delete;
    RealFft2& operator=(const RealFft2&) = delete;

    T* real() { return real_; }
    std::complex<T>* spectrum() { return spec_; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t half_cols() const { return cols_ / 2 + 1; }

    void forward();  ///< real() -> spectrum()
    void inverse();  ///< spectrum() -> real(), unnormalized; clobbers spectrum()

private:
    std::size_t rows_, cols_;
    T* real_ = nullptr;
    std::complex<T>* spec_ = nullptr;
    void* fwd_ = nullptr;
    void* inv_ = nullptr;
};

/// Fixed in-place complex plan pair for one shape.
template <class T>
class ComplexFft2 {
public:
    ComplexFft2(std::size_t rows, std::size_t cols);
    ~ComplexFft2();
    ComplexFft2(const ComplexFft2&) = delete;
    ComplexFft2& operator=(const ComplexFft2&) = delete;

    std::complex<T>* data() { return data_; }
    void forward();
    void inverse();

private:
    std::size_t rows_, cols_;
    std::complex<T>* data_ = nullptr;
    void* fwd_ = nullptr;
    void* inv_ = nullptr;
};

/// Per-thread cache, one plan per shape.
template <class T>
RealFft2<T>& real_fft(std::size_t rows, std::size_t cols);
template <class T>
ComplexFft2<T>& complex_fft(std::size_t rows, std::size_t cols);

}  // namespace rlab::detail
