#include "fft_plan.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <new>
#include <utility>

namespace rlab::detail {

namespace {

// The FFTW planner is not thread-safe; execution is.
std::mutex planner_mutex;

// FFTW_ESTIMATE picks the plan from a fixed heuristic (no timing runs), so
// the same shape always gets the same algorithm.
constexpr unsigned kFlags = FFTW_ESTIMATE;

template <class T>
struct Api;

template <>
struct Api<double> {
    using Plan = fftw_plan;
    using Cplx = fftw_complex;
    static void* alloc(std::size_t bytes) { return fftw_malloc(bytes); }
    static void release(void* p) { fftw_free(p); }
    static Plan r2c(int n0, int n1, double* in, std::complex<double>* out) {
        return fftw_plan_dft_r2c_2d(n0, n1, in, reinterpret_cast<Cplx*>(out), kFlags);
    }
    static Plan c2r(int n0, int n1, std::complex<double>* in, double* out) {
        return fftw_plan_dft_c2r_2d(n0, n1, reinterpret_cast<Cplx*>(in), out, kFlags);
    }
    static Plan c2c(int n0, int n1, std::complex<double>* io, int sign) {
        return fftw_plan_dft_2d(n0, n1, reinterpret_cast<Cplx*>(io), reinterpret_cast<Cplx*>(io), sign, kFlags);
    }
    static void execute(void* p) { fftw_execute(static_cast<Plan>(p)); }
    static void destroy(void* p) { fftw_destroy_plan(static_cast<Plan>(p)); }
};

template <>
struct Api<float> {
    using Plan = fftwf_plan;
    using Cplx = fftwf_complex;
    static void* alloc(std::size_t bytes) { return fftwf_malloc(bytes); }
    static void release(void* p) { fftwf_free(p); }
    static Plan r2c(int n0, int n1, float* in, std::complex<float>* out) {
        return fftwf_plan_dft_r2c_2d(n0, n1, in, reinterpret_cast<Cplx*>(out), kFlags);
    }
    static Plan c2r(int n0, int n1, std::complex<float>* in, float* out) {
        return fftwf_plan_dft_c2r_2d(n0, n1, reinterpret_cast<Cplx*>(in), out, kFlags);
    }
    static Plan c2c(int n0, int n1, std::complex<float>* io, int sign) {
        return fftwf_plan_dft_2d(n0, n1, reinterpret_cast<Cplx*>(io), reinterpret_cast<Cplx*>(io), sign, kFlags);
    }
    static void execute(void* p) { fftwf_execute(static_cast<Plan>(p)); }
    static void destroy(void* p) { fftwf_destroy_plan(static_cast<Plan>(p)); }
};

template <class P>
P* checked_alloc(std::size_t n, void* (*alloc)(std::size_t)) {
    void* p = alloc(n * sizeof(P));
    if (!p) throw std::bad_alloc();
    return static_cast<P*>(p);
}

}  // namespace

template <class T>
RealFft2<T>::RealFft2(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    using A = Api<T>;
    real_ = checked_alloc<T>(rows * cols, A::alloc);
    spec_ = checked_alloc<std::complex<T>>(rows * half_cols(), A::alloc);
    std::lock_guard lock(planner_mutex);
    fwd_ = A::r2c(static_cast<int>(rows), static_cast<int>(cols), real_, spec_);
    inv_ = A::c2r(static_cast<int>(rows), static_cast<int>(cols), spec_, real_);
}

template <class T>
RealFft2<T>::~RealFft2() {
    using A = Api<T>;
    {
        std::lock_guard lock(planner_mutex);
        A::destroy(fwd_);
        A::destroy(inv_);
    }
    A::release(real_);
    A::release(spec_);
}

template <class T>
void RealFft2<T>::forward() {
    Api<T>::execute(fwd_);
}

template <class T>
void RealFft2<T>::inverse() {
    Api<T>::execute(inv_);
}

template <class T>
ComplexFft2<T>::ComplexFft2(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    using A = Api<T>;
    data_ = checked_alloc<std::complex<T>>(rows * cols, A::alloc);
    std::lock_guard lock(planner_mutex);
    fwd_ = A::c2c(static_cast<int>(rows), static_cast<int>(cols), data_, FFTW_FORWARD);
    inv_ = A::c2c(static_cast<int>(rows), static_cast<int>(cols), data_, FFTW_BACKWARD);
}

template <class T>
ComplexFft2<T>::~ComplexFft2() {
    using A = Api<T>;
    {
        std::lock_guard lock(planner_mutex);
        A::destroy(fwd_);
        A::destroy(inv_);
    }
    A::release(data_);
}

template <class T>
void ComplexFft2<T>::forward() {
    Api<T>::execute(fwd_);
}

template <class T>
void ComplexFft2<T>::inverse() {
    Api<T>::execute(inv_);
}

template <class T>
RealFft2<T>& real_fft(std::size_t rows, std::size_t cols) {
    thread_local std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<RealFft2<T>>> cache;
    auto& slot = cache[{rows, cols}];
    if (!slot) slot = std::make_unique<RealFft2<T>>(rows, cols);
    return *slot;
}

template <class T>
ComplexFft2<T>& complex_fft(std::size_t rows, std::size_t cols) {
    thread_local std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<ComplexFft2<T>>> cache;
    auto& slot = cache[{rows, cols}];
    if (!slot) slot = std::make_unique<ComplexFft2<T>>(rows, cols);
    return *slot;
}

template class RealFft2<float>;
template class RealFft2<double>;
template class ComplexFft2<float>;
template class ComplexFft2<double>;
template RealFft2<float>& real_fft<float>(std::size_t, std::size_t);
template RealFft2<double>& real_fft<double>(std::size_t, std::size_t);
template ComplexFft2<float>& complex_fft<float>(std::size_t, std::size_t);
template ComplexFft2<double>& complex_fft<double>(std::size_t, std::size_t);

}  // namespace rlab::detail
