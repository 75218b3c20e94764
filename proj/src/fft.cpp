#include "naw/fft.hpp"

#include <fftw3.h>

#include <cassert>
#include <mutex>
#include <stdexcept>

namespace naw {

namespace {
// FFTW plan creation is not thread-safe; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

RealFft::RealFft(int n) : n_(n) {
    if (n < 2) throw std::invalid_argument("RealFft size must be >= 2");
    real_buf_ = fftw_alloc_real(static_cast<size_t>(n));
    auto* cbuf = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
    cplx_buf_ = cbuf;
    std::lock_guard lock(planner_mutex());
    plan_fwd_ = fftw_plan_dft_r2c_1d(n, real_buf_, cbuf, FFTW_ESTIMATE);
    plan_inv_ = fftw_plan_dft_c2r_1d(n, cbuf, real_buf_, FFTW_ESTIMATE);
    if (!plan_fwd_ || !plan_inv_) throw std::runtime_error("fftw plan creation failed");
}

RealFft::~RealFft() {
    if (plan_fwd_ || plan_inv_) {
        std::lock_guard lock(planner_mutex());
        if (plan_fwd_) fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
        if (plan_inv_) fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
    }
    fftw_free(real_buf_);
    fftw_free(cplx_buf_);
}

RealFft::RealFft(RealFft&& other) noexcept { *this = std::move(other); }

RealFft& RealFft::operator=(RealFft&& other) noexcept {
    std::swap(n_, other.n_);
    std::swap(plan_fwd_, other.plan_fwd_);
    std::swap(plan_inv_, other.plan_inv_);
    std::swap(real_buf_, other.real_buf_);
    std::swap(cplx_buf_, other.cplx_buf_);
    return *this;
}

void RealFft::forward(std::span<const double> input, std::span<std::complex<double>> output) {
    assert(static_cast<int>(input.size()) == n_ && static_cast<int>(output.size()) == bins());
    auto* cbuf = static_cast<fftw_complex*>(cplx_buf_);
    for (int i = 0; i < n_; ++i) real_buf_[i] = input[i];
    fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_fwd_), real_buf_, cbuf);
    for (int k = 0; k < bins(); ++k) output[k] = {cbuf[k][0], cbuf[k][1]};
}

void RealFft::forward(std::span<const float> input, std::span<std::complex<float>> output) {
    assert(static_cast<int>(input.size()) == n_ && static_cast<int>(output.size()) == bins());
    auto* cbuf = static_cast<fftw_complex*>(cplx_buf_);
    for (int i = 0; i < n_; ++i) real_buf_[i] = input[i];
    fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_fwd_), real_buf_, cbuf);
    for (int k = 0; k < bins(); ++k) {
        output[k] = {static_cast<float>(cbuf[k][0]), static_cast<float>(cbuf[k][1])};
    }
}

void RealFft::inverse(std::span<const std::complex<double>> input, std::span<double> output) {
    assert(static_cast<int>(input.size()) == bins() && static_cast<int>(output.size()) == n_);
    auto* cbuf = static_cast<fftw_complex*>(cplx_buf_);
    for (int k = 0; k < bins(); ++k) {
        cbuf[k][0] = input[k].real();
        cbuf[k][1] = input[k].imag();
    }
    // A real signal has purely real DC/Nyquist bins; drop any stray
    // imaginary part instead of leaving the result implementation-defined.
    cbuf[0][1] = 0.0;
    if (n_ % 2 == 0) cbuf[bins() - 1][1] = 0.0;
    fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_inv_), cbuf, real_buf_);
    const double scale = 1.0 / n_;
    for (int i = 0; i < n_; ++i) output[i] = real_buf_[i] * scale;
}

void RealFft::inverse(std::span<const std::complex<float>> input, std::span<float> output) {
    assert(static_cast<int>(input.size()) == bins() && static_cast<int>(output.size()) == n_);
    auto* cbuf = static_cast<fftw_complex*>(cplx_buf_);
    for (int k = 0; k < bins(); ++k) {
        cbuf[k][0] = input[k].real();
        cbuf[k][1] = input[k].imag();
    }
    cbuf[0][1] = 0.0;
    if (n_ % 2 == 0) cbuf[bins() - 1][1] = 0.0;
    fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_inv_), cbuf, real_buf_);
    const double scale = 1.0 / n_;
    for (int i = 0; i < n_; ++i) output[i] = static_cast<float>(real_buf_[i] * scale);
}

}  // namespace naw
