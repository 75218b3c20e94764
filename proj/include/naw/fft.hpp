#pragma once

#include <complex>
#include <span>
#include <vector>

namespace naw {

/// One-dimensional real FFT of a fixed size, double precision internally.
/// Each instance owns its plans and scratch buffers; instances are not
/// shareable across threads, but creating one per thread is cheap.
class RealFft {
public:
    explicit RealFft(int n);
    ~RealFft();

    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;
    RealFft(RealFft&& other) noexcept;
    RealFft& operator=(RealFft&& other) noexcept;

    int size() const { return n_; }
    int bins() const { return n_ / 2 + 1; }

    // time -> spectrum, no normalization
    void forward(std::span<const float> input, std::span<std::complex<float>> output);
    void forward(std::span<const double> input, std::span<std::complex<double>> output);

    // spectrum -> time, scaled by 1/n so forward∘inverse is the identity
    void inverse(std::span<const std::complex<float>> input, std::span<float> output);
    void inverse(std::span<const std::complex<double>> input, std::span<double> output);

private:
    int n_ = 0;
    void* plan_fwd_ = nullptr;  // fftw_plan
    void* plan_inv_ = nullptr;
    double* real_buf_ = nullptr;
    void* cplx_buf_ = nullptr;  // fftw_complex*
};

}  // namespace naw
