#include "naw/signalgen.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

#include "naw/fft.hpp"

namespace naw {

namespace {

// 53-bit mantissa uniform in [0, 1); identical on every platform for a
// given seed, unlike std::uniform_real_distribution.
double next_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// One standard-normal pair via Box-Muller.
void next_gaussian_pair(std::mt19937_64& rng, double* z0, double* z1) {
    const double u1 = 1.0 - next_uniform(rng);  // (0, 1], keeps the log finite
    const double u2 = next_uniform(rng);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    *z0 = rad * std::cos(ang);
    *z1 = rad * std::sin(ang);
}

std::vector<double> gaussian_samples(size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> out(n);
    for (size_t i = 0; i < n; i += 2) {
        double z0 = 0.0, z1 = 0.0;
        next_gaussian_pair(rng, &z0, &z1);
        out[i] = z0;
        if (i + 1 < n) out[i + 1] = z1;
    }
    return out;
}

double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

}  // namespace

std::vector<float> white_noise(size_t n, double stddev, uint64_t seed) {
    if (n == 0) throw std::invalid_argument("white_noise: n must be >= 1");
    if (stddev < 0.0) throw std::invalid_argument("white_noise: negative std");
    const std::vector<double> z = gaussian_samples(n, seed);
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<float>(stddev * z[i]);
    return out;
}

std::vector<float> colored_noise(size_t n, int exponent, double scale, uint64_t seed) {
    if (n < 2) throw std::invalid_argument("colored_noise: n must be >= 2");
    if (exponent != 1 && exponent != 2)
        throw std::invalid_argument("colored_noise: exponent must be 1 (pink) or 2 (brown)");
    if (scale < 0.0) throw std::invalid_argument("colored_noise: negative scale");

    std::vector<double> time = gaussian_samples(n, seed);
    RealFft fft(static_cast<int>(n));
    std::vector<std::complex<double>> spec(static_cast<size_t>(fft.bins()));
    fft.forward(time, spec);
    spec[0] = 0.0;  // zero mean by construction
    for (size_t k = 1; k < spec.size(); ++k)
        spec[k] *= 1.0 / std::pow(static_cast<double>(k), exponent / 2.0);
    fft.inverse(spec, time);

    double energy = 0.0;
    for (double v : time) energy += v * v;
    const double sample_std = std::sqrt(energy / static_cast<double>(n));
    std::vector<float> out(n, 0.0f);
    if (sample_std > 0.0) {
        const double g = scale / sample_std;
        for (size_t i = 0; i < n; ++i) out[i] = static_cast<float>(time[i] * g);
    }
    return out;
}

std::vector<float> fir_convolve(std::span<const float> signal, std::span<const float> ir) {
    if (ir.empty()) throw std::invalid_argument("fir_convolve: empty impulse response");
    std::vector<float> out(signal.size(), 0.0f);
    for (size_t i = 0; i < signal.size(); ++i) {
        double acc = 0.0;
        const size_t jmax = std::min(ir.size() - 1, i);
        for (size_t j = 0; j <= jmax; ++j)
            acc += static_cast<double>(ir[j]) * signal[i - j];
        out[i] = static_cast<float>(acc);
    }
    return out;
}

MixResult mix(std::span<const float> speech, std::span<const float> noise,
              double snr_db_target) {
    if (speech.size() != noise.size())
        throw std::invalid_argument("mix: speech/noise length mismatch");
    if (speech.empty()) throw std::invalid_argument("mix: empty input");
    double es = 0.0, en = 0.0;
    for (size_t i = 0; i < speech.size(); ++i) {
        es += static_cast<double>(speech[i]) * speech[i];
        en += static_cast<double>(noise[i]) * noise[i];
    }
    if (es <= 0.0) throw std::invalid_argument("mix: all-zero speech");

    double g = 0.0;
    if (std::isinf(snr_db_target)) {
        if (snr_db_target < 0.0)
            throw std::invalid_argument("mix: snr target must be finite or +infinity");
        g = 0.0;  // +inf dB: no noise at all
    } else {
        if (en <= 0.0)
            throw std::invalid_argument("mix: zero-energy noise with a finite snr target");
        g = std::sqrt(es * std::pow(10.0, -snr_db_target / 10.0) / en);
    }

    MixResult r;
    r.scaled_noise.resize(speech.size());
    r.mixture.resize(speech.size());
    for (size_t i = 0; i < speech.size(); ++i) {
        r.scaled_noise[i] = static_cast<float>(g * noise[i]);
        r.mixture[i] = static_cast<float>(speech[i] + g * noise[i]);
    }
    return r;
}

std::vector<float> speed_perturb(std::span<const float> signal, double factor) {
    if (!(factor >= 0.8 && factor <= 1.2))
        throw std::invalid_argument("speed_perturb: factor must lie in [0.8, 1.2]");
    if (signal.empty()) return {};

    constexpr int kHalfTaps = 16;  // 32-tap kernel
    constexpr double kKaiserBeta = 8.0;
    const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
    const double cutoff = std::min(1.0, 1.0 / factor);

    const size_t out_len =
        static_cast<size_t>(std::llround(static_cast<double>(signal.size()) / factor));
    std::vector<float> out(out_len, 0.0f);
    const auto n = static_cast<long>(signal.size());
    for (size_t m = 0; m < out_len; ++m) {
        const double t = static_cast<double>(m) * factor;
        const long j0 = static_cast<long>(std::ceil(t)) - kHalfTaps;
        const long j1 = static_cast<long>(std::floor(t)) + kHalfTaps;
        double acc = 0.0;
        for (long j = std::max(0L, j0); j <= std::min(n - 1, j1); ++j) {
            const double x = t - static_cast<double>(j);
            const double u = x / kHalfTaps;
            const double arg = std::sqrt(std::max(0.0, 1.0 - u * u));
            const double win = std::cyl_bessel_i(0.0, kKaiserBeta * arg) / i0_beta;
            acc += static_cast<double>(signal[static_cast<size_t>(j)]) * cutoff *
                   sinc(cutoff * x) * win;
        }
        out[m] = static_cast<float>(acc);
    }
    return out;
}

}  // namespace naw
