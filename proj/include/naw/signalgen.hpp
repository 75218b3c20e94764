#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace naw {

/// Seeded Gaussian noise with the given standard deviation. The generator
/// (mt19937_64 + explicit Box-Muller) is pinned here rather than delegated
/// to std::normal_distribution so the samples are identical across
/// standard-library implementations.
std::vector<float> white_noise(size_t n, double stddev, uint64_t seed);

/// 1/f^exponent power-law noise: white noise shaped in the frequency domain
/// by 1/f^(exponent/2), DC removed, normalized to unit sample std, then
/// scaled. exponent 1 = pink, 2 = brown.
std::vector<float> colored_noise(size_t n, int exponent, double scale, uint64_t seed);

/// Full linear convolution truncated to the signal length.
std::vector<float> fir_convolve(std::span<const float> signal, std::span<const float> ir);

struct MixResult {
    std::vector<float> mixture;
    std::vector<float> scaled_noise;
};

/// Scales noise so 10*log10(|speech|^2/|noise'|^2) hits the target and adds
/// it to the speech. +infinity means "no noise" (scale 0). Throws on length
/// mismatch, all-zero speech, or zero-energy noise with a finite target.
MixResult mix(std::span<const float> speech, std::span<const float> noise,
              double snr_db_target);

/// Windowed-sinc resampling to length round(n/factor); factor must lie in
/// [0.8, 1.2]. factor > 1 speeds the signal up (shorter output, pitched up).
std::vector<float> speed_perturb(std::span<const float> signal, double factor);

}  // namespace naw
