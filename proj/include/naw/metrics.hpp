#pragma once

#include <span>
#include <vector>

namespace naw {

/// Epsilon guarding metric denominators and log arguments.
inline constexpr double kMetricEps = 1e-8;
/// Metric values are clamped to ±kMetricCapDb so degenerate pairs (zero
/// residual, zero projection) still yield finite, ordered results.
inline constexpr double kMetricCapDb = 80.0;

/// Scale-invariant signal-to-distortion ratio: est is projected onto ref
/// and the target/residual energy ratio reported in dB. Throws on length
/// mismatch, empty input, or an all-zero reference.
double sisdr(std::span<const float> est, std::span<const float> ref);

/// Improvement of est over the unprocessed mixture against the same
/// reference: sisdr(est, ref) - sisdr(mix, ref).
double sisdri(std::span<const float> est, std::span<const float> mix,
              std::span<const float> ref);

/// Plain signal-to-noise ratio 10*log10(|ref|^2 / (|ref-est|^2 + eps)) in dB.
double snr_db(std::span<const float> est, std::span<const float> ref);

/// One STFT resolution of the multi-resolution spectral loss.
struct StftResolution {
    int fft_size = 0;
    int hop = 0;
};

/// Default resolution set: (512,128), (1024,256), (2048,512).
std::vector<StftResolution> default_mrstft_resolutions();

/// Mean over resolutions of spectral convergence plus log-magnitude L1,
/// computed on periodic-Hann magnitude spectrograms. Throws when the
/// signals are shorter than the largest fft size.
double mrstft_loss(std::span<const float> est, std::span<const float> ref,
                   std::span<const StftResolution> resolutions);
double mrstft_loss(std::span<const float> est, std::span<const float> ref);

/// Trims `delay` leading samples from est and the matching tail from ref so
/// a stream's fixed latency does not bias sample-aligned metrics.
struct AlignedPair {
    std::vector<float> est;
    std::vector<float> ref;
};
AlignedPair align_delay(std::span<const float> est, std::span<const float> ref, int delay);

}  // namespace naw
