#pragma once

#include <complex>
#include <span>
#include <vector>

#include "naw/fft.hpp"
#include "naw/framing.hpp"

namespace naw {

/// Complex bins of one analysis frame (n_bins entries; bin 0 and the
/// Nyquist bin carry no imaginary part).
using SpectralFrame = std::vector<std::complex<float>>;

inline constexpr float kPreEmphasisCoeff = 0.97f;

/// In-place high-pass y[n] = x[n] - coeff*x[n-1]; `carry` is the raw input
/// sample preceding the chunk. Returns the carry for the next chunk.
float pre_emphasis(std::span<float> chunk, float carry, float coeff = kPreEmphasisCoeff);

/// Piecewise-constant synthesis window before coverage normalization:
/// 1 on [lookahead, chunk), 1/(floor((chunk+lookback)/chunk)+1) elsewhere,
/// defined on the frame with the lookback region already discarded.
std::vector<float> build_raw_synthesis_window(const FramingConfig& cfg);

/// Shifted-sum of the window at hop `chunk`, evaluated at every offset of
/// the window support. Throws if any entry is zero.
std::vector<float> cola_coverage(const FramingConfig& cfg, std::span<const float> raw_window);

/// Raw window divided by its measured coverage, so that overlap-added
/// copies at hop `chunk` sum to exactly one at every offset.
std::vector<float> build_synthesis_window(const FramingConfig& cfg);

/// Overlap-add carry between consecutive synthesis steps of one stream.
struct OlaState {
    std::vector<float> tail;      // pending contribution, length lookahead
    std::vector<float> coverage;  // per-offset window coverage, length chunk+lookahead
    float emphasis_carry = 0.0f;  // raw input sample preceding the next chunk

    static OlaState init(const FramingConfig& cfg);
};

/// DFT of one unwindowed frame [lookback | chunk | lookahead].
SpectralFrame analysis_stft(RealFft& fft, std::span<const float> frame);

/// Inverse DFT, lookback discard, synthesis windowing and overlap-add.
/// Emits `chunk` finished samples and retains `lookahead` samples in
/// state.tail for the next step.
std::vector<float> synthesis_chunk(RealFft& fft, const FramingConfig& cfg,
                                   std::span<const std::complex<float>> frame_spec,
                                   OlaState& state, std::span<const float> window);

}  // namespace naw
