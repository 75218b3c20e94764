#pragma once

#include <cstddef>

namespace naw {

inline constexpr int kSampleRate = 16000;

/// Chunk geometry of the streaming frontend. Each DFT frame is the
/// concatenation [lookback | chunk | lookahead]; the hop equals the chunk
/// length, so one frame is produced per chunk.
struct FramingConfig {
    int sample_rate = kSampleRate;
    int lookback = 96;   // samples of past context per frame
    int chunk = 96;      // hop size; samples emitted per step
    int lookahead = 64;  // samples of future context per frame

    int fft_size() const { return lookback + chunk + lookahead; }
    int n_bins() const { return fft_size() / 2 + 1; }
    // window length after the lookback region is discarded
    int synth_len() const { return chunk + lookahead; }
    int latency_samples() const { return chunk + lookahead; }

    // Throws std::invalid_argument when the geometry is unusable.
    void validate() const;
};

}  // namespace naw
