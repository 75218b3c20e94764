#pragma once

#include <string>
#include <vector>

namespace naw {

/// Mono 16 kHz audio in [-1, 1].
struct WavClip {
    std::vector<float> samples;
    int sample_rate = 16000;
};

enum class WavFormat {
    pcm16,    ///< 16-bit PCM, samples scaled by 1/32768
    float32,  ///< IEEE float, lossless round-trip
};

/// Reads a RIFF/WAVE file. Accepts mono 16 kHz PCM16 or float32 only; any
/// other rate, channel count, or sample format raises std::runtime_error
/// naming the offending field. No resampling.
WavClip wav_read(const std::string& path);

/// Writes a RIFF/WAVE file in the requested sample format.
void wav_write(const std::string& path, const WavClip& clip,
               WavFormat format = WavFormat::float32);

}  // namespace naw
