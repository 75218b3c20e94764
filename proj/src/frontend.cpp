#include "naw/frontend.hpp"

#include <cmath>
#include <stdexcept>

namespace naw {

float pre_emphasis(std::span<float> chunk, float carry, float coeff) {
    for (float& x : chunk) {
        const float raw = x;
        x = raw - coeff * carry;
        carry = raw;
    }
    return carry;
}

std::vector<float> build_raw_synthesis_window(const FramingConfig& cfg) {
    const int len = cfg.synth_len();
    const float off = 1.0f / static_cast<float>((cfg.chunk + cfg.lookback) / cfg.chunk + 1);
    std::vector<float> w(static_cast<size_t>(len), off);
    for (int i = cfg.lookahead; i < cfg.chunk; ++i) w[static_cast<size_t>(i)] = 1.0f;
    return w;
}

std::vector<float> cola_coverage(const FramingConfig& cfg, std::span<const float> raw_window) {
    const int len = static_cast<int>(raw_window.size());
    std::vector<float> cov(raw_window.size(), 0.0f);
    const int max_shift = len / cfg.chunk + 1;
    for (int t = 0; t < len; ++t) {
        float sum = 0.0f;
        for (int k = -max_shift; k <= max_shift; ++k) {
            const int idx = t - k * cfg.chunk;
            if (idx >= 0 && idx < len) sum += raw_window[static_cast<size_t>(idx)];
        }
        if (sum == 0.0f)
            throw std::invalid_argument("synthesis window has zero coverage at offset " +
                                        std::to_string(t));
        cov[static_cast<size_t>(t)] = sum;
    }
    return cov;
}

std::vector<float> build_synthesis_window(const FramingConfig& cfg) {
    std::vector<float> w = build_raw_synthesis_window(cfg);
    const std::vector<float> cov = cola_coverage(cfg, w);
    for (size_t i = 0; i < w.size(); ++i) w[i] /= cov[i];
    return w;
}

OlaState OlaState::init(const FramingConfig& cfg) {
    OlaState st;
    st.tail.assign(static_cast<size_t>(cfg.lookahead), 0.0f);
    st.coverage = cola_coverage(cfg, build_raw_synthesis_window(cfg));
    st.emphasis_carry = 0.0f;
    return st;
}

SpectralFrame analysis_stft(RealFft& fft, std::span<const float> frame) {
    SpectralFrame spec(static_cast<size_t>(fft.size() / 2 + 1));
    fft.forward(frame, spec);
    return spec;
}

std::vector<float> synthesis_chunk(RealFft& fft, const FramingConfig& cfg,
                                   std::span<const std::complex<float>> frame_spec,
                                   OlaState& state, std::span<const float> window) {
    std::vector<float> time(static_cast<size_t>(cfg.fft_size()));
    fft.inverse(frame_spec, time);

    // The first `lookback` samples are analysis context only; the synthesis
    // window covers the remaining chunk+lookahead samples.
    const float* seg = time.data() + cfg.lookback;
    const int lc = cfg.chunk;
    const int lf = cfg.lookahead;

    std::vector<float> out(static_cast<size_t>(lc));
    for (int i = 0; i < lc; ++i) {
        float v = seg[i] * window[static_cast<size_t>(i)];
        if (i < lf) v += state.tail[static_cast<size_t>(i)];
        out[static_cast<size_t>(i)] = v;
    }
    for (int i = 0; i < lf; ++i)
        state.tail[static_cast<size_t>(i)] = seg[lc + i] * window[static_cast<size_t>(lc + i)];
    return out;
}

}  // namespace naw
