#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>

namespace naw::fastmath {

// Polynomial exp/sigmoid/tanh accurate to ~1e-7 absolute, written so the
// compiler can vectorize the gate loops; std::exp-based gates would dominate
// the per-chunk budget on a single core.

inline float fast_exp(float x) {
    // exp(x) = 2^n * e^r, r in [-ln2/2, ln2/2], degree-6 Taylor for e^r.
    x = std::clamp(x, -87.0f, 87.0f);
    const float inv_ln2 = 1.4426950408889634f;
    float nf = x * inv_ln2 + 12582912.0f;  // round-to-nearest via magic number
    const int32_t n = std::bit_cast<int32_t>(nf) - std::bit_cast<int32_t>(12582912.0f);
    nf -= 12582912.0f;
    const float ln2_hi = 0.693359375f;
    const float ln2_lo = -2.12194440e-4f;
    const float r = (x - nf * ln2_hi) - nf * ln2_lo;
    float p = 1.0f / 720.0f;
    p = p * r + 1.0f / 120.0f;
    p = p * r + 1.0f / 24.0f;
    p = p * r + 1.0f / 6.0f;
    p = p * r + 0.5f;
    p = p * r + 1.0f;
    p = p * r + 1.0f;
    // scale by 2^n through the exponent bits (n is within float range here)
    return p * std::bit_cast<float>(static_cast<uint32_t>(n + 127) << 23);
}

inline float sigmoid(float x) {
    if (x >= 0.0f) {
        return 1.0f / (1.0f + fast_exp(-x));
    }
    const float e = fast_exp(x);
    return e / (1.0f + e);
}

inline float tanh(float x) {
    if (x > 9.0f) return 1.0f;
    if (x < -9.0f) return -1.0f;
    // tanh(x) = 2*sigmoid(2x) - 1, stable over the unsaturated range
    const float e = fast_exp(-2.0f * std::abs(x));
    const float t = (1.0f - e) / (1.0f + e);
    return x < 0.0f ? -t : t;
}

}  // namespace naw::fastmath
