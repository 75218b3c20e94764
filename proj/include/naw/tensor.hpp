#pragma once

#include <cstdint>
#include <vector>

namespace naw {

/// Activations of the dual-path stack: logically (channels, frames, bins),
/// stored frame-major with each frame a contiguous bins×channels slab so a
/// streaming step and a whole-utterance pass index the same memory shape.
struct FeatureTensor {
    int channels = 0;
    int frames = 0;
    int bins = 0;
    std::vector<float> data;

    FeatureTensor() = default;
    FeatureTensor(int c, int t, int f)
        : channels(c), frames(t), bins(f),
          data(static_cast<size_t>(c) * static_cast<size_t>(t) * static_cast<size_t>(f), 0.0f) {}

    float* frame(int t) { return data.data() + static_cast<size_t>(t) * frame_size(); }
    const float* frame(int t) const {
        return data.data() + static_cast<size_t>(t) * frame_size();
    }
    size_t frame_size() const {
        return static_cast<size_t>(channels) * static_cast<size_t>(bins);
    }

    float& at(int c, int t, int f) {
        return data[(static_cast<size_t>(t) * bins + f) * channels + c];
    }
    float at(int c, int t, int f) const {
        return data[(static_cast<size_t>(t) * bins + f) * channels + c];
    }
};

inline int64_t numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

}  // namespace naw
