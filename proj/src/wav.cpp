#include "naw/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "naw/framing.hpp"

namespace naw {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}

uint32_t read_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xFF));
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
}

void put_tag(std::vector<uint8_t>& out, const char* tag) {
    out.insert(out.end(), tag, tag + 4);
}

}  // namespace

WavClip wav_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open file");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        fail(path, "not a RIFF/WAVE file");

    bool have_fmt = false;
    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const uint8_t* data = nullptr;
    uint32_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
        const uint32_t len = read_u32(bytes.data() + pos + 4);
        pos += 8;
        if (pos + len > bytes.size()) fail(path, "truncated chunk");
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            if (len < 16) fail(path, "fmt chunk too short");
            const uint8_t* f = bytes.data() + pos;
            format = read_u16(f);
            channels = read_u16(f + 2);
            rate = read_u32(f + 4);
            bits = read_u16(f + 14);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            data = bytes.data() + pos;
            data_len = len;
        }
        pos += len + (len & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr) fail(path, "missing fmt or data chunk");
    if (channels != 1)
        fail(path, "expected mono audio, file has " + std::to_string(channels) + " channels");
    if (rate != static_cast<uint32_t>(kSampleRate))
        fail(path, "expected " + std::to_string(kSampleRate) + " Hz, file is " +
                       std::to_string(rate) + " Hz");

    WavClip clip;
    clip.sample_rate = static_cast<int>(rate);
    if (format == kFormatPcm && bits == 16) {
        const size_t n = data_len / 2;
        clip.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            const auto v = static_cast<int16_t>(read_u16(data + i * 2));
            clip.samples[i] = static_cast<float>(v) / 32768.0f;
        }
    } else if (format == kFormatFloat && bits == 32) {
        const size_t n = data_len / 4;
        clip.samples.resize(n);
        for (size_t i = 0; i < n; ++i)
            clip.samples[i] = std::bit_cast<float>(read_u32(data + i * 4));
    } else {
        fail(path, "unsupported sample format (format tag " + std::to_string(format) + ", " +
                       std::to_string(bits) + " bits); expected PCM16 or float32");
    }
    return clip;
}

void wav_write(const std::string& path, const WavClip& clip, WavFormat format) {
    if (clip.sample_rate != kSampleRate)
        fail(path, "refusing to write a non-" + std::to_string(kSampleRate) + " Hz clip");
    const bool pcm = format == WavFormat::pcm16;
    const uint32_t bytes_per = pcm ? 2 : 4;
    const uint32_t data_len = static_cast<uint32_t>(clip.samples.size() * bytes_per);

    std::vector<uint8_t> out;
    out.reserve(44 + data_len);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_len);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, pcm ? kFormatPcm : kFormatFloat);
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<uint32_t>(clip.sample_rate));
    put_u32(out, static_cast<uint32_t>(clip.sample_rate) * bytes_per);
    put_u16(out, static_cast<uint16_t>(bytes_per));
    put_u16(out, static_cast<uint16_t>(pcm ? 16 : 32));
    put_tag(out, "data");
    put_u32(out, data_len);
    for (float s : clip.samples) {
        if (pcm) {
            const long v = std::lround(static_cast<double>(s) * 32768.0);
            put_u16(out, static_cast<uint16_t>(
                             static_cast<int16_t>(std::clamp(v, -32768L, 32767L))));
        } else {
            put_u32(out, std::bit_cast<uint32_t>(s));
        }
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) fail(path, "cannot open file for writing");
    file.write(reinterpret_cast<const char*>(out.data()), static_cast<long>(out.size()));
    if (!file) fail(path, "short write");
}

}  // namespace naw
