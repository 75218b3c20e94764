#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "naw/container.hpp"
#include "naw/engine_config.hpp"
#include "naw/framing.hpp"
#include "naw/signalgen.hpp"
#include "naw/wav.hpp"
#include "naw/weights.hpp"

using namespace naw;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("naw_io_test_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.blocks = 1;
    cfg.channels = 4;
    cfg.hidden = 3;
    cfg.freq_stride = 4;
    return cfg;
}

}  // namespace

TEST_CASE("float wav files round-trip bit-exactly") {
    TempDir dir;
    WavClip clip;
    clip.samples = white_noise(1234, 0.4, 3);
    const std::string path = dir.file("f32.wav");
    wav_write(path, clip, WavFormat::float32);
    const WavClip back = wav_read(path);
    CHECK(back.sample_rate == 16000);
    CHECK(back.samples == clip.samples);
}

TEST_CASE("pcm16 wav files round-trip on the 16-bit lattice") {
    TempDir dir;
    WavClip clip;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 2000; ++i)
        clip.samples.push_back(static_cast<float>(static_cast<int>(rng() % 65536) - 32768) /
                               32768.0f);
    const std::string path = dir.file("pcm.wav");
    wav_write(path, clip, WavFormat::pcm16);
    const WavClip back = wav_read(path);
    REQUIRE(back.samples.size() == clip.samples.size());
    for (size_t i = 0; i < clip.samples.size(); ++i) {
        CAPTURE(i);
        REQUIRE(back.samples[i] == clip.samples[i]);  // inputs already on the lattice
    }

    // Out-of-range samples clamp to the representable ends rather than wrap.
    WavClip hot;
    hot.samples = {1.5f, -1.5f, 1.0f, -1.0f};
    const std::string hot_path = dir.file("hot.wav");
    wav_write(hot_path, hot, WavFormat::pcm16);
    const WavClip hot_back = wav_read(hot_path);
    CHECK(hot_back.samples[0] == doctest::Approx(32767.0 / 32768.0));
    CHECK(hot_back.samples[1] == -1.0f);
    CHECK(hot_back.samples[2] == doctest::Approx(32767.0 / 32768.0));
    CHECK(hot_back.samples[3] == -1.0f);
}

TEST_CASE("wav reading rejects anything but mono 16 kHz") {
    TempDir dir;

    // Stereo PCM16, 16 kHz: reject with the channel count in the message.
    {
        const std::string path = dir.file("stereo.wav");
        std::ofstream out(path, std::ios::binary);
        auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
        auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
        out.write("RIFF", 4);
        u32(36 + 8);
        out.write("WAVE", 4);
        out.write("fmt ", 4);
        u32(16);
        u16(1);      // PCM
        u16(2);      // stereo
        u32(16000);  // rate
        u32(16000 * 4);
        u16(4);
        u16(16);
        out.write("data", 4);
        u32(8);
        u32(0);
        u32(0);
        out.close();
        CHECK_THROWS_WITH_AS(wav_read(path), doctest::Contains("2"), std::runtime_error);
    }

    // Wrong sample rate.
    {
        const std::string path = dir.file("rate.wav");
        WavClip clip;
        clip.samples = {0.0f, 0.1f};
        clip.sample_rate = 8000;
        CHECK_THROWS_AS(wav_write(path, clip), std::runtime_error);
    }

    CHECK_THROWS_AS(wav_read(dir.file("missing.wav")), std::runtime_error);

    // Truncated header.
    {
        const std::string path = dir.file("trunc.wav");
        std::ofstream out(path, std::ios::binary);
        out.write("RIFF", 4);
        out.close();
        CHECK_THROWS_AS(wav_read(path), std::runtime_error);
    }
}

TEST_CASE("weight containers round-trip every dtype bit-exactly") {
    TempDir dir;
    const ModelConfig cfg = tiny_model();
    const FramingConfig fr;
    const int n_bins = fr.n_bins();
    const WeightStore f32_store = random_init(cfg, n_bins, 7);

    // Calibrate so int8 layers carry activation specs through the container.
    std::vector<std::vector<float>> clips{white_noise(1920, 0.25, 9)};
    const ActivationSpecs specs = calibrate_activations(f32_store, cfg, fr, clips, true, 0.9);

    const PrecisionPlan plan = PrecisionPlan::for_mode(cfg, Mode::mixed);
    const WeightStore packed = pack_weights(f32_store, plan);

    const std::string path = dir.file("model.naw");
    const std::string config = "{\"model\":{\"blocks\":1,\"channels\":4,\"hidden\":3}}";
    container_save(path, packed, specs, config);
    const ContainerData back = container_load(path);

    CHECK(back.config_json == config);
    CHECK(back.store.tensors.size() == packed.tensors.size());
    for (const auto& [name, t] : packed.tensors) {
        CAPTURE(name);
        REQUIRE(back.store.has(name));
        const Tensor& bt = back.store.at(name);
        CHECK(bt.shape == t.shape);
        CHECK(bt.dtype == t.dtype);
        CHECK(bt.f32 == t.f32);
        CHECK(bt.i8 == t.i8);
        if (t.dtype == Dtype::i8) {
            REQUIRE(bt.qspec.scale.size() == t.qspec.scale.size());
            CHECK(bt.qspec.scale == t.qspec.scale);
            CHECK(bt.qspec.zero_point == t.qspec.zero_point);
            CHECK(bt.qspec.channel_axis == t.qspec.channel_axis);
        }
    }
    CHECK(back.specs.sites.size() == specs.sites.size());
    for (const auto& [site, qs] : specs.sites) {
        CAPTURE(site);
        const QuantSpec& bqs = back.specs.at(site);
        CHECK(bqs.scale == qs.scale);
        CHECK(bqs.zero_point == qs.zero_point);
    }
}

TEST_CASE("packing converts dtypes per plan without touching f32 layers") {
    const ModelConfig cfg = tiny_model();
    const int n_bins = FramingConfig{}.n_bins();
    const WeightStore store = random_init(cfg, n_bins, 11);

    PrecisionPlan plan = PrecisionPlan::for_mode(cfg, Mode::f32);
    plan.layers["encoder.conv"] = Precision::bf16;
    plan.layers["decoder.deconv"] = Precision::int8;
    const WeightStore packed = pack_weights(store, plan);

    // f32 layer: untouched.
    CHECK(packed.at("block.0.temporal.proj.weight").dtype == Dtype::f32);
    CHECK(packed.at("block.0.temporal.proj.weight").f32 ==
          store.at("block.0.temporal.proj.weight").f32);

    // bf16 layer: f32 payload rounded onto the bf16 value set.
    const Tensor& enc = packed.at("encoder.conv.weight");
    CHECK(enc.dtype == Dtype::bf16);
    const auto& orig = store.at("encoder.conv.weight").f32;
    REQUIRE(enc.f32.size() == orig.size());
    for (size_t i = 0; i < enc.f32.size(); ++i) {
        CHECK(enc.f32[i] == bf16_round(orig[i]));
        CHECK(bf16_round(enc.f32[i]) == enc.f32[i]);
    }

    // int8 weights: per-channel lattice values; biases stay f32.
    const Tensor& dec = packed.at("decoder.deconv.weight");
    CHECK(dec.dtype == Dtype::i8);
    CHECK(dec.i8.size() == dec.f32.size());
    CHECK(dec.qspec.scheme == QScheme::per_channel_sym);
    const std::vector<float> deq = dequantize(
        QuantizedTensor{dec.i8, dec.shape, dec.qspec});
    CHECK(deq == dec.f32);
    CHECK(packed.at("decoder.deconv.bias").dtype == Dtype::f32);
}

TEST_CASE("corrupt containers are rejected up front") {
    TempDir dir;
    const ModelConfig cfg = tiny_model();
    const WeightStore store = random_init(cfg, FramingConfig{}.n_bins(), 13);
    const std::string path = dir.file("model.naw");
    container_save(path, store, ActivationSpecs{}, "{}");

    // Bad magic.
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
        f.close();
        CHECK_THROWS_AS(container_load(path), std::runtime_error);
    }

    // Truncated payload.
    container_save(path, store, ActivationSpecs{}, "{}");
    {
        const auto full = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, full / 2);
        CHECK_THROWS_AS(container_load(path), std::runtime_error);
    }

    CHECK_THROWS_AS(container_load(dir.file("absent.naw")), std::runtime_error);
}

TEST_CASE("config documents round-trip and reject unknown keys") {
    EngineConfig cfg;
    cfg.model.blocks = 3;
    cfg.model.activation = Activation::relu;
    cfg.mode = Mode::mixed;
    cfg.pre_emphasis = false;
    cfg.plan_overrides["block.0.temporal.proj"] = Precision::f32;
    cfg.bench.seconds = 2.5;
    cfg.bench.seed = 99;

    const std::string text = config_to_json(cfg);
    const EngineConfig back = config_from_json(text);
    CHECK(back.model.blocks == 3);
    CHECK(back.model.activation == Activation::relu);
    CHECK(back.mode == Mode::mixed);
    CHECK(back.pre_emphasis == false);
    CHECK(back.plan_overrides.at("block.0.temporal.proj") == Precision::f32);
    CHECK(back.bench.seconds == 2.5);
    CHECK(back.bench.seed == 99);
    CHECK(back.framing.chunk == 96);

    // Defaults: an empty document is the reference setup.
    const EngineConfig defaults = config_from_json("{}");
    CHECK(defaults.model.blocks == 6);
    CHECK(defaults.model.channels == 32);
    CHECK(defaults.framing.lookback == 96);
    CHECK(defaults.framing.lookahead == 64);
    CHECK(defaults.mode == Mode::f32);
    CHECK(defaults.pre_emphasis == true);

    CHECK_THROWS_WITH_AS(config_from_json("{\"modle\":\"f32\"}"), doctest::Contains("modle"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(config_from_json("{\"framing\":{\"chunks\":96}}"),
                         doctest::Contains("chunks"), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json("{\"framing\":{\"chunk\":0}}"), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json("{\"mode\":\"int4\"}"), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json("not json"), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json("{\"calibration\":{\"momentum\":0.0}}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(config_from_json("{\"bench\":{\"seconds\":-1}}"), std::invalid_argument);
}

TEST_CASE("plan resolution applies overrides to the mode baseline") {
    EngineConfig cfg;
    cfg.mode = Mode::int8;
    cfg.plan_overrides["encoder.conv"] = Precision::f32;
    const PrecisionPlan plan = resolve_plan(cfg);
    CHECK(plan.at("encoder.conv") == Precision::f32);
    CHECK(plan.at("decoder.deconv") == Precision::int8);
    CHECK(plan.at("block.3.spectral.expand") == Precision::int8);

    EngineConfig bad = cfg;
    bad.plan_overrides.clear();
    bad.plan_overrides["block.9.spectral.expand"] = Precision::f32;
    CHECK_THROWS_WITH_AS(resolve_plan(bad), doctest::Contains("block.9.spectral.expand"),
                         std::invalid_argument);
}
