// naw — streaming speech-enhancement engine CLI.
//
// Subcommands: enhance, calibrate, bench, verify, init-weights, score.
// Exit codes: 0 success, 1 usage, 2 I/O, 3 configuration, 4 failed checks.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "naw/container.hpp"
#include "naw/engine.hpp"
#include "naw/engine_config.hpp"
#include "naw/fft.hpp"
#include "naw/frontend.hpp"
#include "naw/metrics.hpp"
#include "naw/quant.hpp"
#include "naw/runner.hpp"
#include "naw/signalgen.hpp"
#include "naw/wav.hpp"
#include "naw/weights.hpp"

namespace {

using nlohmann::json;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw std::runtime_error("cannot read " + path);
    return text;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out.good()) throw std::runtime_error("cannot write " + path);
}

json timing_to_json(const naw::TimingSummary& t) {
    return json{{"chunks", t.chunks},
                {"p50_ms", t.p50_ms},
                {"p95_ms", t.p95_ms},
                {"max_ms", t.max_ms},
                {"rtf", t.rtf}};
}

// Container + resolved config + prepared runner for one invocation.
struct LoadedEngine {
    naw::ContainerData data;
    naw::EngineConfig cfg;
    naw::PrecisionPlan plan;
    std::unique_ptr<naw::ModelRunner> runner;
};

// `mode` empty keeps the container's stored mode; `config_path` non-empty
// replaces the embedded config document entirely.
LoadedEngine load_engine(const std::string& weights_path, const std::string& mode,
                         const std::string& config_path) {
    LoadedEngine le;
    le.data = naw::container_load(weights_path);
    std::string cfg_text = le.data.config_json;
    if (!config_path.empty()) cfg_text = read_text_file(config_path);
    le.cfg = naw::config_from_json(cfg_text);
    if (!mode.empty()) le.cfg.mode = naw::mode_from_string(mode);
    le.plan = naw::resolve_plan(le.cfg);
    const naw::ActivationSpecs* specs = le.data.specs.empty() ? nullptr : &le.data.specs;
    le.runner = std::make_unique<naw::ModelRunner>(le.data.store, le.cfg.model, le.cfg.framing,
                                                   le.plan, specs);
    le.runner->set_bypass(le.cfg.bypass);
    return le;
}

double chunk_budget_ms(const naw::FramingConfig& fr) {
    return 1000.0 * fr.chunk / fr.sample_rate;
}

// ---- enhance -----------------------------------------------------------

struct EnhanceOpts {
    std::string in, out, weights, mode, config, timing;
};

int run_enhance(const EnhanceOpts& o) {
    LoadedEngine le = load_engine(o.weights, o.mode, o.config);
    naw::WavClip clip = naw::wav_read(o.in);

    naw::StreamEngine engine(*le.runner, le.cfg.pre_emphasis);
    std::vector<double> chunk_ms;
    std::vector<float> enhanced = engine.run_stream(clip.samples, &chunk_ms);

    naw::wav_write(o.out, naw::WavClip{std::move(enhanced), clip.sample_rate});

    const naw::TimingSummary t =
        naw::summarize_timings(chunk_ms, chunk_budget_ms(le.cfg.framing));
    const std::string text = timing_to_json(t).dump(2);
    std::puts(text.c_str());
    if (!o.timing.empty()) write_text_file(o.timing, text + "\n");
    return 0;
}

// ---- calibrate ----------------------------------------------------------

struct CalibrateOpts {
    std::string weights, audio_dir, out, mode, report;
    double momentum = -1.0;  // <0: keep the container's value
};

int run_calibrate(const CalibrateOpts& o) {
    naw::ContainerData data = naw::container_load(o.weights);
    naw::EngineConfig cfg = naw::config_from_json(data.config_json);
    if (!o.mode.empty()) cfg.mode = naw::mode_from_string(o.mode);
    if (o.momentum >= 0.0) {
        if (!(o.momentum > 0.0 && o.momentum <= 1.0))
            throw std::invalid_argument("calibrate: momentum must lie in (0, 1]");
        cfg.calibration_momentum = o.momentum;
    }

    std::vector<std::string> paths;
    for (const auto& entry : std::filesystem::directory_iterator(o.audio_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".wav")
            paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::runtime_error("calibrate: no .wav files in " + o.audio_dir);

    std::vector<std::vector<float>> clips;
    clips.reserve(paths.size());
    for (const auto& p : paths) clips.push_back(naw::wav_read(p).samples);

    const naw::ActivationSpecs specs =
        naw::calibrate_activations(data.store, cfg.model, cfg.framing, clips, cfg.pre_emphasis,
                                   cfg.calibration_momentum);

    const naw::PrecisionPlan plan = naw::resolve_plan(cfg);
    const naw::WeightStore packed = naw::pack_weights(data.store, plan);
    naw::container_save(o.out, packed, specs, naw::config_to_json(cfg));

    json report = json::array();
    for (const auto& [site, spec] : specs.sites) {
        const auto& range = specs.ranges.at(site);
        report.push_back({{"site", site},
                          {"alpha", range.first},
                          {"beta", range.second},
                          {"scale", spec.scale.at(0)},
                          {"zero_point", spec.zero_point},
                          {"scheme", naw::to_string(spec.scheme)}});
    }
    const std::string text = report.dump(2);
    std::puts(text.c_str());
    if (!o.report.empty()) write_text_file(o.report, text + "\n");
    std::fprintf(stderr, "calibrated %zu sites from %zu clips -> %s\n", specs.sites.size(),
                 clips.size(), o.out.c_str());
    return 0;
}

// ---- bench ---------------------------------------------------------------

struct BenchOpts {
    std::string weights, mode;
    double seconds = -1.0;  // <0: keep the container's value
    int64_t seed = -1;
};

int run_bench(const BenchOpts& o) {
    naw::ContainerData data = naw::container_load(o.weights);
    naw::EngineConfig cfg = naw::config_from_json(data.config_json);
    if (!o.mode.empty()) cfg.mode = naw::mode_from_string(o.mode);
    if (o.seconds > 0.0) cfg.bench.seconds = o.seconds;
    if (o.seed >= 0) cfg.bench.seed = static_cast<uint64_t>(o.seed);

    const auto n = static_cast<size_t>(
        std::llround(cfg.bench.seconds * cfg.framing.sample_rate));
    const std::vector<float> signal = naw::white_noise(n, 0.25, cfg.bench.seed);

    const naw::PrecisionPlan plan = naw::resolve_plan(cfg);
    const bool has_int8 = std::any_of(plan.layers.begin(), plan.layers.end(), [](const auto& kv) {
        return kv.second == naw::Precision::int8;
    });
    naw::ActivationSpecs specs = data.specs;
    if (has_int8 && specs.empty()) {
        std::fprintf(stderr, "container has no calibration data; calibrating on the bench signal\n");
        specs = naw::calibrate_activations(data.store, cfg.model, cfg.framing, {signal},
                                           cfg.pre_emphasis, cfg.calibration_momentum);
    }

    naw::ModelRunner runner(data.store, cfg.model, cfg.framing, plan,
                            specs.empty() ? nullptr : &specs);
    naw::StreamEngine engine(runner, cfg.pre_emphasis);
    std::vector<double> chunk_ms;
    engine.run_stream(signal, &chunk_ms);

    const naw::TimingSummary t = naw::summarize_timings(chunk_ms, chunk_budget_ms(cfg.framing));
    std::puts(timing_to_json(t).dump(2).c_str());
    return 0;
}

// ---- init-weights ---------------------------------------------------------

struct InitOpts {
    std::string out, config;
    uint64_t seed = 1;
};

int run_init_weights(const InitOpts& o) {
    naw::EngineConfig cfg;
    if (!o.config.empty()) cfg = naw::config_from_json(read_text_file(o.config));
    const naw::WeightStore store =
        naw::random_init(cfg.model, cfg.framing.n_bins(), o.seed);
    naw::container_save(o.out, store, naw::ActivationSpecs{}, naw::config_to_json(cfg));

    json out{{"path", o.out},
             {"parameters", store.param_count()},
             {"file_bytes", static_cast<uint64_t>(std::filesystem::file_size(o.out))}};
    std::puts(out.dump(2).c_str());
    return 0;
}

// ---- score -----------------------------------------------------------------

struct ScoreOpts {
    std::string ref, est, mix;
    int delay = 0;
};

int run_score(const ScoreOpts& o) {
    const naw::WavClip ref = naw::wav_read(o.ref);
    const naw::WavClip est = naw::wav_read(o.est);
    const naw::AlignedPair pair = naw::align_delay(est.samples, ref.samples, o.delay);

    json rows = json::array();
    auto row = [&](const char* metric, double value) {
        rows.push_back({{"metric", metric}, {"value", value}, {"file", o.est}});
    };
    row("sisdr_db", naw::sisdr(pair.est, pair.ref));
    row("snr_db", naw::snr_db(pair.est, pair.ref));
    row("mrstft", naw::mrstft_loss(pair.est, pair.ref));
    if (!o.mix.empty()) {
        const naw::WavClip mix = naw::wav_read(o.mix);
        if (mix.samples.size() < pair.ref.size())
            throw std::invalid_argument("score: mixture is shorter than the aligned reference");
        const std::span<const float> mix_span(mix.samples.data(), pair.ref.size());
        row("sisdri_db", naw::sisdri(pair.est, mix_span, pair.ref));
    }
    std::puts(rows.dump(2).c_str());
    return 0;
}

// ---- verify -----------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Chunked analysis/synthesis round trip over white noise with a caller-chosen
// synthesis window; identity holds only for the properly normalized window.
CheckResult check_reconstruction(bool corrupt_window) {
    const naw::FramingConfig fr;
    std::vector<float> window = naw::build_synthesis_window(fr);
    if (corrupt_window) window[window.size() / 2] *= 1.01f;

    naw::RealFft fft(fr.fft_size());
    const std::vector<float> x = naw::white_noise(2 * fr.sample_rate, 0.25, 7);
    const int lb = fr.lookback, lc = fr.chunk;
    std::vector<float> ctx(static_cast<size_t>(lb) + 2 * lc, 0.0f);
    naw::OlaState ola = naw::OlaState::init(fr);
    std::vector<float> out;

    auto emit = [&](const float* frame) {
        const naw::SpectralFrame spec =
            naw::analysis_stft(fft, std::span<const float>(frame, fr.fft_size()));
        const std::vector<float> part = naw::synthesis_chunk(fft, fr, spec, ola, window);
        out.insert(out.end(), part.begin(), part.end());
    };
    const size_t chunks = x.size() / lc;
    for (size_t i = 0; i < chunks; ++i) {
        std::memmove(ctx.data(), ctx.data() + lc, (ctx.size() - lc) * sizeof(float));
        std::copy_n(x.data() + i * lc, lc, ctx.end() - lc);
        emit(ctx.data());
    }
    std::vector<float> last(fr.fft_size(), 0.0f);
    std::copy(ctx.begin() + lc, ctx.end(), last.begin());
    emit(last.data());

    // The first emitted chunk is the all-zero warmup frame; after that the
    // stream reproduces the input exactly one chunk late.
    double max_err = 0.0;
    for (size_t j = 0; j < chunks * lc; ++j)
        max_err = std::max(max_err, std::abs(double(out[lc + j]) - double(x[j])));
    for (int j = 0; j < lc; ++j) max_err = std::max(max_err, std::abs(double(out[j])));
    return {"perfect-reconstruction", max_err <= 1e-5,
            "max abs error " + std::to_string(max_err)};
}

CheckResult check_stream_offline() {
    const naw::FramingConfig fr;
    const naw::ModelConfig mc;
    const naw::PrecisionPlan plan = naw::PrecisionPlan::uniform(mc, naw::Precision::f32);
    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        const naw::WeightStore store = naw::random_init(mc, fr.n_bins(), seed);
        const naw::ModelRunner runner(store, mc, fr, plan, nullptr);
        const naw::StreamEngine engine(runner, true);
        const std::vector<float> x = naw::white_noise(fr.sample_rate, 0.25, 100 + seed);
        const std::vector<float> stream = engine.run_stream(x);
        const std::vector<float> offline = runner.forward_offline(x, true);
        if (stream.size() != offline.size() + static_cast<size_t>(fr.latency_samples()))
            return {"streaming-offline-equivalence", false, "length mismatch"};
        for (size_t j = 0; j < offline.size(); ++j)
            worst = std::max(worst, std::abs(double(stream[j]) - double(offline[j])));
    }
    return {"streaming-offline-equivalence", worst <= 1e-5,
            "3 seeds, max abs diff " + std::to_string(worst)};
}

CheckResult check_quant_bounds() {
    const naw::QuantSpec spec = naw::activation_spec(-3.0, 5.0);
    const double s = spec.scale.at(0);
    const double lo = (spec.qmin - spec.zero_point) * s;
    const double hi = (spec.qmax - spec.zero_point) * s;
    double worst = 0.0;
    for (int i = 0; i <= 2000; ++i) {
        const double r = lo + (hi - lo) * i / 2000.0;
        const double fq =
            naw::fake_quant_value<double>(r, s, spec.zero_point, spec.qmin, spec.qmax);
        worst = std::max(worst, std::abs(fq - r));
    }
    if (worst > s / 2 * (1 + 1e-9))
        return {"quantization-bounds", false, "in-range error above half a step"};

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
    std::vector<float> w(8 * 4 * 3 * 3);
    for (float& v : w) v = dist(rng);
    const naw::QuantSpec wspec = naw::weight_spec(w, {8, 4, 3, 3}, 0);
    const bool sym = wspec.scheme == naw::QScheme::per_channel_sym &&
                     wspec.zero_point == 0 && wspec.scale.size() == 8;
    return {"quantization-bounds", sym,
            sym ? "round error <= S/2; weight zero points all 0" : "weight spec not symmetric"};
}

CheckResult check_quant_grads() {
    // fake_quant is piecewise constant, so a raw finite difference of the
    // scale is useless. With u = r/S and g(u) = clamp(round(u), qmin-Z, qmax-Z)
    // the output is S*g(u), so d/dS = g(u) - u*g'(u): measure g'(u) with a
    // +-S/2 central difference (exactly 1 in range, 0 when clamped) and
    // recover the scale sensitivity from the value itself. Points near
    // rounding boundaries and the clamp corners are excluded.
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int qmin = -128, qmax = 127;
    int tested = 0;
    double worst = 0.0;
    while (tested < 200) {
        const double s = std::pow(10.0, -3.0 * u01(rng));
        const int z = static_cast<int>(std::floor(u01(rng) * 201.0)) - 100;
        const double u = -140.0 + 280.0 * u01(rng);
        const double half_units = u * 2.0;
        if (std::abs(half_units - std::nearbyint(half_units)) < 0.02) continue;
        const double a = qmin - z, b = qmax - z;
        if (u > a - 1.01 && u < a + 0.51) continue;
        if (u > b - 0.51 && u < b + 1.01) continue;

        const double r = u * s;
        auto fq = [&](double v) {
            return naw::fake_quant_value<double>(v, s, z, qmin, qmax);
        };
        const double fd_input = (fq(r + s / 2) - fq(r - s / 2)) / s;
        const double fd_scale = (fq(r) - r * fd_input) / s;
        const naw::QuantizerGrads g = naw::quantizer_grads(r, s, z, qmin, qmax);
        const double e_in = std::abs(fd_input - g.d_input) / std::max(std::abs(g.d_input), 1e-3);
        const double e_sc = std::abs(fd_scale - g.d_scale) / std::max(std::abs(g.d_scale), 1e-3);
        worst = std::max(worst, std::max(e_in, e_sc));
        ++tested;
    }
    return {"quantizer-gradients", worst <= 1e-3,
            "200 points, worst relative error " + std::to_string(worst)};
}

CheckResult check_cola() {
    auto shifted_sum_ok = [](const naw::FramingConfig& fr) {
        const std::vector<float> win = naw::build_synthesis_window(fr);
        for (int p = 0; p < fr.chunk; ++p) {
            double sum = 0.0;
            for (size_t q = p; q < win.size(); q += fr.chunk) sum += win[q];
            if (std::abs(sum - 1.0) > 1e-7) return false;
        }
        return true;
    };
    naw::FramingConfig fr;
    if (!shifted_sum_ok(fr)) return {"cola", false, "default geometry"};
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        fr.lookback = static_cast<int>(rng() % 129);
        fr.chunk = 8 + static_cast<int>(rng() % 121);
        fr.lookahead = static_cast<int>(rng() % fr.chunk);
        fr.validate();
        if (!shifted_sum_ok(fr))
            return {"cola", false,
                    "geometry " + std::to_string(fr.lookback) + "/" + std::to_string(fr.chunk) +
                        "/" + std::to_string(fr.lookahead)};
    }
    return {"cola", true, "default + 5 random geometries sum to 1 within 1e-7"};
}

CheckResult check_metrics() {
    std::mt19937_64 rng(41);
    std::normal_distribution<float> dist(0.0f, 0.5f);
    std::vector<float> ref(4096), noise(4096);
    for (auto& v : ref) v = dist(rng);
    for (auto& v : noise) v = dist(rng);

    const double base = naw::sisdr(ref, ref);
    std::vector<float> scaled = ref;
    for (auto& v : scaled) v *= 3.7f;
    if (std::abs(naw::sisdr(scaled, ref) - base) > 1e-6)
        return {"metric-properties", false, "sisdr not scale-invariant"};

    // Orthogonalize the noise against the reference, then set its energy
    // exactly 10 dB below the reference's.
    double rr = 0.0, rn = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        rr += double(ref[i]) * ref[i];
        rn += double(ref[i]) * noise[i];
    }
    std::vector<double> orth(ref.size());
    double nn = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        orth[i] = noise[i] - (rn / rr) * ref[i];
        nn += orth[i] * orth[i];
    }
    const double gain = std::sqrt(rr / (nn * 10.0));
    std::vector<float> est(ref.size());
    for (size_t i = 0; i < ref.size(); ++i)
        est[i] = static_cast<float>(ref[i] + gain * orth[i]);
    const double ten = naw::sisdr(est, ref);
    if (std::abs(ten - 10.0) > 1e-4)
        return {"metric-properties", false,
                "orthogonal case returned " + std::to_string(ten) + " dB"};

    if (naw::sisdri(est, est, ref) != 0.0)
        return {"metric-properties", false, "sisdri of the mixture against itself is nonzero"};
    return {"metric-properties", true, "scale invariance, 10 dB construction, zero improvement"};
}

int run_verify(bool corrupt_window) {
    std::vector<CheckResult> results;
    results.push_back(check_reconstruction(corrupt_window));
    results.push_back(check_stream_offline());
    results.push_back(check_quant_bounds());
    results.push_back(check_quant_grads());
    results.push_back(check_cola());
    results.push_back(check_metrics());

    bool all = true;
    for (const auto& r : results) {
        all = all && r.pass;
        std::printf("[%s] %s (%s)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
    }
    return all ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"naw — low-latency streaming speech-enhancement engine"};
    app.require_subcommand(1);
    const std::vector<std::string> modes{"f32", "bf16", "int8", "mixed"};

    EnhanceOpts enh;
    CLI::App* enhance = app.add_subcommand("enhance", "Stream a WAV file through the model");
    enhance->add_option("--in", enh.in, "input WAV (mono, 16 kHz)")->required();
    enhance->add_option("--out", enh.out, "output WAV path")->required();
    enhance->add_option("--weights", enh.weights, "weight container")->required();
    enhance->add_option("--mode", enh.mode, "precision mode")->check(CLI::IsMember(modes));
    enhance->add_option("--config", enh.config, "config JSON overriding the container's");
    enhance->add_option("--timing", enh.timing, "write the timing summary JSON here too");

    CalibrateOpts cal;
    CLI::App* calibrate =
        app.add_subcommand("calibrate", "Calibrate activation ranges from a clip directory");
    calibrate->add_option("--weights", cal.weights, "input weight container")->required();
    calibrate->add_option("--audio-dir", cal.audio_dir, "directory of calibration WAVs")
        ->required();
    calibrate->add_option("--out", cal.out, "calibrated container path")->required();
    calibrate->add_option("--mode", cal.mode, "precision mode to pack weights for")
        ->check(CLI::IsMember(modes));
    calibrate->add_option("--report", cal.report, "write the per-site JSON report here too");
    calibrate->add_option("--momentum", cal.momentum, "observer moving-average momentum");

    BenchOpts ben;
    CLI::App* bench = app.add_subcommand("bench", "Time the engine on synthesized noise");
    bench->add_option("--weights", ben.weights, "weight container")->required();
    bench->add_option("--seconds", ben.seconds, "signal length in seconds");
    bench->add_option("--seed", ben.seed, "noise seed");
    bench->add_option("--mode", ben.mode, "precision mode")->check(CLI::IsMember(modes));

    bool corrupt_window = false;
    CLI::App* verify = app.add_subcommand("verify", "Run the invariant suite (exit 4 on failure)");
    verify->add_flag("--corrupt-window", corrupt_window, "negative control: break the synthesis window")
        ->group("");  // hidden

    InitOpts ini;
    CLI::App* init = app.add_subcommand("init-weights", "Write a seeded random weight container");
    init->add_option("--out", ini.out, "container path")->required();
    init->add_option("--seed", ini.seed, "init seed");
    init->add_option("--config", ini.config, "config JSON to embed (defaults otherwise)");

    ScoreOpts sco;
    CLI::App* score = app.add_subcommand("score", "Compare an enhanced file against a reference");
    score->add_option("--ref", sco.ref, "reference WAV")->required();
    score->add_option("--est", sco.est, "estimate WAV")->required();
    score->add_option("--mix", sco.mix, "mixture WAV (adds the improvement row)");
    score->add_option("--delay", sco.delay, "estimate lead in samples to trim before scoring");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*enhance) return run_enhance(enh);
        if (*calibrate) return run_calibrate(cal);
        if (*bench) return run_bench(ben);
        if (*verify) return run_verify(corrupt_window);
        if (*init) return run_init_weights(ini);
        if (*score) return run_score(sco);
    } catch (const std::logic_error& e) {  // invalid_argument, domain_error
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
