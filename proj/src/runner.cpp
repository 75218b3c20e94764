#include "naw/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "naw/fft.hpp"
#include "naw/frontend.hpp"
#include "naw/mathfast.hpp"
#include "naw/tensor.hpp"

namespace naw {

namespace {

constexpr int kQmin = -128;
constexpr int kQmax = 127;

using detail::PGemm;
using detail::Scratch;

// c (m,n) = a (m,k) · bT (k,n) + bias; plain f32 accumulation. The k-outer /
// n-inner loop keeps every inner trip contiguous so it vectorizes.
void gemm_f32(const float* a, const float* bT, const float* bias, float* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<size_t>(i) * n;
        if (bias)
            std::copy(bias, bias + n, crow);
        else
            std::fill(crow, crow + n, 0.0f);
        const float* arow = a + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const float av = arow[kk];
            const float* brow = bT + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void quantize_rows(const float* src, size_t count, double sx, int zx, int8_t* dst) {
    for (size_t i = 0; i < count; ++i)
        dst[i] = static_cast<int8_t>(
            quantize_value<double>(static_cast<double>(src[i]), sx, zx, kQmin, kQmax));
}

template <typename V>
void ensure(V& v, size_t count) {
    if (v.size() < count) v.resize(count);
}

// Requantizing op: output lands on the layer's own activation lattice
// (int8), is bf16-rounded (bf16), or is a plain f32 matmul.
void exec_layer(const PGemm& g, const float* rows, int m, float* out, Scratch& s) {
    const size_t mk = static_cast<size_t>(m) * g.k;
    const size_t mn = static_cast<size_t>(m) * g.n;
    switch (g.prec) {
        case Precision::f32:
            gemm_f32(rows, g.wT.data(), g.bias.empty() ? nullptr : g.bias.data(), out, m, g.k,
                     g.n);
            return;
        case Precision::bf16:
            ensure(s.f0, mk);
            bf16_round({rows, mk}, {s.f0.data(), mk});
            gemm_f32(s.f0.data(), g.wT.data(), g.bias.empty() ? nullptr : g.bias.data(), out, m,
                     g.k, g.n);
            bf16_round({out, mn}, {out, mn});
            return;
        case Precision::int8: {
            ensure(s.q0, mk);
            ensure(s.i0, mn);
            quantize_rows(rows, mk, g.sx, g.zx, s.q0.data());
            qkernel::gemm_i8(s.q0.data(), g.wTq.data(), s.i0.data(), m, g.k, g.n);
            for (int i = 0; i < m; ++i) {
                const int32_t* arow = s.i0.data() + static_cast<size_t>(i) * g.n;
                float* orow = out + static_cast<size_t>(i) * g.n;
                for (int j = 0; j < g.n; ++j) {
                    const int8_t q =
                        qkernel::requant(arow[j], g.zx * g.wsum[j], g.biasq[j], g.mult[j], g.zy,
                                         kQmin, kQmax);
                    orow[j] = static_cast<float>(g.sy * (q - g.zy));
                }
            }
            return;
        }
    }
}

// Gate matmul: int8 products are dequantized straight to float (no output
// requantization) and the float bias is added; bf16 keeps the f32
// accumulator unrounded for the nonlinearity.
void exec_gates(const PGemm& g, const float* rows, int m, float* out, Scratch& s) {
    const size_t mk = static_cast<size_t>(m) * g.k;
    const size_t mn = static_cast<size_t>(m) * g.n;
    switch (g.prec) {
        case Precision::f32:
            gemm_f32(rows, g.wT.data(), g.bias.data(), out, m, g.k, g.n);
            return;
        case Precision::bf16:
            ensure(s.f0, mk);
            bf16_round({rows, mk}, {s.f0.data(), mk});
            gemm_f32(s.f0.data(), g.wT.data(), g.bias.data(), out, m, g.k, g.n);
            return;
        case Precision::int8: {
            ensure(s.q0, mk);
            ensure(s.i0, mn);
            quantize_rows(rows, mk, g.sx, g.zx, s.q0.data());
            qkernel::gemm_i8(s.q0.data(), g.wTq.data(), s.i0.data(), m, g.k, g.n);
            for (int i = 0; i < m; ++i) {
                const int32_t* arow = s.i0.data() + static_cast<size_t>(i) * g.n;
                float* orow = out + static_cast<size_t>(i) * g.n;
                for (int j = 0; j < g.n; ++j) {
                    const int32_t centered = arow[j] - g.zx * g.wsum[j];
                    orow[j] =
                        g.bias[j] + static_cast<float>(g.sx * g.sw[j] * centered);
                }
            }
            return;
        }
    }
}

// Packs one weight (+bias) group into the layout exec_* expects. widx maps
// (reduce index k, column n) to the flat index in the stored tensor; chan
// maps a column to its quantization channel.
template <typename WIdx, typename Chan>
PGemm pack_gemm(const Tensor& w, const Tensor* bias, Precision prec, int k, int n, WIdx widx,
                Chan chan, const QuantSpec* x_spec, const QuantSpec* y_spec,
                const std::string& layer) {
    PGemm g;
    g.prec = prec;
    g.k = k;
    g.n = n;
    if (bias) {
        g.bias.resize(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) {
            const float b = bias->f32[static_cast<size_t>(chan(j))];
            g.bias[j] = prec == Precision::bf16 ? bf16_round(b) : b;
        }
    }
    if (prec != Precision::int8) {
        g.wT.resize(static_cast<size_t>(k) * n);
        for (int kk = 0; kk < k; ++kk)
            for (int j = 0; j < n; ++j) {
                const float v = w.f32[static_cast<size_t>(widx(kk, j))];
                g.wT[static_cast<size_t>(kk) * n + j] =
                    prec == Precision::bf16 ? bf16_round(v) : v;
            }
        return g;
    }

    if (!x_spec)
        throw std::invalid_argument(layer +
                                    ": int8 execution requires a calibrated input range");
    const QuantSpec wspec = w.dtype == Dtype::i8
                                ? w.qspec
                                : weight_spec(w.f32, w.shape, w.channel_axis);
    g.wTq.resize(static_cast<size_t>(k) * n);
    g.sw.resize(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j)
        g.sw[j] = wspec.per_channel() ? wspec.scale[static_cast<size_t>(chan(j))]
                                      : wspec.scale[0];
    for (int kk = 0; kk < k; ++kk)
        for (int j = 0; j < n; ++j) {
            const size_t src = static_cast<size_t>(widx(kk, j));
            g.wTq[static_cast<size_t>(kk) * n + j] =
                w.dtype == Dtype::i8
                    ? w.i8[src]
                    : static_cast<int8_t>(quantize_value<double>(
                          static_cast<double>(w.f32[src]), g.sw[j], 0, kQmin, kQmax));
        }
    g.wsum.assign(static_cast<size_t>(n), 0);
    for (int kk = 0; kk < k; ++kk)
        for (int j = 0; j < n; ++j) g.wsum[j] += g.wTq[static_cast<size_t>(kk) * n + j];
    g.sx = x_spec->scale[0];
    g.zx = x_spec->zero_point;
    if (y_spec) {
        g.sy = y_spec->scale[0];
        g.zy = y_spec->zero_point;
        g.biasq.resize(static_cast<size_t>(n));
        g.mult.resize(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) {
            const double sb = g.sx * g.sw[j];
            g.biasq[j] = bias ? static_cast<int32_t>(std::llround(g.bias[j] / sb)) : 0;
            g.mult[j] = sb / g.sy;
        }
    }
    return g;
}

}  // namespace

// ---- enum <-> string ----------------------------------------------------

Precision precision_from_string(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "bf16") return Precision::bf16;
    if (s == "int8") return Precision::int8;
    throw std::invalid_argument("unknown precision: " + s);
}

std::string to_string(Precision p) {
    switch (p) {
        case Precision::f32: return "f32";
        case Precision::bf16: return "bf16";
        case Precision::int8: return "int8";
    }
    return "f32";
}

Mode mode_from_string(const std::string& s) {
    if (s == "f32") return Mode::f32;
    if (s == "bf16") return Mode::bf16;
    if (s == "int8") return Mode::int8;
    if (s == "mixed") return Mode::mixed;
    throw std::invalid_argument("unknown mode: " + s);
}

std::string to_string(Mode m) {
    switch (m) {
        case Mode::f32: return "f32";
        case Mode::bf16: return "bf16";
        case Mode::int8: return "int8";
        case Mode::mixed: return "mixed";
    }
    return "f32";
}

// ---- precision plan -----------------------------------------------------

PrecisionPlan PrecisionPlan::uniform(const ModelConfig& cfg, Precision p) {
    PrecisionPlan plan;
    for (const auto& layer : model_layers(cfg)) plan.layers[layer] = p;
    return plan;
}

PrecisionPlan PrecisionPlan::for_mode(const ModelConfig& cfg, Mode m) {
    switch (m) {
        case Mode::f32: return uniform(cfg, Precision::f32);
        case Mode::bf16: return uniform(cfg, Precision::bf16);
        case Mode::int8: return uniform(cfg, Precision::int8);
        case Mode::mixed: {
            PrecisionPlan plan = uniform(cfg, Precision::int8);
            plan.layers["encoder.conv"] = Precision::bf16;
            plan.layers["decoder.deconv"] = Precision::bf16;
            return plan;
        }
    }
    return uniform(cfg, Precision::f32);
}

Precision PrecisionPlan::at(const std::string& layer) const {
    auto it = layers.find(layer);
    if (it == layers.end())
        throw std::invalid_argument("precision plan has no entry for layer " + layer);
    return it->second;
}

void PrecisionPlan::validate(const ModelConfig& cfg) const {
    const auto expected = model_layers(cfg);
    for (const auto& layer : expected)
        if (layers.find(layer) == layers.end())
            throw std::invalid_argument("precision plan misses layer " + layer);
    if (layers.size() != expected.size())
        for (const auto& [name, p] : layers) {
            (void)p;
            if (std::find(expected.begin(), expected.end(), name) == expected.end())
                throw std::invalid_argument("precision plan names unknown layer " + name);
        }
}

// ---- activation sites ---------------------------------------------------

const QuantSpec& ActivationSpecs::at(const std::string& site) const {
    auto it = sites.find(site);
    if (it == sites.end())
        throw std::invalid_argument("no calibrated activation range for site " + site);
    return it->second;
}

std::vector<std::string> activation_sites(const ModelConfig& cfg) {
    std::vector<std::string> out = {"enc.in", "enc.out"};
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string p = "block." + std::to_string(b) + ".";
        for (const char* leaf :
             {"comp", "gru_fwd.h", "gru_bwd.h", "cat", "exp", "mid", "lstm.h", "proj", "out"})
            out.push_back(p + leaf);
    }
    out.push_back("dec.out");
    return out;
}

ActivationSpecs calibrate_activations(const WeightStore& store, const ModelConfig& cfg,
                                      const FramingConfig& framing,
                                      const std::vector<std::vector<float>>& clips,
                                      bool pre_emphasis, double momentum) {
    ModelRunner probe(store, cfg, framing, PrecisionPlan::uniform(cfg, Precision::f32), nullptr);
    std::map<std::string, ObserverState> observers;
    std::map<std::string, std::pair<double, double>> clip_range;
    probe.set_site_hook([&clip_range](const std::string& site, std::span<const float> v) {
        if (v.empty()) return;
        auto [it, fresh] = clip_range.try_emplace(
            site, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity());
        (void)fresh;
        for (float x : v) {
            it->second.first = std::min(it->second.first, static_cast<double>(x));
            it->second.second = std::max(it->second.second, static_cast<double>(x));
        }
    });
    for (const auto& clip : clips) {
        clip_range.clear();
        probe.forward_offline(clip, pre_emphasis);
        for (const auto& [site, range] : clip_range) {
            ObserverState& obs = observers[site];
            obs.momentum = momentum;
            obs.update(range.first, range.second);
        }
    }
    ActivationSpecs specs;
    for (const auto& [site, obs] : observers) {
        specs.sites[site] = activation_spec(obs.alpha, obs.beta);
        specs.ranges[site] = {obs.alpha, obs.beta};
    }
    return specs;
}

// ---- recurrent cells ----------------------------------------------------

namespace {

void finalize_hidden(float* h, int n, Precision prec, bool quant_h, const QuantSpec& spec) {
    if (quant_h) {
        for (int i = 0; i < n; ++i)
            h[i] = static_cast<float>(fake_quant_value<double>(
                static_cast<double>(h[i]), spec.scale[0], spec.zero_point, spec.qmin, spec.qmax));
    } else if (prec == Precision::bf16) {
        for (int i = 0; i < n; ++i) h[i] = bf16_round(h[i]);
    }
}

}  // namespace

QGruCell QGruCell::make(const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih,
                        const Tensor& b_hh, Precision prec, const QuantSpec* x_spec,
                        const QuantSpec* h_spec) {
    QGruCell cell;
    cell.in_ = w_ih.shape[1];
    cell.hidden_ = w_hh.shape[1];
    cell.prec_ = prec;
    cell.quant_h_ = prec == Precision::int8;
    if (h_spec) cell.h_spec_ = *h_spec;
    const int in = cell.in_, hid = cell.hidden_, gates = 3 * hid;
    cell.ih_ = pack_gemm(
        w_ih, &b_ih, prec, in, gates, [in](int k, int n) { return n * in + k; },
        [](int n) { return n; }, x_spec, nullptr, "gru.w_ih");
    cell.hh_ = pack_gemm(
        w_hh, &b_hh, prec, hid, gates, [hid](int k, int n) { return n * hid + k; },
        [](int n) { return n; }, h_spec, nullptr, "gru.w_hh");
    return cell;
}

void QGruCell::gates_x(const float* x_rows, int rows, float* gx_out, Scratch& s) const {
    exec_gates(ih_, x_rows, rows, gx_out, s);
}

void QGruCell::step_with_gx(const float* gx_row, float* h, Scratch& s) const {
    const int hid = hidden_;
    ensure(s.f3, static_cast<size_t>(3) * hid);
    float* gh = s.f3.data();
    exec_gates(hh_, h, 1, gh, s);
    for (int i = 0; i < hid; ++i) {
        const float r = fastmath::sigmoid(gx_row[i] + gh[i]);
        const float z = fastmath::sigmoid(gx_row[hid + i] + gh[hid + i]);
        const float n = fastmath::tanh(gx_row[2 * hid + i] + r * gh[2 * hid + i]);
        h[i] = (1.0f - z) * n + z * h[i];
    }
    finalize_hidden(h, hid, prec_, quant_h_, h_spec_);
}

void QGruCell::step(std::span<const float> x, std::span<float> h, Scratch& s) const {
    ensure(s.f1, static_cast<size_t>(3) * hidden_);
    exec_gates(ih_, x.data(), 1, s.f1.data(), s);
    step_with_gx(s.f1.data(), h.data(), s);
}

QLstmCell QLstmCell::make(const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih,
                          const Tensor& b_hh, Precision prec, const QuantSpec* x_spec,
                          const QuantSpec* h_spec) {
    QLstmCell cell;
    cell.in_ = w_ih.shape[1];
    cell.hidden_ = w_hh.shape[1];
    cell.prec_ = prec;
    cell.quant_h_ = prec == Precision::int8;
    if (h_spec) cell.h_spec_ = *h_spec;
    const int in = cell.in_, hid = cell.hidden_, gates = 4 * hid;
    cell.ih_ = pack_gemm(
        w_ih, &b_ih, prec, in, gates, [in](int k, int n) { return n * in + k; },
        [](int n) { return n; }, x_spec, nullptr, "lstm.w_ih");
    cell.hh_ = pack_gemm(
        w_hh, &b_hh, prec, hid, gates, [hid](int k, int n) { return n * hid + k; },
        [](int n) { return n; }, h_spec, nullptr, "lstm.w_hh");
    return cell;
}

void QLstmCell::gates_x(const float* x_rows, int rows, float* gx_out, Scratch& s) const {
    exec_gates(ih_, x_rows, rows, gx_out, s);
}

void QLstmCell::gates_h(const float* h_rows, int rows, float* gh_out, Scratch& s) const {
    exec_gates(hh_, h_rows, rows, gh_out, s);
}

void QLstmCell::pointwise(const float* gx_row, const float* gh_row, float* h, float* c) const {
    const int hid = hidden_;
    for (int j = 0; j < hid; ++j) {
        const float gi = fastmath::sigmoid(gx_row[j] + gh_row[j]);
        const float gf = fastmath::sigmoid(gx_row[hid + j] + gh_row[hid + j]);
        const float gg = fastmath::tanh(gx_row[2 * hid + j] + gh_row[2 * hid + j]);
        const float go = fastmath::sigmoid(gx_row[3 * hid + j] + gh_row[3 * hid + j]);
        c[j] = gf * c[j] + gi * gg;
        h[j] = go * fastmath::tanh(c[j]);
    }
    finalize_hidden(h, hid, prec_, quant_h_, h_spec_);
}

void QLstmCell::step_with_gx(const float* gx_row, float* h, float* c, Scratch& s) const {
    ensure(s.f3, static_cast<size_t>(4) * hidden_);
    exec_gates(hh_, h, 1, s.f3.data(), s);
    pointwise(gx_row, s.f3.data(), h, c);
}

void QLstmCell::step(std::span<const float> x, std::span<float> h, std::span<float> c,
                     Scratch& s) const {
    ensure(s.f1, static_cast<size_t>(4) * hidden_);
    exec_gates(ih_, x.data(), 1, s.f1.data(), s);
    step_with_gx(s.f1.data(), h.data(), c.data(), s);
}

// ---- model runner -------------------------------------------------------

ModelRunner::ModelRunner(const WeightStore& store, const ModelConfig& cfg,
                         const FramingConfig& framing, const PrecisionPlan& plan,
                         const ActivationSpecs* specs)
    : cfg_(cfg), framing_(framing), plan_(plan) {
    cfg_.validate();
    framing_.validate();
    plan_.validate(cfg_);
    check_store(store, cfg_, framing_.n_bins());
    if (specs) specs_ = *specs;
    bins_ = framing_.n_bins();
    cbins_ = cfg_.compressed_bins(bins_);

    auto site = [this](const std::string& name) -> const QuantSpec* {
        auto it = specs_.sites.find(name);
        return it == specs_.sites.end() ? nullptr : &it->second;
    };

    const int D = cfg_.channels, H = cfg_.hidden, q = cfg_.freq_stride;

    // Encoder: columns are output channels; reduce index packs (dt, df, ch).
    {
        const int kt = cfg_.enc_kt, kf = cfg_.enc_kf;
        enc_prec_ = plan_.at("encoder.conv");
        enc_ = pack_gemm(
            store.at("encoder.conv.weight"), &store.at("encoder.conv.bias"), enc_prec_,
            2 * kt * kf, D,
            [kt, kf](int k, int n) {
                const int dt = k / (kf * 2), df = (k / 2) % kf, ch = k % 2;
                return ((n * 2 + ch) * kt + dt) * kf + df;
            },
            [](int n) { return n; }, site("enc.in"), site("enc.out"), "encoder.conv");
    }

    blocks_.resize(static_cast<size_t>(cfg_.blocks));
    for (int b = 0; b < cfg_.blocks; ++b) {
        BlockWeights& bw = blocks_[static_cast<size_t>(b)];
        const std::string lp = "block." + std::to_string(b) + ".";
        const std::string sp = lp;  // site prefix matches the layer prefix
        const std::string prev = b == 0 ? "enc.out" : "block." + std::to_string(b - 1) + ".out";

        bw.comp_prec = plan_.at(lp + "spectral.compress");
        bw.gru_prec = plan_.at(lp + "spectral.gru_fwd");
        if (plan_.at(lp + "spectral.gru_bwd") != bw.gru_prec)
            throw std::invalid_argument(lp + ": both recurrence directions must share precision");
        bw.expand_prec = plan_.at(lp + "spectral.expand");
        bw.lstm_prec = plan_.at(lp + "temporal.lstm");
        bw.proj_prec = plan_.at(lp + "temporal.proj");

        bw.comp = pack_gemm(
            store.at(lp + "spectral.compress.weight"), &store.at(lp + "spectral.compress.bias"),
            bw.comp_prec, D * q, D,
            [D, q](int k, int n) {
                const int dk = k / D, cin = k % D;
                return (n * D + cin) * q + dk;
            },
            [](int n) { return n; }, site(prev), site(sp + "comp"), lp + "spectral.compress");

        bw.gru_fwd = QGruCell::make(store.at(lp + "spectral.gru_fwd.w_ih"),
                                    store.at(lp + "spectral.gru_fwd.w_hh"),
                                    store.at(lp + "spectral.gru_fwd.b_ih"),
                                    store.at(lp + "spectral.gru_fwd.b_hh"), bw.gru_prec,
                                    site(sp + "comp"), site(sp + "gru_fwd.h"));
        bw.gru_bwd = QGruCell::make(store.at(lp + "spectral.gru_bwd.w_ih"),
                                    store.at(lp + "spectral.gru_bwd.w_hh"),
                                    store.at(lp + "spectral.gru_bwd.b_ih"),
                                    store.at(lp + "spectral.gru_bwd.b_hh"), bw.gru_prec,
                                    site(sp + "comp"), site(sp + "gru_bwd.h"));

        // Expand: columns pack (dk, d) so a column group of D values adds
        // contiguously onto an output frame row.
        bw.expand = pack_gemm(
            store.at(lp + "spectral.expand.weight"), &store.at(lp + "spectral.expand.bias"),
            bw.expand_prec, 2 * H, D * q,
            [D, q](int k, int n) {
                const int dk = n / D, d = n % D;
                return (k * D + d) * q + dk;
            },
            [D](int n) { return n % D; }, site(sp + "cat"), site(sp + "exp"),
            lp + "spectral.expand");

        bw.lstm = QLstmCell::make(
            store.at(lp + "temporal.lstm.w_ih"), store.at(lp + "temporal.lstm.w_hh"),
            store.at(lp + "temporal.lstm.b_ih"), store.at(lp + "temporal.lstm.b_hh"),
            bw.lstm_prec, site(sp + "mid"), site(sp + "lstm.h"));

        bw.proj = pack_gemm(
            store.at(lp + "temporal.proj.weight"), &store.at(lp + "temporal.proj.bias"),
            bw.proj_prec, H, D, [H](int k, int n) { return n * H + k; },
            [](int n) { return n; }, site(sp + "lstm.h"), site(sp + "proj"),
            lp + "temporal.proj");
    }

    // Decoder: one (kf*D, 2) pack per time tap so streaming can scatter each
    // tap into its pending output frame.
    {
        const Tensor& w = store.at("decoder.deconv.weight");
        const Tensor& bias = store.at("decoder.deconv.bias");
        const int kt = cfg_.dec_kt, kf = cfg_.dec_kf;
        dec_.prec = plan_.at("decoder.deconv");
        const std::string last = "block." + std::to_string(cfg_.blocks - 1) + ".out";
        const QuantSpec* x_spec = site(last);
        const QuantSpec* y_spec = site("dec.out");
        dec_.bias = {bias.f32[0], bias.f32[1]};
        if (dec_.prec == Precision::bf16)
            for (float& bval : dec_.bias) bval = bf16_round(bval);
        auto flat = [kt, kf](int cin, int c, int dt, int df) {
            return ((static_cast<size_t>(cin) * 2 + c) * kt + dt) * kf + df;
        };
        if (dec_.prec == Precision::int8) {
            if (!x_spec || !y_spec)
                throw std::invalid_argument(
                    "decoder.deconv: int8 execution requires a calibrated input range");
            const QuantSpec wspec =
                w.dtype == Dtype::i8 ? w.qspec : weight_spec(w.f32, w.shape, w.channel_axis);
            dec_.sx = x_spec->scale[0];
            dec_.zx = x_spec->zero_point;
            dec_.sy = y_spec->scale[0];
            dec_.zy = y_spec->zero_point;
            dec_.sw = {wspec.scale[0], wspec.scale[1]};
            dec_.wTq.resize(static_cast<size_t>(kt));
            dec_.wsum.resize(static_cast<size_t>(kt));
            for (int dt = 0; dt < kt; ++dt) {
                auto& mat = dec_.wTq[static_cast<size_t>(dt)];
                auto& sums = dec_.wsum[static_cast<size_t>(dt)];
                mat.resize(static_cast<size_t>(kf) * D * 2);
                sums.assign(2, 0);
                for (int df = 0; df < kf; ++df)
                    for (int cin = 0; cin < D; ++cin)
                        for (int c = 0; c < 2; ++c) {
                            const size_t src = flat(cin, c, dt, df);
                            const int8_t qv =
                                w.dtype == Dtype::i8
                                    ? w.i8[src]
                                    : static_cast<int8_t>(quantize_value<double>(
                                          static_cast<double>(w.f32[src]), dec_.sw[c], 0,
                                          kQmin, kQmax));
                            mat[(static_cast<size_t>(df) * D + cin) * 2 + c] = qv;
                            sums[c] += qv;
                        }
            }
            dec_.biasq.resize(2);
            dec_.mult.resize(2);
            for (int c = 0; c < 2; ++c) {
                const double sb = dec_.sx * dec_.sw[static_cast<size_t>(c)];
                dec_.biasq[c] =
                    static_cast<int32_t>(std::llround(static_cast<double>(dec_.bias[c]) / sb));
                dec_.mult[c] = sb / dec_.sy;
            }
        } else {
            dec_.wT.resize(static_cast<size_t>(kt));
            for (int dt = 0; dt < kt; ++dt) {
                auto& mat = dec_.wT[static_cast<size_t>(dt)];
                mat.resize(static_cast<size_t>(kf) * D * 2);
                for (int df = 0; df < kf; ++df)
                    for (int cin = 0; cin < D; ++cin)
                        for (int c = 0; c < 2; ++c) {
                            float v = w.f32[flat(cin, c, dt, df)];
                            if (dec_.prec == Precision::bf16) v = bf16_round(v);
                            mat[(static_cast<size_t>(df) * D + cin) * 2 + c] = v;
                        }
            }
        }
    }
}

Workspace ModelRunner::make_workspace() const {
    const int D = cfg_.channels, H = cfg_.hidden, q = cfg_.freq_stride;
    const int F = bins_, Fc = cbins_;
    const size_t enc_k = static_cast<size_t>(2) * cfg_.enc_kt * cfg_.enc_kf;
    const size_t dec_k = static_cast<size_t>(cfg_.dec_kf) * D;
    Workspace ws;
    ws.imcol.resize(std::max({static_cast<size_t>(F) * enc_k, static_cast<size_t>(Fc) * D * q,
                              static_cast<size_t>(F) * dec_k}));
    ws.gates_x.resize(static_cast<size_t>(F) * 4 * H);
    ws.gates_h.resize(static_cast<size_t>(F) * 4 * H);
    ws.seq.resize(static_cast<size_t>(Fc) * std::max(D, 2 * H));
    ws.exp_out.resize(static_cast<size_t>(Fc) * D * q);
    ws.proj.resize(static_cast<size_t>(F) * D);
    ws.s.f0.resize(ws.imcol.size());
    ws.s.f1.resize(static_cast<size_t>(F) * 2 + 8 * H);
    ws.s.f2.resize(static_cast<size_t>(H));
    ws.s.f3.resize(static_cast<size_t>(4) * H);
    ws.s.q0.resize(ws.imcol.size());
    ws.s.i0.resize(static_cast<size_t>(F) * 4 * H);
    return ws;
}

DecoderPending ModelRunner::make_pending() const {
    DecoderPending p;
    const size_t frame = static_cast<size_t>(bins_) * 2;
    if (dec_.prec == Precision::int8)
        p.i.assign(static_cast<size_t>(cfg_.dec_kt), std::vector<int32_t>(frame, 0));
    else
        p.f.assign(static_cast<size_t>(cfg_.dec_kt), std::vector<float>(frame, 0.0f));
    return p;
}

void ModelRunner::observe_site(const std::string& site, std::span<const float> values) const {
    if (site_hook_) site_hook_(site, values);
}

void ModelRunner::trace(const std::string& layer, Precision p) const {
    if (trace_hook_) trace_hook_(layer, p);
}

void ModelRunner::apply_activation(float* v, size_t n) const {
    switch (cfg_.activation) {
        case Activation::none:
            return;
        case Activation::relu:
            for (size_t i = 0; i < n; ++i) v[i] = v[i] > 0.0f ? v[i] : 0.0f;
            return;
        case Activation::tanh:
            for (size_t i = 0; i < n; ++i) v[i] = fastmath::tanh(v[i]);
            return;
    }
}

void ModelRunner::encode_frame(const float* const* window, float* out, Workspace& ws) const {
    const int kt = cfg_.enc_kt, kf = cfg_.enc_kf, pf = (kf - 1) / 2;
    const int F = bins_, D = cfg_.channels, K = 2 * kt * kf;
    float* imcol = ws.imcol.data();
    for (int f = 0; f < F; ++f) {
        float* row = imcol + static_cast<size_t>(f) * K;
        for (int dt = 0; dt < kt; ++dt)
            for (int df = 0; df < kf; ++df) {
                const int fi = f + df - pf;
                const int base = (dt * kf + df) * 2;
                if (fi < 0 || fi >= F) {
                    row[base] = 0.0f;
                    row[base + 1] = 0.0f;
                } else {
                    row[base] = window[dt][fi * 2];
                    row[base + 1] = window[dt][fi * 2 + 1];
                }
            }
    }
    trace("encoder.conv", enc_prec_);
    exec_layer(enc_, imcol, F, out, ws.s);
    apply_activation(out, static_cast<size_t>(F) * D);
    observe_site("enc.out", {out, static_cast<size_t>(F) * D});
}

void ModelRunner::spectral_stage(int b, float* x, Workspace& ws) const {
    const BlockWeights& bw = blocks_[static_cast<size_t>(b)];
    const std::string lp = "block." + std::to_string(b) + ".";
    const int D = cfg_.channels, H = cfg_.hidden, q = cfg_.freq_stride;
    const int F = bins_, Fc = cbins_, K = D * q;

    // Strided im2col: row j gathers input positions j*q .. j*q+q-1, padding
    // the final row with zeros past the last bin.
    float* imcol = ws.imcol.data();
    for (int j = 0; j < Fc; ++j)
        for (int dk = 0; dk < q; ++dk) {
            const int pos = j * q + dk;
            float* dst = imcol + static_cast<size_t>(j) * K + static_cast<size_t>(dk) * D;
            if (pos < F)
                std::memcpy(dst, x + static_cast<size_t>(pos) * D, sizeof(float) * D);
            else
                std::memset(dst, 0, sizeof(float) * D);
        }
    trace(lp + "spectral.compress", bw.comp_prec);
    float* comp = ws.seq.data();
    exec_layer(bw.comp, imcol, Fc, comp, ws.s);
    apply_activation(comp, static_cast<size_t>(Fc) * D);
    observe_site(lp + "comp", {comp, static_cast<size_t>(Fc) * D});

    trace(lp + "spectral.gru_fwd", bw.gru_prec);
    trace(lp + "spectral.gru_bwd", bw.gru_prec);
    bw.gru_fwd.gates_x(comp, Fc, ws.gates_x.data(), ws.s);
    bw.gru_bwd.gates_x(comp, Fc, ws.gates_h.data(), ws.s);

    // The bidirectional pass overwrites seq in place as the concat buffer;
    // rows are consumed strictly before they are replaced.
    float* h = ws.s.f2.data();
    std::memset(h, 0, sizeof(float) * H);
    for (int j = 0; j < Fc; ++j) {
        bw.gru_fwd.step_with_gx(ws.gates_x.data() + static_cast<size_t>(j) * 3 * H, h, ws.s);
        std::memcpy(ws.seq.data() + static_cast<size_t>(j) * 2 * H, h, sizeof(float) * H);
        observe_site(lp + "gru_fwd.h", {h, static_cast<size_t>(H)});
    }
    std::memset(h, 0, sizeof(float) * H);
    for (int j = Fc - 1; j >= 0; --j) {
        bw.gru_bwd.step_with_gx(ws.gates_h.data() + static_cast<size_t>(j) * 3 * H, h, ws.s);
        std::memcpy(ws.seq.data() + static_cast<size_t>(j) * 2 * H + H, h, sizeof(float) * H);
        observe_site(lp + "gru_bwd.h", {h, static_cast<size_t>(H)});
    }
    observe_site(lp + "cat", {ws.seq.data(), static_cast<size_t>(Fc) * 2 * H});

    trace(lp + "spectral.expand", bw.expand_prec);
    exec_layer(bw.expand, ws.seq.data(), Fc, ws.exp_out.data(), ws.s);
    apply_activation(ws.exp_out.data(), static_cast<size_t>(Fc) * K);
    observe_site(lp + "exp", {ws.exp_out.data(), static_cast<size_t>(Fc) * K});

    for (int j = 0; j < Fc; ++j)
        for (int dk = 0; dk < q; ++dk) {
            const int pos = j * q + dk;
            if (pos >= F) break;
            const float* src =
                ws.exp_out.data() + static_cast<size_t>(j) * K + static_cast<size_t>(dk) * D;
            float* dst = x + static_cast<size_t>(pos) * D;
            for (int d = 0; d < D; ++d) dst[d] += src[d];
        }
}

void ModelRunner::temporal_stage(int b, float* x, float* h, float* c, Workspace& ws) const {
    const BlockWeights& bw = blocks_[static_cast<size_t>(b)];
    const std::string lp = "block." + std::to_string(b) + ".";
    const int D = cfg_.channels, H = cfg_.hidden, F = bins_;

    observe_site(lp + "mid", {x, static_cast<size_t>(F) * D});
    trace(lp + "temporal.lstm", bw.lstm_prec);
    bw.lstm.gates_x(x, F, ws.gates_x.data(), ws.s);
    bw.lstm.gates_h(h, F, ws.gates_h.data(), ws.s);
    for (int f = 0; f < F; ++f)
        bw.lstm.pointwise(ws.gates_x.data() + static_cast<size_t>(f) * 4 * H,
                          ws.gates_h.data() + static_cast<size_t>(f) * 4 * H,
                          h + static_cast<size_t>(f) * H, c + static_cast<size_t>(f) * H);
    observe_site(lp + "lstm.h", {h, static_cast<size_t>(F) * H});

    trace(lp + "temporal.proj", bw.proj_prec);
    exec_layer(bw.proj, h, F, ws.proj.data(), ws.s);
    observe_site(lp + "proj", {ws.proj.data(), static_cast<size_t>(F) * D});
    for (size_t i = 0; i < static_cast<size_t>(F) * D; ++i) x[i] += ws.proj[i];
}

void ModelRunner::block_frame(int b, float* x, float* h, float* c, Workspace& ws) const {
    spectral_stage(b, x, ws);
    temporal_stage(b, x, h, c, ws);
    observe_site("block." + std::to_string(b) + ".out",
                 {x, static_cast<size_t>(bins_) * cfg_.channels});
}

void ModelRunner::decode_accumulate(const float* z, DecoderPending& pending,
                                    Workspace& ws) const {
    const int kt = cfg_.dec_kt, kf = cfg_.dec_kf, pf = (kf - 1) / 2;
    const int F = bins_, D = cfg_.channels, K = kf * D;
    trace("decoder.deconv", dec_.prec);

    float* imcol = ws.imcol.data();
    for (int f = 0; f < F; ++f)
        for (int df = 0; df < kf; ++df) {
            const int fi = f + pf - df;
            float* dst = imcol + static_cast<size_t>(f) * K + static_cast<size_t>(df) * D;
            if (fi < 0 || fi >= F)
                std::memset(dst, 0, sizeof(float) * D);
            else
                std::memcpy(dst, z + static_cast<size_t>(fi) * D, sizeof(float) * D);
        }

    const size_t frame = static_cast<size_t>(F) * 2;
    switch (dec_.prec) {
        case Precision::f32:
        case Precision::bf16: {
            const float* rows = imcol;
            if (dec_.prec == Precision::bf16) {
                ensure(ws.s.f0, static_cast<size_t>(F) * K);
                bf16_round({imcol, static_cast<size_t>(F) * K},
                           {ws.s.f0.data(), static_cast<size_t>(F) * K});
                rows = ws.s.f0.data();
            }
            ensure(ws.s.f1, frame);
            for (int dt = 0; dt < kt; ++dt) {
                gemm_f32(rows, dec_.wT[static_cast<size_t>(dt)].data(), nullptr,
                         ws.s.f1.data(), F, K, 2);
                auto& slot = pending.f[static_cast<size_t>((pending.head + dt) % kt)];
                for (size_t i = 0; i < frame; ++i) slot[i] += ws.s.f1[i];
            }
            return;
        }
        case Precision::int8: {
            ensure(ws.s.q0, static_cast<size_t>(F) * K);
            ensure(ws.s.i0, frame);
            quantize_rows(imcol, static_cast<size_t>(F) * K, dec_.sx, dec_.zx, ws.s.q0.data());
            for (int dt = 0; dt < kt; ++dt) {
                qkernel::gemm_i8(ws.s.q0.data(), dec_.wTq[static_cast<size_t>(dt)].data(),
                                 ws.s.i0.data(), F, K, 2);
                const auto& sums = dec_.wsum[static_cast<size_t>(dt)];
                auto& slot = pending.i[static_cast<size_t>((pending.head + dt) % kt)];
                for (int f = 0; f < F; ++f)
                    for (int c = 0; c < 2; ++c)
                        slot[static_cast<size_t>(f) * 2 + c] +=
                            ws.s.i0[static_cast<size_t>(f) * 2 + c] - dec_.zx * sums[c];
            }
            return;
        }
    }
}

void ModelRunner::decode_emit(DecoderPending& pending, float* out, Workspace& ws) const {
    (void)ws;
    const int kt = cfg_.dec_kt;
    const size_t frame = static_cast<size_t>(bins_) * 2;
    const int s0 = pending.head;
    switch (dec_.prec) {
        case Precision::f32: {
            auto& slot = pending.f[static_cast<size_t>(s0)];
            for (size_t i = 0; i < frame; ++i) out[i] = slot[i] + dec_.bias[i & 1];
            std::fill(slot.begin(), slot.end(), 0.0f);
            break;
        }
        case Precision::bf16: {
            auto& slot = pending.f[static_cast<size_t>(s0)];
            for (size_t i = 0; i < frame; ++i) out[i] = bf16_round(slot[i] + dec_.bias[i & 1]);
            std::fill(slot.begin(), slot.end(), 0.0f);
            break;
        }
        case Precision::int8: {
            auto& slot = pending.i[static_cast<size_t>(s0)];
            for (size_t i = 0; i < frame; ++i) {
                const int c = static_cast<int>(i & 1);
                const int8_t qv = qkernel::requant(slot[i], 0, dec_.biasq[static_cast<size_t>(c)],
                                                   dec_.mult[static_cast<size_t>(c)], dec_.zy,
                                                   kQmin, kQmax);
                out[i] = static_cast<float>(dec_.sy * (qv - dec_.zy));
            }
            std::fill(slot.begin(), slot.end(), 0);
            break;
        }
    }
    pending.head = (s0 + 1) % kt;
    observe_site("dec.out", {out, frame});
}

std::vector<float> ModelRunner::forward_offline(std::span<const float> signal,
                                                bool pre_emph) const {
    const int lc = framing_.chunk, lb = framing_.lookback;
    const int nfft = framing_.fft_size(), F = bins_;
    const int64_t n_frames = static_cast<int64_t>(signal.size()) / lc;
    if (n_frames == 0) return {};
    const int64_t used = n_frames * lc;

    std::vector<float> sig(signal.begin(), signal.begin() + used);
    if (pre_emph) pre_emphasis(sig, 0.0f);

    RealFft fft(nfft);
    std::vector<float> frame(static_cast<size_t>(nfft));
    SpectralFrame bins(static_cast<size_t>(F));
    std::vector<std::vector<float>> spectra(static_cast<size_t>(n_frames),
                                            std::vector<float>(static_cast<size_t>(F) * 2));
    for (int64_t t = 0; t < n_frames; ++t) {
        // Frame t's lookahead ends at chunk t's last sample, mirroring the
        // chunk timeline; the first frame is zero context plus lookahead.
        const int64_t base = (t - 1) * lc - lb;
        for (int i = 0; i < nfft; ++i) {
            const int64_t idx = base + i;
            frame[static_cast<size_t>(i)] =
                (idx >= 0 && idx < used) ? sig[static_cast<size_t>(idx)] : 0.0f;
        }
        bins = analysis_stft(fft, frame);
        auto& row = spectra[static_cast<size_t>(t)];
        for (int f = 0; f < F; ++f) {
            row[static_cast<size_t>(f) * 2] = bins[static_cast<size_t>(f)].real();
            row[static_cast<size_t>(f) * 2 + 1] = bins[static_cast<size_t>(f)].imag();
        }
        observe_site("enc.in", row);
    }

    std::vector<std::vector<float>> dec_frames;
    if (bypass_) {
        dec_frames = spectra;
    } else {
        Workspace ws = make_workspace();
        const int D = cfg_.channels, H = cfg_.hidden, kt = cfg_.enc_kt;
        FeatureTensor feat(D, static_cast<int>(n_frames), F);
        const std::vector<float> zero_frame(static_cast<size_t>(F) * 2, 0.0f);
        std::vector<const float*> win(static_cast<size_t>(kt));
        for (int64_t t = 0; t < n_frames; ++t) {
            for (int dt = 0; dt < kt; ++dt) {
                const int64_t ti = t - (kt - 1) + dt;
                win[static_cast<size_t>(dt)] =
                    ti >= 0 ? spectra[static_cast<size_t>(ti)].data() : zero_frame.data();
            }
            encode_frame(win.data(), feat.frame(static_cast<int>(t)), ws);
        }
        std::vector<float> h(static_cast<size_t>(F) * H), c(static_cast<size_t>(F) * H);
        for (int b = 0; b < cfg_.blocks; ++b) {
            std::fill(h.begin(), h.end(), 0.0f);
            std::fill(c.begin(), c.end(), 0.0f);
            for (int64_t t = 0; t < n_frames; ++t)
                block_frame(b, feat.frame(static_cast<int>(t)), h.data(), c.data(), ws);
        }
        dec_frames.assign(static_cast<size_t>(n_frames),
                          std::vector<float>(static_cast<size_t>(F) * 2));
        DecoderPending pending = make_pending();
        for (int64_t t = 0; t < n_frames; ++t) {
            decode_accumulate(feat.frame(static_cast<int>(t)), pending, ws);
            decode_emit(pending, dec_frames[static_cast<size_t>(t)].data(), ws);
        }
    }

    const std::vector<float> window = build_synthesis_window(framing_);
    OlaState ola = OlaState::init(framing_);
    // The emitted stream lags the input by chunk+lookahead samples and is
    // truncated to the consumed length, exactly like the chunked driver.
    std::vector<float> out(static_cast<size_t>(framing_.lookahead), 0.0f);
    out.reserve(static_cast<size_t>(used));
    SpectralFrame spec(static_cast<size_t>(F));
    for (int64_t t = 0; t < n_frames; ++t) {
        const auto& row = dec_frames[static_cast<size_t>(t)];
        for (int f = 0; f < F; ++f)
            spec[static_cast<size_t>(f)] = {row[static_cast<size_t>(f) * 2],
                                            row[static_cast<size_t>(f) * 2 + 1]};
        const std::vector<float> chunk = synthesis_chunk(fft, framing_, spec, ola, window);
        out.insert(out.end(), chunk.begin(), chunk.end());
    }
    out.resize(static_cast<size_t>(used));
    return out;
}

const QGruCell& ModelRunner::gru_cell(int block, bool backward) const {
    const BlockWeights& bw = blocks_.at(static_cast<size_t>(block));
    return backward ? bw.gru_bwd : bw.gru_fwd;
}

const QLstmCell& ModelRunner::lstm_cell(int block) const {
    return blocks_.at(static_cast<size_t>(block)).lstm;
}

size_t ModelRunner::recurrent_floats() const {
    return static_cast<size_t>(bins_) * static_cast<size_t>(cfg_.hidden);
}

}  // namespace naw
