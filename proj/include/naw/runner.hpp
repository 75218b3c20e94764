#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "naw/framing.hpp"
#include "naw/model.hpp"
#include "naw/quant.hpp"
#include "naw/weights.hpp"

namespace naw {

enum class Precision { f32 = 0, bf16 = 1, int8 = 2 };
enum class Mode { f32, bf16, int8, mixed };

Precision precision_from_string(const std::string& s);
std::string to_string(Precision p);
Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);

/// Per-layer precision assignment covering every model layer.
struct PrecisionPlan {
    std::map<std::string, Precision> layers;

    static PrecisionPlan uniform(const ModelConfig& cfg, Precision p);
    /// mixed keeps the boundary convolutions in bf16 and the rest in int8.
    static PrecisionPlan for_mode(const ModelConfig& cfg, Mode m);
    Precision at(const std::string& layer) const;  // throws on unknown layer
    void validate(const ModelConfig& cfg) const;   // every layer mapped exactly
};

/// Calibrated per-tensor activation ranges, keyed by site name.
struct ActivationSpecs {
    std::map<std::string, QuantSpec> sites;
    std::map<std::string, std::pair<double, double>> ranges;  // observed [alpha, beta]

    bool empty() const { return sites.empty(); }
    const QuantSpec& at(const std::string& site) const;  // throws with site context
};

/// Names of every activation tensor that may be quantized.
std::vector<std::string> activation_sites(const ModelConfig& cfg);

/// Runs whole-utterance f32 passes over `clips`, folds each clip's per-site
/// min/max into a moving-average range, and freezes the resulting
/// activation lattices.
ActivationSpecs calibrate_activations(const WeightStore& store, const ModelConfig& cfg,
                                      const FramingConfig& framing,
                                      const std::vector<std::vector<float>>& clips,
                                      bool pre_emphasis, double momentum = 0.9);

namespace detail {

/// One packed dense kernel: out = imcol(k) · wT(k,n) (+bias), with optional
/// int8 requantization or bf16 rounding folded in at prepare time.
struct PGemm {
    Precision prec = Precision::f32;
    int k = 0, n = 0;
    std::vector<float> wT;       // (k, n) — bf16-rounded values for bf16 layers
    std::vector<float> bias;     // float bias (bf16-rounded for bf16 layers)
    std::vector<int8_t> wTq;     // (k, n)
    std::vector<int32_t> wsum;   // per column
    std::vector<int32_t> biasq;  // bias in S_x*S_w[n] units (requantizing ops)
    std::vector<double> mult;    // S_x*S_w[n]/S_y (requantizing ops)
    std::vector<double> sw;      // per-column weight scale
    double sx = 1.0;
    int zx = 0;
    double sy = 1.0;
    int zy = 0;
};

struct Scratch {
    std::vector<float> f0, f1, f2, f3;
    std::vector<int8_t> q0, q1;
    std::vector<int32_t> i0;
};

}  // namespace detail

/// Single-direction GRU cell (gate order: reset, update, candidate). The
/// hidden state is re-quantized at its activation site after every step in
/// int8 mode, and bf16-rounded in bf16 mode.
class QGruCell {
public:
    static QGruCell make(const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih,
                         const Tensor& b_hh, Precision prec, const QuantSpec* x_spec,
                         const QuantSpec* h_spec);

    int input_size() const { return in_; }
    int hidden_size() const { return hidden_; }

    /// gx_out (rows, 3H) = x_rows (rows, in) · W_ihᵀ + b_ih
    void gates_x(const float* x_rows, int rows, float* gx_out, detail::Scratch& s) const;
    /// One recurrence step given the precomputed input gates for this row.
    void step_with_gx(const float* gx_row, float* h, detail::Scratch& s) const;
    /// Convenience single step from a raw input row.
    void step(std::span<const float> x, std::span<float> h, detail::Scratch& s) const;

private:
    int in_ = 0, hidden_ = 0;
    detail::PGemm ih_, hh_;
    Precision prec_ = Precision::f32;
    QuantSpec h_spec_;
    bool quant_h_ = false;
};

/// LSTM cell shared across frequency bins (gate order: input, forget,
/// candidate, output); hidden state treated like the GRU's.
class QLstmCell {
public:
    static QLstmCell make(const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih,
                          const Tensor& b_hh, Precision prec, const QuantSpec* x_spec,
                          const QuantSpec* h_spec);

    int input_size() const { return in_; }
    int hidden_size() const { return hidden_; }

    void gates_x(const float* x_rows, int rows, float* gx_out, detail::Scratch& s) const;
    /// gh_out (rows, 4H) = h_rows (rows, H) · W_hhᵀ + b_hh — batched over bins.
    void gates_h(const float* h_rows, int rows, float* gh_out, detail::Scratch& s) const;
    /// Gate nonlinearities and state update for one bin.
    void pointwise(const float* gx_row, const float* gh_row, float* h, float* c) const;
    void step_with_gx(const float* gx_row, float* h, float* c, detail::Scratch& s) const;
    void step(std::span<const float> x, std::span<float> h, std::span<float> c,
              detail::Scratch& s) const;

private:
    int in_ = 0, hidden_ = 0;
    detail::PGemm ih_, hh_;
    Precision prec_ = Precision::f32;
    QuantSpec h_spec_;
    bool quant_h_ = false;
};

/// Scratch buffers plus per-stream working tensors; one per stream or
/// offline pass, never shared.
struct Workspace {
    detail::Scratch s;
    std::vector<float> imcol;      // largest im2col staging needed
    std::vector<float> gates_x;    // batched input-gate activations
    std::vector<float> gates_h;    // batched hidden-gate activations
    std::vector<float> seq;        // spectral sequence / concat buffer
    std::vector<float> exp_out;    // expand output rows
    std::vector<float> proj;       // projection output rows
};

/// Pending transposed-convolution contributions: ring of dec_kt frames of
/// complex spectra, oldest first; int32 accumulators in int8 mode.
struct DecoderPending {
    std::vector<std::vector<float>> f;
    std::vector<std::vector<int32_t>> i;
    int head = 0;  ///< index of the slot that completes on the next emit
};

using SiteHook = std::function<void(const std::string& site, std::span<const float>)>;
using TraceHook = std::function<void(const std::string& layer, Precision prec)>;

/// Prepared, immutable inference model: weights packed per the precision
/// plan, activation specs resolved per site. Shareable across threads; all
/// mutable scratch lives in caller-owned Workspace/state objects.
class ModelRunner {
public:
    ModelRunner(const WeightStore& store, const ModelConfig& cfg, const FramingConfig& framing,
                const PrecisionPlan& plan, const ActivationSpecs* specs);

    const ModelConfig& model() const { return cfg_; }
    const FramingConfig& framing() const { return framing_; }
    const PrecisionPlan& plan() const { return plan_; }

    void set_site_hook(SiteHook hook) { site_hook_ = std::move(hook); }
    void set_trace_hook(TraceHook hook) { trace_hook_ = std::move(hook); }
    void set_bypass(bool b) { bypass_ = b; }
    bool bypass() const { return bypass_; }

    Workspace make_workspace() const;
    DecoderPending make_pending() const;

    /// window: enc_kt spectra frames (n_bins × 2 floats, [re, im] rows),
    /// oldest first; out: n_bins × channels frame slab.
    void encode_frame(const float* const* window, float* out, Workspace& ws) const;
    /// Applies block b's spectral stage then one temporal step, in place.
    void block_frame(int b, float* x, float* h, float* c, Workspace& ws) const;
    /// Adds frame z's transposed-conv taps into the pending ring.
    void decode_accumulate(const float* z, DecoderPending& pending, Workspace& ws) const;
    /// Finalizes the oldest pending frame into out (n_bins × 2) and rotates.
    void decode_emit(DecoderPending& pending, float* out, Workspace& ws) const;

    void observe_site(const std::string& site, std::span<const float> values) const;

    /// Whole-utterance reference pass: framing, network, dual-window
    /// synthesis. Output length = input length truncated to whole chunks.
    std::vector<float> forward_offline(std::span<const float> signal, bool pre_emphasis) const;

    const QGruCell& gru_cell(int block, bool backward) const;
    const QLstmCell& lstm_cell(int block) const;

    size_t recurrent_floats() const;  // per-block h (and c) length in floats

private:
    struct BlockWeights {
        detail::PGemm comp;
        QGruCell gru_fwd, gru_bwd;
        detail::PGemm expand;
        QLstmCell lstm;
        detail::PGemm proj;
        Precision comp_prec, gru_prec, expand_prec, lstm_prec, proj_prec;
    };
    struct DecoderWeights {
        Precision prec = Precision::f32;
        // per time tap: (dec_kf*channels, 2) packs
        std::vector<std::vector<float>> wT;
        std::vector<std::vector<int8_t>> wTq;
        std::vector<std::vector<int32_t>> wsum;  // per tap, per out channel
        std::vector<float> bias;
        std::vector<int32_t> biasq;
        std::vector<double> mult;
        std::vector<double> sw;
        double sx = 1.0, sy = 1.0;
        int zx = 0, zy = 0;
    };

    void trace(const std::string& layer, Precision p) const;
    void spectral_stage(int b, float* x, Workspace& ws) const;
    void temporal_stage(int b, float* x, float* h, float* c, Workspace& ws) const;
    void apply_activation(float* v, size_t n) const;

    ModelConfig cfg_;
    FramingConfig framing_;
    PrecisionPlan plan_;
    ActivationSpecs specs_;
    bool bypass_ = false;
    int bins_ = 0, cbins_ = 0;

    detail::PGemm enc_;
    Precision enc_prec_ = Precision::f32;
    std::vector<BlockWeights> blocks_;
    DecoderWeights dec_;

    SiteHook site_hook_;
    TraceHook trace_hook_;
};

}  // namespace naw
