#include "naw/quant.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <limits>
#include <stdexcept>

#include "naw/tensor.hpp"

namespace naw {

void QuantSpec::validate() const {
    if (bits < 2 || bits > 8) throw std::invalid_argument("quant bits must be in [2,8]");
    if (scale.empty()) throw std::invalid_argument("quant spec has no scale");
    for (double s : scale) {
        if (!(s > 0.0)) throw std::invalid_argument("quant scale must be positive");
    }
    if (scheme == QScheme::per_channel_sym && zero_point != 0)
        throw std::invalid_argument("symmetric scheme requires zero_point = 0");
    if (zero_point < qmin || zero_point > qmax)
        throw std::invalid_argument("zero_point outside [qmin, qmax]");
}

void ObserverState::update(double batch_min, double batch_max) {
    if (!initialized) {
        alpha = batch_min;
        beta = batch_max;
        initialized = true;
        return;
    }
    alpha += momentum * (batch_min - alpha);
    beta += momentum * (batch_max - beta);
}

std::pair<double, int> scale_asym(double alpha, double beta, int bits) {
    if (!(beta > alpha)) throw std::domain_error("degenerate quantization range");
    const double levels = static_cast<double>((1 << bits) - 1);
    const double s = (beta - alpha) / levels;
    const int qmin = -(1 << (bits - 1));
    const int qmax = (1 << (bits - 1)) - 1;
    int z = static_cast<int>(round_half_even(qmin - alpha / s));
    z = std::clamp(z, qmin, qmax);
    return {s, z};
}

double scale_sym(double alpha, double beta, int bits, bool* degenerate) {
    const double extent = std::max(-alpha, beta);
    if (degenerate) *degenerate = !(extent > 0.0);
    if (!(extent > 0.0)) return std::numeric_limits<float>::epsilon();
    return extent / static_cast<double>((1 << (bits - 1)) - 1);
}

namespace {

// Channel index of flat element i for a given axis.
struct ChannelIndexer {
    int64_t inner = 1;
    int64_t channels = 1;

    ChannelIndexer(const std::vector<int>& shape, int axis) {
        channels = shape[static_cast<size_t>(axis)];
        for (size_t d = static_cast<size_t>(axis) + 1; d < shape.size(); ++d) inner *= shape[d];
    }
    int64_t operator()(int64_t i) const { return (i / inner) % channels; }
};

}  // namespace

QuantizedTensor quantize(std::span<const float> r, const std::vector<int>& shape,
                         const QuantSpec& spec) {
    spec.validate();
    assert(static_cast<int64_t>(r.size()) == numel(shape));
    QuantizedTensor out;
    out.shape = shape;
    out.spec = spec;
    out.data.resize(r.size());
    if (!spec.per_channel()) {
        const double s = spec.scale[0];
        for (size_t i = 0; i < r.size(); ++i) {
            out.data[i] = static_cast<int8_t>(quantize_value<double>(r[i], s, spec.zero_point,
                                                                     spec.qmin, spec.qmax));
        }
    } else {
        const ChannelIndexer ch(shape, spec.channel_axis);
        for (size_t i = 0; i < r.size(); ++i) {
            const double s = spec.scale[static_cast<size_t>(ch(static_cast<int64_t>(i)))];
            out.data[i] =
                static_cast<int8_t>(quantize_value<double>(r[i], s, 0, spec.qmin, spec.qmax));
        }
    }
    return out;
}

std::vector<float> dequantize(const QuantizedTensor& q) {
    std::vector<float> out(q.data.size());
    if (!q.spec.per_channel()) {
        const double s = q.spec.scale[0];
        for (size_t i = 0; i < q.data.size(); ++i)
            out[i] = static_cast<float>(s * (q.data[i] - q.spec.zero_point));
    } else {
        const ChannelIndexer ch(q.shape, q.spec.channel_axis);
        for (size_t i = 0; i < q.data.size(); ++i)
            out[i] = static_cast<float>(q.spec.scale[static_cast<size_t>(ch(
                         static_cast<int64_t>(i)))] *
                     q.data[i]);
    }
    return out;
}

void fake_quant(std::span<const float> r, std::span<float> out, const QuantSpec& spec) {
    assert(r.size() == out.size());
    if (!spec.per_channel()) {
        const double s = spec.scale[0];
        for (size_t i = 0; i < r.size(); ++i) {
            out[i] = static_cast<float>(
                fake_quant_value<double>(r[i], s, spec.zero_point, spec.qmin, spec.qmax));
        }
    } else {
        // Per-channel fake-quant needs shape context; callers use the
        // tensor overloads below for that case.
        throw std::invalid_argument("per-channel fake_quant requires shape (use quantize)");
    }
}

std::vector<float> fake_quant(std::span<const float> r, const QuantSpec& spec) {
    std::vector<float> out(r.size());
    fake_quant(r, std::span<float>(out), spec);
    return out;
}

QuantSpec weight_spec(std::span<const float> w, const std::vector<int>& shape, int channel_axis,
                      int bits) {
    QuantSpec spec;
    spec.bits = bits;
    spec.scheme = QScheme::per_channel_sym;
    spec.zero_point = 0;
    spec.channel_axis = channel_axis;
    spec.qmin = -(1 << (bits - 1));
    spec.qmax = (1 << (bits - 1)) - 1;
    const ChannelIndexer ch(shape, channel_axis);
    std::vector<double> lo(static_cast<size_t>(ch.channels), 0.0);
    std::vector<double> hi(static_cast<size_t>(ch.channels), 0.0);
    for (size_t i = 0; i < w.size(); ++i) {
        const auto c = static_cast<size_t>(ch(static_cast<int64_t>(i)));
        lo[c] = std::min(lo[c], static_cast<double>(w[i]));
        hi[c] = std::max(hi[c], static_cast<double>(w[i]));
    }
    spec.scale.resize(static_cast<size_t>(ch.channels));
    for (size_t c = 0; c < spec.scale.size(); ++c) spec.scale[c] = scale_sym(lo[c], hi[c], bits);
    return spec;
}

QuantSpec activation_spec(double alpha, double beta, int bits) {
    // Real zero must land exactly on the lattice (padding and zero inputs
    // round-trip bit-exactly), so the range is first stretched to contain it;
    // this also keeps the derived zero-point inside [qmin, qmax].
    alpha = std::min(alpha, 0.0);
    beta = std::max(beta, 0.0);
    // A degenerate observed range (constant zero activations) is widened
    // symmetrically so the spec stays usable.
    if (!(beta > alpha)) {
        alpha -= 5e-7;
        beta += 5e-7;
    }
    QuantSpec spec;
    spec.bits = bits;
    spec.scheme = QScheme::per_tensor_asym;
    spec.qmin = -(1 << (bits - 1));
    spec.qmax = (1 << (bits - 1)) - 1;
    auto [s, z] = scale_asym(alpha, beta, bits);
    spec.scale = {s};
    spec.zero_point = z;
    return spec;
}

float bf16_round(float x) {
    if (std::isnan(x)) return x;
    uint32_t u = std::bit_cast<uint32_t>(x);
    u = (u + 0x7FFFu + ((u >> 16) & 1u)) & 0xFFFF0000u;
    return std::bit_cast<float>(u);
}

void bf16_round(std::span<const float> in, std::span<float> out) {
    assert(in.size() == out.size());
    for (size_t i = 0; i < in.size(); ++i) out[i] = bf16_round(in[i]);
}

QuantizerGrads quantizer_grads(double r, double scale, int zero_point, int qmin, int qmax) {
    const double u = r / scale;
    const double q = round_half_even(u) + zero_point;
    if (q < qmin) return {0.0, static_cast<double>(qmin - zero_point)};
    if (q > qmax) return {0.0, static_cast<double>(qmax - zero_point)};
    return {1.0, round_half_even(u) - u};
}

double lsq_grad_norm(int64_t count, int qmax) {
    return 1.0 / std::sqrt(static_cast<double>(count) * static_cast<double>(qmax));
}

namespace qkernel {

void gemm_i8(const int8_t* a, const int8_t* b, int32_t* c, int m, int k, int n) {
    assert(k < kMaxReduceDim);
    for (int i = 0; i < m; ++i) {
        int32_t* row = c + static_cast<size_t>(i) * n;
        std::fill(row, row + n, 0);
        const int8_t* arow = a + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const int32_t av = arow[kk];
            const int8_t* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
}

int8_t requant(int32_t acc, int32_t correction, int32_t bias, double mult, int zy, int qmin,
               int qmax) {
    const double v = round_half_even(static_cast<double>(acc - correction + bias) * mult) + zy;
    return static_cast<int8_t>(std::clamp(v, static_cast<double>(qmin), static_cast<double>(qmax)));
}

}  // namespace qkernel

namespace {

void check_int_inputs(const QuantizedTensor& x, const QuantizedTensor& w,
                      const QuantSpec& out_spec) {
    x.spec.validate();
    w.spec.validate();
    out_spec.validate();
    if (w.spec.scheme != QScheme::per_channel_sym)
        throw std::invalid_argument("integer kernels expect per-channel symmetric weights");
    if (x.spec.per_channel())
        throw std::invalid_argument("integer kernels expect per-tensor activations");
}

}  // namespace

QuantizedTensor q_matmul(const QuantizedTensor& x, const QuantizedTensor& w,
                         std::span<const int32_t> bias, const QuantSpec& out_spec) {
    check_int_inputs(x, w, out_spec);
    if (x.shape.size() != 2 || w.shape.size() != 2 || x.shape[1] != w.shape[1])
        throw std::invalid_argument("q_matmul shape mismatch");
    const int m = x.shape[0], k = x.shape[1], n = w.shape[0];
    if (k >= qkernel::kMaxReduceDim) throw std::invalid_argument("reduction dim too large");

    // Pack w (N,K) as (K,N) for the row-major kernel.
    std::vector<int8_t> bt(static_cast<size_t>(k) * n);
    std::vector<int32_t> wsum(static_cast<size_t>(n), 0);
    for (int j = 0; j < n; ++j) {
        for (int kk = 0; kk < k; ++kk) {
            const int8_t v = w.data[static_cast<size_t>(j) * k + kk];
            bt[static_cast<size_t>(kk) * n + j] = v;
            wsum[static_cast<size_t>(j)] += v;
        }
    }
    std::vector<int32_t> acc(static_cast<size_t>(m) * n);
    qkernel::gemm_i8(x.data.data(), bt.data(), acc.data(), m, k, n);

    QuantizedTensor out;
    out.shape = {m, n};
    out.spec = out_spec;
    out.data.resize(static_cast<size_t>(m) * n);
    const double sx = x.spec.scale[0];
    const double sy = out_spec.scale[0];
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            const double mult = sx * w.spec.scale[static_cast<size_t>(j)] / sy;
            out.data[static_cast<size_t>(i) * n + j] = qkernel::requant(
                acc[static_cast<size_t>(i) * n + j], x.spec.zero_point * wsum[static_cast<size_t>(j)],
                bias.empty() ? 0 : bias[static_cast<size_t>(j)], mult, out_spec.zero_point,
                out_spec.qmin, out_spec.qmax);
        }
    }
    return out;
}

QuantizedTensor q_conv1d(const QuantizedTensor& x, const QuantizedTensor& w,
                         std::span<const int32_t> bias, int stride, bool pad_right,
                         const QuantSpec& out_spec) {
    check_int_inputs(x, w, out_spec);
    if (x.shape.size() != 2 || w.shape.size() != 3 || x.shape[0] != w.shape[1])
        throw std::invalid_argument("q_conv1d shape mismatch");
    const int cin = x.shape[0], len = x.shape[1];
    const int cout = w.shape[0], kw = w.shape[2];
    const int padded = pad_right ? ((len + stride - 1) / stride) * stride : len;
    if (padded < kw) throw std::invalid_argument("q_conv1d input shorter than kernel");
    const int out_len = (padded - kw) / stride + 1;

    // Pad with the zero-point so real-domain zeros enter the accumulator.
    std::vector<int8_t> xp(static_cast<size_t>(cin) * padded,
                           static_cast<int8_t>(x.spec.zero_point));
    for (int c = 0; c < cin; ++c)
        std::copy_n(x.data.begin() + static_cast<size_t>(c) * len, len,
                    xp.begin() + static_cast<size_t>(c) * padded);

    QuantizedTensor out;
    out.shape = {cout, out_len};
    out.spec = out_spec;
    out.data.resize(static_cast<size_t>(cout) * out_len);
    const double sx = x.spec.scale[0];
    const double sy = out_spec.scale[0];
    for (int co = 0; co < cout; ++co) {
        int32_t wsum = 0;
        for (int c = 0; c < cin; ++c)
            for (int t = 0; t < kw; ++t)
                wsum += w.data[(static_cast<size_t>(co) * cin + c) * kw + t];
        const double mult = sx * w.spec.scale[static_cast<size_t>(co)] / sy;
        for (int j = 0; j < out_len; ++j) {
            int32_t acc = 0;
            for (int c = 0; c < cin; ++c) {
                const int8_t* xr = xp.data() + static_cast<size_t>(c) * padded + j * stride;
                const int8_t* wr = w.data.data() + (static_cast<size_t>(co) * cin + c) * kw;
                for (int t = 0; t < kw; ++t) acc += static_cast<int32_t>(xr[t]) * wr[t];
            }
            out.data[static_cast<size_t>(co) * out_len + j] =
                qkernel::requant(acc, x.spec.zero_point * wsum,
                                 bias.empty() ? 0 : bias[static_cast<size_t>(co)], mult,
                                 out_spec.zero_point, out_spec.qmin, out_spec.qmax);
        }
    }
    return out;
}

QuantizedTensor q_deconv1d(const QuantizedTensor& x, const QuantizedTensor& w,
                           std::span<const int32_t> bias, int stride,
                           const QuantSpec& out_spec) {
    check_int_inputs(x, w, out_spec);
    if (x.shape.size() != 2 || w.shape.size() != 3 || x.shape[0] != w.shape[0])
        throw std::invalid_argument("q_deconv1d shape mismatch");
    if (w.shape[2] != stride)
        throw std::invalid_argument("q_deconv1d requires kernel == stride");
    if (w.spec.channel_axis != 1)
        throw std::invalid_argument("q_deconv1d weight scales live on axis 1");
    const int cin = x.shape[0], len = x.shape[1];
    const int cout = w.shape[1], kw = w.shape[2];

    QuantizedTensor out;
    out.shape = {cout, len * stride};
    out.spec = out_spec;
    out.data.resize(static_cast<size_t>(cout) * len * stride);
    const double sx = x.spec.scale[0];
    const double sy = out_spec.scale[0];
    for (int co = 0; co < cout; ++co) {
        const double mult = sx * w.spec.scale[static_cast<size_t>(co)] / sy;
        for (int t = 0; t < kw; ++t) {
            int32_t wsum = 0;
            for (int c = 0; c < cin; ++c)
                wsum += w.data[(static_cast<size_t>(c) * cout + co) * kw + t];
            for (int j = 0; j < len; ++j) {
                int32_t acc = 0;
                for (int c = 0; c < cin; ++c) {
                    acc += static_cast<int32_t>(x.data[static_cast<size_t>(c) * len + j]) *
                           w.data[(static_cast<size_t>(c) * cout + co) * kw + t];
                }
                out.data[static_cast<size_t>(co) * (len * stride) + j * stride + t] =
                    qkernel::requant(acc, x.spec.zero_point * wsum,
                                     bias.empty() ? 0 : bias[static_cast<size_t>(co)], mult,
                                     out_spec.zero_point, out_spec.qmin, out_spec.qmax);
            }
        }
    }
    return out;
}

QuantizedTensor q_conv2d(const QuantizedTensor& x, const QuantizedTensor& w,
                         std::span<const int32_t> bias, const QuantSpec& out_spec) {
    check_int_inputs(x, w, out_spec);
    if (x.shape.size() != 3 || w.shape.size() != 4 || x.shape[0] != w.shape[1])
        throw std::invalid_argument("q_conv2d shape mismatch");
    const int cin = x.shape[0], tlen = x.shape[1], flen = x.shape[2];
    const int cout = w.shape[0], kt = w.shape[2], kf = w.shape[3];
    if (kf % 2 == 0) throw std::invalid_argument("q_conv2d expects odd frequency kernel");
    const int pf = (kf - 1) / 2;
    const int pt = kt - 1;  // time padding strictly in the past

    const int tp = tlen + pt, fp = flen + 2 * pf;
    std::vector<int8_t> xp(static_cast<size_t>(cin) * tp * fp,
                           static_cast<int8_t>(x.spec.zero_point));
    for (int c = 0; c < cin; ++c)
        for (int t = 0; t < tlen; ++t)
            std::copy_n(x.data.begin() + (static_cast<size_t>(c) * tlen + t) * flen, flen,
                        xp.begin() + (static_cast<size_t>(c) * tp + (t + pt)) * fp + pf);

    QuantizedTensor out;
    out.shape = {cout, tlen, flen};
    out.spec = out_spec;
    out.data.resize(static_cast<size_t>(cout) * tlen * flen);
    const double sx = x.spec.scale[0];
    const double sy = out_spec.scale[0];
    for (int co = 0; co < cout; ++co) {
        int32_t wsum = 0;
        const int8_t* wc = w.data.data() + static_cast<size_t>(co) * cin * kt * kf;
        for (int i = 0; i < cin * kt * kf; ++i) wsum += wc[i];
        const double mult = sx * w.spec.scale[static_cast<size_t>(co)] / sy;
        for (int t = 0; t < tlen; ++t) {
            for (int f = 0; f < flen; ++f) {
                int32_t acc = 0;
                for (int c = 0; c < cin; ++c)
                    for (int dt = 0; dt < kt; ++dt)
                        for (int df = 0; df < kf; ++df)
                            acc += static_cast<int32_t>(
                                       xp[(static_cast<size_t>(c) * tp + t + dt) * fp + f + df]) *
                                   wc[(static_cast<size_t>(c) * kt + dt) * kf + df];
                out.data[(static_cast<size_t>(co) * tlen + t) * flen + f] =
                    qkernel::requant(acc, x.spec.zero_point * wsum,
                                     bias.empty() ? 0 : bias[static_cast<size_t>(co)], mult,
                                     out_spec.zero_point, out_spec.qmin, out_spec.qmax);
            }
        }
    }
    return out;
}

QuantizedTensor q_deconv2d(const QuantizedTensor& x, const QuantizedTensor& w,
                           std::span<const int32_t> bias, const QuantSpec& out_spec) {
    check_int_inputs(x, w, out_spec);
    if (x.shape.size() != 3 || w.shape.size() != 4 || x.shape[0] != w.shape[0])
        throw std::invalid_argument("q_deconv2d shape mismatch");
    if (w.spec.channel_axis != 1)
        throw std::invalid_argument("q_deconv2d weight scales live on axis 1");
    const int cin = x.shape[0], tlen = x.shape[1], flen = x.shape[2];
    const int cout = w.shape[1], kt = w.shape[2], kf = w.shape[3];
    if (kf % 2 == 0) throw std::invalid_argument("q_deconv2d expects odd frequency kernel");
    const int pf = (kf - 1) / 2;

    QuantizedTensor out;
    out.shape = {cout, tlen, flen};
    out.spec = out_spec;
    out.data.resize(static_cast<size_t>(cout) * tlen * flen);
    const double sx = x.spec.scale[0];
    const double sy = out_spec.scale[0];
    const int zx = x.spec.zero_point;
    for (int co = 0; co < cout; ++co) {
        const double mult = sx * w.spec.scale[static_cast<size_t>(co)] / sy;
        for (int t = 0; t < tlen; ++t) {
            for (int f = 0; f < flen; ++f) {
                int32_t acc = 0;
                for (int dt = 0; dt < kt; ++dt) {
                    const int ti = t - dt;
                    if (ti < 0 || ti >= tlen) continue;
                    for (int df = 0; df < kf; ++df) {
                        const int fi = f + pf - df;
                        if (fi < 0 || fi >= flen) continue;
                        for (int c = 0; c < cin; ++c) {
                            const int32_t xv =
                                x.data[(static_cast<size_t>(c) * tlen + ti) * flen + fi] - zx;
                            acc += xv * w.data[((static_cast<size_t>(c) * cout + co) * kt + dt) *
                                                   kf +
                                               df];
                        }
                    }
                }
                out.data[(static_cast<size_t>(co) * tlen + t) * flen + f] = qkernel::requant(
                    acc, 0, bias.empty() ? 0 : bias[static_cast<size_t>(co)], mult,
                    out_spec.zero_point, out_spec.qmin, out_spec.qmax);
            }
        }
    }
    return out;
}

std::string to_string(QScheme s) {
    return s == QScheme::per_tensor_asym ? "per_tensor_asym" : "per_channel_sym";
}

}  // namespace naw
