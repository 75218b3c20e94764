#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace naw {

enum class QScheme : uint8_t {
    per_tensor_asym = 0,  // one affine (S, Z) for the whole tensor
    per_channel_sym = 1,  // one symmetric S per output channel, Z = 0
};

struct QuantSpec {
    int bits = 8;
    QScheme scheme = QScheme::per_tensor_asym;
    std::vector<double> scale;  // 1 entry (per-tensor) or channels entries
    int zero_point = 0;         // always 0 for the symmetric scheme
    int channel_axis = 0;       // weight axis carrying output channels
    int qmin = -128;
    int qmax = 127;

    bool per_channel() const { return scheme == QScheme::per_channel_sym; }
    void validate() const;  // throws std::invalid_argument
};

struct QuantizedTensor {
    std::vector<int8_t> data;
    std::vector<int> shape;
    QuantSpec spec;
};

/// Running clipping range [alpha, beta] updated per calibration batch.
struct ObserverState {
    double alpha = 0.0;
    double beta = 0.0;
    double momentum = 0.9;
    bool initialized = false;

    void update(double batch_min, double batch_max);
};

// ---- scale derivation -------------------------------------------------

/// Asymmetric range: S = (beta-alpha)/(2^bits-1), Z maps alpha onto qmin.
/// Throws std::domain_error when beta <= alpha (caller widens the range).
std::pair<double, int> scale_asym(double alpha, double beta, int bits = 8);

/// Symmetric range: S = max(-alpha, beta)/(2^(bits-1)-1), Z = 0. An
/// all-zero range degrades to machine epsilon (flagged via *degenerate).
double scale_sym(double alpha, double beta, int bits = 8, bool* degenerate = nullptr);

// ---- scalar core (templated so gradient checks can run in double) ----

template <typename T>
inline T round_half_even(T x) {
    return static_cast<T>(std::nearbyint(x));  // FE_TONEAREST ties-to-even
}

template <typename T>
inline T quantize_value(T r, T scale, int zero_point, int qmin, int qmax) {
    T q = round_half_even(r / scale) + static_cast<T>(zero_point);
    if (q < static_cast<T>(qmin)) q = static_cast<T>(qmin);
    if (q > static_cast<T>(qmax)) q = static_cast<T>(qmax);
    return q;
}

template <typename T>
inline T fake_quant_value(T r, T scale, int zero_point, int qmin, int qmax) {
    const T q = quantize_value(r, scale, zero_point, qmin, qmax);
    return scale * (q - static_cast<T>(zero_point));
}

// ---- tensor ops -------------------------------------------------------

QuantizedTensor quantize(std::span<const float> r, const std::vector<int>& shape,
                         const QuantSpec& spec);
std::vector<float> dequantize(const QuantizedTensor& q);
/// dequantize(quantize(r)); idempotent, clamps out-of-range values.
void fake_quant(std::span<const float> r, std::span<float> out, const QuantSpec& spec);
std::vector<float> fake_quant(std::span<const float> r, const QuantSpec& spec);

/// Per-channel symmetric spec measured directly from weight values.
QuantSpec weight_spec(std::span<const float> w, const std::vector<int>& shape,
                      int channel_axis, int bits = 8);
/// Per-tensor asymmetric spec from an observed range. The range is stretched
/// to include real zero (so zero stays exactly representable) and widened
/// when degenerate.
QuantSpec activation_spec(double alpha, double beta, int bits = 8);

// ---- bfloat16 emulation ----------------------------------------------

/// Round-to-nearest-even truncation of an f32 to the bfloat16 value set.
float bf16_round(float x);
void bf16_round(std::span<const float> in, std::span<float> out);

// ---- quantizer gradients ----------------------------------------------

struct QuantizerGrads {
    double d_input;  // straight-through factor: 1 in range, 0 at the clamps
    double d_scale;  // learned-step-size factor, excluding the 1/sqrt(N*qmax) normalizer
};

QuantizerGrads quantizer_grads(double r, double scale, int zero_point, int qmin, int qmax);
double lsq_grad_norm(int64_t numel, int qmax);

// ---- integer kernels ----------------------------------------------------

/// x: (M,K) per-tensor asym; w: (N,K) per-channel sym over N; bias given in
/// int32 units of S_x*S_w[n]. Accumulates int8 products in int32 and
/// requantizes with M_n = S_x*S_w[n]/S_y in double. Requires K < 2^17.
QuantizedTensor q_matmul(const QuantizedTensor& x, const QuantizedTensor& w,
                         std::span<const int32_t> bias, const QuantSpec& out_spec);

/// x: (C_in, L) ; w: (C_out, C_in, k), stride = `stride`, zero padding on the
/// right to a multiple of stride when pad_right is set.
QuantizedTensor q_conv1d(const QuantizedTensor& x, const QuantizedTensor& w,
                         std::span<const int32_t> bias, int stride, bool pad_right,
                         const QuantSpec& out_spec);

/// x: (C_in, L) ; w: (C_in, C_out, k) with kernel == stride (each output
/// position receives exactly one input contribution).
QuantizedTensor q_deconv1d(const QuantizedTensor& x, const QuantizedTensor& w,
                           std::span<const int32_t> bias, int stride,
                           const QuantSpec& out_spec);

/// x: (C_in, T, F); w: (C_out, C_in, k_t, k_f); causal in time (output frame
/// t sees input frames t-k_t+1..t), symmetric zero padding in frequency.
QuantizedTensor q_conv2d(const QuantizedTensor& x, const QuantizedTensor& w,
                         std::span<const int32_t> bias, const QuantSpec& out_spec);

/// x: (C_in, T, F); w: (C_in, C_out, k_t, k_f); transposed, causal in time
/// (output frame t sums input frames t-k_t+1..t), frequency cropped back to F.
QuantizedTensor q_deconv2d(const QuantizedTensor& x, const QuantizedTensor& w,
                           std::span<const int32_t> bias, const QuantSpec& out_spec);

// Raw building blocks shared with the model runner.
namespace qkernel {

inline constexpr int kMaxReduceDim = 1 << 17;

/// C (M,N) = A (M,K) · B (K,N), int8 operands, int32 accumulation.
void gemm_i8(const int8_t* a, const int8_t* b, int32_t* c, int m, int k, int n);

/// out = clamp(round((acc - zx*wsum + bias) * mult) + zy)
int8_t requant(int32_t acc, int32_t correction, int32_t bias, double mult, int zy, int qmin,
               int qmax);

}  // namespace qkernel

std::string to_string(QScheme s);

}  // namespace naw
