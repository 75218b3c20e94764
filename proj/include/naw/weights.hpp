#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "naw/model.hpp"
#include "naw/quant.hpp"
#include "naw/tensor.hpp"

namespace naw {

enum class Dtype : uint8_t { f32 = 0, bf16 = 1, i8 = 2 };

/// One named parameter tensor. `f32` always holds the canonical values:
/// for bf16 payloads those are exactly representable, for int8 payloads
/// they are the dequantized lattice values.
struct Tensor {
    std::vector<int> shape;
    Dtype dtype = Dtype::f32;
    std::vector<float> f32;
    std::vector<int8_t> i8;  // only when dtype == i8
    QuantSpec qspec;         // only when dtype == i8
    int channel_axis = 0;    // output-channel axis used for weight quantization

    int64_t count() const { return numel(shape); }
};

struct WeightStore {
    std::map<std::string, Tensor> tensors;

    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    int64_t param_count() const;
};

/// Declared shape, quantization axis and init fan-in of one tensor.
struct TensorDef {
    std::string name;
    std::vector<int> shape;
    int channel_axis;
    int fan_in;
};

/// Canonical tensor list for a model operating on `n_bins` STFT bins.
std::vector<TensorDef> model_tensor_defs(const ModelConfig& cfg, int n_bins);

/// Plan keys: one entry per quantizable layer (weight+bias group).
std::vector<std::string> model_layers(const ModelConfig& cfg);

/// "block.0.spectral.gru_fwd.w_ih" -> "block.0.spectral.gru_fwd"
std::string layer_of(const std::string& tensor_name);

/// Seeded uniform init in ±1/sqrt(fan_in); identical across platforms.
WeightStore random_init(const ModelConfig& cfg, int n_bins, uint64_t seed);

/// Checks that `store` holds exactly the canonical tensors with the right
/// shapes; throws std::invalid_argument otherwise.
void check_store(const WeightStore& store, const ModelConfig& cfg, int n_bins);

}  // namespace naw
