#pragma once

#include <string>

#include "naw/runner.hpp"
#include "naw/weights.hpp"

namespace naw {

/// Everything a weight container carries: the tensors (with their on-disk
/// dtypes), calibrated activation specs (possibly empty), and the engine
/// configuration JSON document verbatim.
struct ContainerData {
    WeightStore store;
    ActivationSpecs specs;
    std::string config_json = "{}";
};

/// Binary weight container, magic "NAW1", version 1, little-endian
/// throughout. Tensors round-trip bit-exactly; i8 tensors carry their
/// quantization specs in the payload.
void container_save(const std::string& path, const WeightStore& store,
                    const ActivationSpecs& specs, const std::string& config_json);

ContainerData container_load(const std::string& path);

/// Converts a canonical f32 store to on-disk dtypes per the plan: bf16
/// layers keep rounded f32 values, int8 layers get per-channel symmetric
/// weight payloads (biases stay f32), f32 layers pass through.
WeightStore pack_weights(const WeightStore& store, const PrecisionPlan& plan);

}  // namespace naw
