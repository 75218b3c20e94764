#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "naw/framing.hpp"
#include "naw/model.hpp"
#include "naw/runner.hpp"

namespace naw {

struct BenchConfig {
    double seconds = 10.0;
    uint64_t seed = 1;
};

/// Engine configuration document. Every field is optional in JSON and
/// defaults to the reference setup; unknown keys are rejected so typos
/// surface instead of silently using defaults.
struct EngineConfig {
    FramingConfig framing;
    ModelConfig model;
    bool pre_emphasis = true;
    bool bypass = false;
    Mode mode = Mode::f32;
    std::map<std::string, Precision> plan_overrides;
    double calibration_momentum = 0.9;
    BenchConfig bench;
};

/// Parses and validates a config document; throws std::invalid_argument
/// naming the offending field.
EngineConfig config_from_json(const std::string& text);

/// Serializes the full document (all fields explicit).
std::string config_to_json(const EngineConfig& cfg);

/// Mode-derived plan with per-layer overrides applied; overriding an
/// unknown layer throws.
PrecisionPlan resolve_plan(const EngineConfig& cfg);

}  // namespace naw
