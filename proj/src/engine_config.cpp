#include "naw/engine_config.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

namespace naw {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw std::invalid_argument("config: " + path + " " + what);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) bad(path + "." + key, "is not a recognized field");
    }
}

int get_int(const json& obj, const std::string& path, const char* key, int fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) bad(path + "." + key, "must be an integer");
    return v.get<int>();
}

double get_num(const json& obj, const std::string& path, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) bad(path + "." + key, "must be a number");
    return v.get<double>();
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) bad(path + "." + key, "must be a boolean");
    return v.get<bool>();
}

std::string get_str(const json& obj, const std::string& path, const char* key,
                    const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) bad(path + "." + key, "must be a string");
    return v.get<std::string>();
}

void get_kernel(const json& obj, const std::string& path, const char* key, int* kt, int* kf) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() ||
        !v[1].is_number_integer())
        bad(path + "." + key, "must be a [time, freq] integer pair");
    *kt = v[0].get<int>();
    *kf = v[1].get<int>();
}

}  // namespace

EngineConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config: document must be an object");
    check_keys(j, "$",
               {"framing", "model", "pre_emphasis", "bypass", "mode", "plan_overrides",
                "calibration", "bench"});

    EngineConfig cfg;
    if (j.contains("framing")) {
        const json& f = j.at("framing");
        if (!f.is_object()) bad("$.framing", "must be an object");
        check_keys(f, "$.framing", {"sample_rate", "lookback", "chunk", "lookahead"});
        cfg.framing.sample_rate = get_int(f, "$.framing", "sample_rate", cfg.framing.sample_rate);
        cfg.framing.lookback = get_int(f, "$.framing", "lookback", cfg.framing.lookback);
        cfg.framing.chunk = get_int(f, "$.framing", "chunk", cfg.framing.chunk);
        cfg.framing.lookahead = get_int(f, "$.framing", "lookahead", cfg.framing.lookahead);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        if (!m.is_object()) bad("$.model", "must be an object");
        check_keys(m, "$.model",
                   {"blocks", "channels", "hidden", "freq_stride", "enc_kernel", "dec_kernel",
                    "activation"});
        cfg.model.blocks = get_int(m, "$.model", "blocks", cfg.model.blocks);
        cfg.model.channels = get_int(m, "$.model", "channels", cfg.model.channels);
        cfg.model.hidden = get_int(m, "$.model", "hidden", cfg.model.hidden);
        cfg.model.freq_stride = get_int(m, "$.model", "freq_stride", cfg.model.freq_stride);
        get_kernel(m, "$.model", "enc_kernel", &cfg.model.enc_kt, &cfg.model.enc_kf);
        get_kernel(m, "$.model", "dec_kernel", &cfg.model.dec_kt, &cfg.model.dec_kf);
        const std::string act =
            get_str(m, "$.model", "activation", to_string(cfg.model.activation));
        try {
            cfg.model.activation = activation_from_string(act);
        } catch (const std::invalid_argument&) {
            bad("$.model.activation", "must be one of none|relu|tanh");
        }
    }
    cfg.pre_emphasis = get_bool(j, "$", "pre_emphasis", cfg.pre_emphasis);
    cfg.bypass = get_bool(j, "$", "bypass", cfg.bypass);
    {
        const std::string mode = get_str(j, "$", "mode", to_string(cfg.mode));
        try {
            cfg.mode = mode_from_string(mode);
        } catch (const std::invalid_argument&) {
            bad("$.mode", "must be one of f32|bf16|int8|mixed");
        }
    }
    if (j.contains("plan_overrides")) {
        const json& p = j.at("plan_overrides");
        if (!p.is_object()) bad("$.plan_overrides", "must be an object");
        for (const auto& [layer, prec] : p.items()) {
            if (!prec.is_string())
                bad("$.plan_overrides." + layer, "must be a precision string");
            try {
                cfg.plan_overrides[layer] = precision_from_string(prec.get<std::string>());
            } catch (const std::invalid_argument&) {
                bad("$.plan_overrides." + layer, "must be one of f32|bf16|int8");
            }
        }
    }
    if (j.contains("calibration")) {
        const json& c = j.at("calibration");
        if (!c.is_object()) bad("$.calibration", "must be an object");
        check_keys(c, "$.calibration", {"momentum"});
        cfg.calibration_momentum =
            get_num(c, "$.calibration", "momentum", cfg.calibration_momentum);
        if (!(cfg.calibration_momentum > 0.0 && cfg.calibration_momentum <= 1.0))
            bad("$.calibration.momentum", "must lie in (0, 1]");
    }
    if (j.contains("bench")) {
        const json& b = j.at("bench");
        if (!b.is_object()) bad("$.bench", "must be an object");
        check_keys(b, "$.bench", {"seconds", "seed"});
        cfg.bench.seconds = get_num(b, "$.bench", "seconds", cfg.bench.seconds);
        if (!(cfg.bench.seconds > 0.0)) bad("$.bench.seconds", "must be positive");
        const json& bj = b;
        if (bj.contains("seed")) {
            if (!bj.at("seed").is_number_unsigned() && !bj.at("seed").is_number_integer())
                bad("$.bench.seed", "must be a non-negative integer");
            const auto seed = bj.at("seed").get<int64_t>();
            if (seed < 0) bad("$.bench.seed", "must be a non-negative integer");
            cfg.bench.seed = static_cast<uint64_t>(seed);
        }
    }

    cfg.framing.validate();
    cfg.model.validate();
    return cfg;
}

std::string config_to_json(const EngineConfig& cfg) {
    json j;
    j["framing"] = {{"sample_rate", cfg.framing.sample_rate},
                    {"lookback", cfg.framing.lookback},
                    {"chunk", cfg.framing.chunk},
                    {"lookahead", cfg.framing.lookahead}};
    j["model"] = {{"blocks", cfg.model.blocks},
                  {"channels", cfg.model.channels},
                  {"hidden", cfg.model.hidden},
                  {"freq_stride", cfg.model.freq_stride},
                  {"enc_kernel", {cfg.model.enc_kt, cfg.model.enc_kf}},
                  {"dec_kernel", {cfg.model.dec_kt, cfg.model.dec_kf}},
                  {"activation", to_string(cfg.model.activation)}};
    j["pre_emphasis"] = cfg.pre_emphasis;
    j["bypass"] = cfg.bypass;
    j["mode"] = to_string(cfg.mode);
    json overrides = json::object();
    for (const auto& [layer, prec] : cfg.plan_overrides) overrides[layer] = to_string(prec);
    j["plan_overrides"] = std::move(overrides);
    j["calibration"] = {{"momentum", cfg.calibration_momentum}};
    j["bench"] = {{"seconds", cfg.bench.seconds}, {"seed", cfg.bench.seed}};
    return j.dump(2);
}

PrecisionPlan resolve_plan(const EngineConfig& cfg) {
    PrecisionPlan plan = PrecisionPlan::for_mode(cfg.model, cfg.mode);
    for (const auto& [layer, prec] : cfg.plan_overrides) {
        auto it = plan.layers.find(layer);
        if (it == plan.layers.end())
            throw std::invalid_argument("config: plan override names unknown layer " + layer);
        it->second = prec;
    }
    return plan;
}

}  // namespace naw
