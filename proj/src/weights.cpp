#include "naw/weights.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace naw {

const Tensor& WeightStore::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("missing weight tensor '" + name + "'");
    return it->second;
}

Tensor& WeightStore::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("missing weight tensor '" + name + "'");
    return it->second;
}

int64_t WeightStore::param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : tensors) n += t.count();
    return n;
}

namespace {

void add_recurrent(std::vector<TensorDef>& defs, const std::string& prefix, int gates, int in,
                   int hidden) {
    defs.push_back({prefix + ".w_ih", {gates * hidden, in}, 0, in});
    defs.push_back({prefix + ".w_hh", {gates * hidden, hidden}, 0, hidden});
    defs.push_back({prefix + ".b_ih", {gates * hidden}, 0, hidden});
    defs.push_back({prefix + ".b_hh", {gates * hidden}, 0, hidden});
}

}  // namespace

std::vector<TensorDef> model_tensor_defs(const ModelConfig& cfg, int n_bins) {
    cfg.validate();
    (void)n_bins;
    const int d = cfg.channels, h = cfg.hidden, q = cfg.freq_stride;
    std::vector<TensorDef> defs;
    defs.push_back(
        {"encoder.conv.weight", {d, 2, cfg.enc_kt, cfg.enc_kf}, 0, 2 * cfg.enc_kt * cfg.enc_kf});
    defs.push_back({"encoder.conv.bias", {d}, 0, 2 * cfg.enc_kt * cfg.enc_kf});
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string p = "block." + std::to_string(b);
        defs.push_back({p + ".spectral.compress.weight", {d, d, q}, 0, d * q});
        defs.push_back({p + ".spectral.compress.bias", {d}, 0, d * q});
        add_recurrent(defs, p + ".spectral.gru_fwd", 3, d, h);
        add_recurrent(defs, p + ".spectral.gru_bwd", 3, d, h);
        // Transposed conv maps the 2H bidirectional features back to D.
        defs.push_back({p + ".spectral.expand.weight", {2 * h, d, q}, 1, 2 * h * q});
        defs.push_back({p + ".spectral.expand.bias", {d}, 0, 2 * h * q});
        add_recurrent(defs, p + ".temporal.lstm", 4, d, h);
        defs.push_back({p + ".temporal.proj.weight", {d, h}, 0, h});
        defs.push_back({p + ".temporal.proj.bias", {d}, 0, h});
    }
    defs.push_back(
        {"decoder.deconv.weight", {d, 2, cfg.dec_kt, cfg.dec_kf}, 1, d * cfg.dec_kt * cfg.dec_kf});
    defs.push_back({"decoder.deconv.bias", {2}, 0, d * cfg.dec_kt * cfg.dec_kf});
    return defs;
}

std::vector<std::string> model_layers(const ModelConfig& cfg) {
    std::vector<std::string> layers;
    layers.push_back("encoder.conv");
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string p = "block." + std::to_string(b);
        layers.push_back(p + ".spectral.compress");
        layers.push_back(p + ".spectral.gru_fwd");
        layers.push_back(p + ".spectral.gru_bwd");
        layers.push_back(p + ".spectral.expand");
        layers.push_back(p + ".temporal.lstm");
        layers.push_back(p + ".temporal.proj");
    }
    layers.push_back("decoder.deconv");
    return layers;
}

std::string layer_of(const std::string& tensor_name) {
    const auto pos = tensor_name.rfind('.');
    return pos == std::string::npos ? tensor_name : tensor_name.substr(0, pos);
}

WeightStore random_init(const ModelConfig& cfg, int n_bins, uint64_t seed) {
    std::mt19937_64 rng(seed);
    // Draw uniforms by hand so every platform produces identical stores.
    auto uniform = [&rng]() {
        return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
    };
    WeightStore store;
    for (const TensorDef& def : model_tensor_defs(cfg, n_bins)) {
        Tensor t;
        t.shape = def.shape;
        t.channel_axis = def.channel_axis;
        t.f32.resize(static_cast<size_t>(t.count()));
        const double bound = 1.0 / std::sqrt(static_cast<double>(def.fan_in));
        for (float& v : t.f32) v = static_cast<float>((2.0 * uniform() - 1.0) * bound);
        store.tensors.emplace(def.name, std::move(t));
    }
    return store;
}

void check_store(const WeightStore& store, const ModelConfig& cfg, int n_bins) {
    const auto defs = model_tensor_defs(cfg, n_bins);
    if (store.tensors.size() != defs.size())
        throw std::invalid_argument("weight store has " + std::to_string(store.tensors.size()) +
                                    " tensors, model expects " + std::to_string(defs.size()));
    for (const TensorDef& def : defs) {
        const Tensor& t = store.at(def.name);
        if (t.shape != def.shape)
            throw std::invalid_argument("tensor '" + def.name + "' has unexpected shape");
        if (static_cast<int64_t>(t.f32.size()) != t.count())
            throw std::invalid_argument("tensor '" + def.name + "' payload size mismatch");
    }
}

}  // namespace naw
