#include "naw/model.hpp"

#include <stdexcept>

namespace naw {

void ModelConfig::validate() const {
    if (blocks < 1) throw std::invalid_argument("model needs at least one block");
    if (channels < 1 || hidden < 1) throw std::invalid_argument("channels/hidden must be >= 1");
    if (freq_stride < 1) throw std::invalid_argument("freq_stride must be >= 1");
    if (enc_kt < 1 || dec_kt < 1) throw std::invalid_argument("time kernels must be >= 1");
    if (enc_kf < 1 || enc_kf % 2 == 0 || dec_kf < 1 || dec_kf % 2 == 0)
        throw std::invalid_argument("frequency kernels must be odd and >= 1");
}

Activation activation_from_string(const std::string& s) {
    if (s == "none") return Activation::none;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::none: return "none";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "none";
}

}  // namespace naw
