#pragma once

#include <string>
#include <vector>

#include "naw/framing.hpp"

namespace naw {

enum class Activation { none, relu, tanh };

/// Hyperparameters of the dual-path enhancement network.
struct ModelConfig {
    int blocks = 6;       // dual-path blocks stacked between encoder and decoder
    int channels = 32;    // feature channels D
    int hidden = 32;      // recurrent hidden size H (per direction for the GRU)
    int freq_stride = 4;  // frequency compression factor of the spectral stage
    int enc_kt = 3, enc_kf = 3;  // encoder conv kernel (time, freq)
    int dec_kt = 3, dec_kf = 3;  // decoder transposed-conv kernel (time, freq)
    Activation activation = Activation::none;  // pointwise nonlinearity after convs

    // Compressed frequency length for n_bins input columns.
    int compressed_bins(int n_bins) const {
        return (n_bins + freq_stride - 1) / freq_stride;
    }
    int stft_cache_frames() const { return enc_kt - 1; }
    int deconv_cache_frames() const { return dec_kt - 1; }

    void validate() const;  // throws std::invalid_argument
};

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

}  // namespace naw
