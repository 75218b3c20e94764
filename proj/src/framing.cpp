#include "naw/framing.hpp"

#include <stdexcept>
#include <string>

namespace naw {

void FramingConfig::validate() const {
    if (sample_rate != kSampleRate) {
        throw std::invalid_argument("unsupported sample rate " + std::to_string(sample_rate) +
                                    " Hz (engine runs at 16000 Hz, no resampling)");
    }
    if (chunk < 1 || lookback < 0 || lookahead < 0) {
        throw std::invalid_argument("framing sizes must be positive (chunk) / non-negative");
    }
    if (chunk <= lookahead) {
        throw std::invalid_argument("chunk (" + std::to_string(chunk) +
                                    ") must exceed lookahead (" + std::to_string(lookahead) +
                                    ") for the synthesis window to exist");
    }
}

}  // namespace naw
