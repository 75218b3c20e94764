#include "naw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "naw/fft.hpp"

namespace naw {

namespace {

void check_lengths(std::span<const float> a, std::span<const float> b, const char* what) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(what) + ": length mismatch (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    if (a.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
}

double clamp_db(double v) { return std::clamp(v, -kMetricCapDb, kMetricCapDb); }

}  // namespace

double sisdr(std::span<const float> est, std::span<const float> ref) {
    check_lengths(est, ref, "sisdr");
    double dot = 0.0, ref_energy = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        dot += static_cast<double>(est[i]) * ref[i];
        ref_energy += static_cast<double>(ref[i]) * ref[i];
    }
    if (ref_energy <= 0.0) throw std::invalid_argument("sisdr: all-zero reference");
    const double alpha = dot / ref_energy;
    const double target_energy = alpha * alpha * ref_energy;
    double residual_energy = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        const double e = static_cast<double>(est[i]) - alpha * ref[i];
        residual_energy += e * e;
    }
    return clamp_db(10.0 *
                    std::log10((target_energy + kMetricEps) / (residual_energy + kMetricEps)));
}

double sisdri(std::span<const float> est, std::span<const float> mix,
              std::span<const float> ref) {
    check_lengths(est, mix, "sisdri");
    return sisdr(est, ref) - sisdr(mix, ref);
}

double snr_db(std::span<const float> est, std::span<const float> ref) {
    check_lengths(est, ref, "snr_db");
    double ref_energy = 0.0, err_energy = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        ref_energy += static_cast<double>(ref[i]) * ref[i];
        const double e = static_cast<double>(ref[i]) - est[i];
        err_energy += e * e;
    }
    return clamp_db(10.0 * std::log10(ref_energy / (err_energy + kMetricEps)));
}

std::vector<StftResolution> default_mrstft_resolutions() {
    return {{512, 128}, {1024, 256}, {2048, 512}};
}

namespace {

// Periodic-Hann magnitude spectrogram, frames*bins row-major, no centering.
std::vector<double> magnitude_frames(std::span<const float> x, const StftResolution& res,
                                     RealFft& fft, size_t* n_frames_out) {
    const int n = res.fft_size;
    const int bins = n / 2 + 1;
    std::vector<double> window(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        window[static_cast<size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);

    const size_t n_frames = (x.size() - static_cast<size_t>(n)) / static_cast<size_t>(res.hop) + 1;
    std::vector<double> mags(n_frames * static_cast<size_t>(bins));
    std::vector<double> frame(static_cast<size_t>(n));
    std::vector<std::complex<double>> spec(static_cast<size_t>(bins));
    for (size_t t = 0; t < n_frames; ++t) {
        const size_t base = t * static_cast<size_t>(res.hop);
        for (int i = 0; i < n; ++i)
            frame[static_cast<size_t>(i)] =
                static_cast<double>(x[base + static_cast<size_t>(i)]) *
                window[static_cast<size_t>(i)];
        fft.forward(frame, spec);
        for (int f = 0; f < bins; ++f)
            mags[t * static_cast<size_t>(bins) + static_cast<size_t>(f)] =
                std::abs(spec[static_cast<size_t>(f)]);
    }
    *n_frames_out = n_frames;
    return mags;
}

}  // namespace

double mrstft_loss(std::span<const float> est, std::span<const float> ref,
                   std::span<const StftResolution> resolutions) {
    check_lengths(est, ref, "mrstft_loss");
    if (resolutions.empty()) throw std::invalid_argument("mrstft_loss: no resolutions");
    for (const auto& res : resolutions) {
        if (res.fft_size < 2 || res.hop < 1)
            throw std::invalid_argument("mrstft_loss: invalid resolution");
        if (est.size() < static_cast<size_t>(res.fft_size))
            throw std::invalid_argument("mrstft_loss: signal shorter than fft size " +
                                        std::to_string(res.fft_size));
    }
    double total = 0.0;
    for (const auto& res : resolutions) {
        RealFft fft(res.fft_size);
        size_t n_frames = 0;
        const std::vector<double> me = magnitude_frames(est, res, fft, &n_frames);
        const std::vector<double> mr = magnitude_frames(ref, res, fft, &n_frames);
        double diff_sq = 0.0, ref_sq = 0.0, log_l1 = 0.0;
        for (size_t i = 0; i < me.size(); ++i) {
            const double d = mr[i] - me[i];
            diff_sq += d * d;
            ref_sq += mr[i] * mr[i];
            log_l1 += std::abs(std::log(std::max(me[i], kMetricEps)) -
                               std::log(std::max(mr[i], kMetricEps)));
        }
        const double convergence = std::sqrt(diff_sq) / (std::sqrt(ref_sq) + kMetricEps);
        const double log_mag = log_l1 / static_cast<double>(me.size());
        total += convergence + log_mag;
    }
    return total / static_cast<double>(resolutions.size());
}

double mrstft_loss(std::span<const float> est, std::span<const float> ref) {
    const std::vector<StftResolution> res = default_mrstft_resolutions();
    return mrstft_loss(est, ref, res);
}

AlignedPair align_delay(std::span<const float> est, std::span<const float> ref, int delay) {
    if (delay < 0) throw std::invalid_argument("align_delay: negative delay");
    if (est.size() <= static_cast<size_t>(delay))
        throw std::invalid_argument("align_delay: estimate shorter than the delay");
    const size_t n = std::min(est.size() - static_cast<size_t>(delay), ref.size());
    AlignedPair out;
    out.est.assign(est.begin() + delay, est.begin() + delay + static_cast<long>(n));
    out.ref.assign(ref.begin(), ref.begin() + static_cast<long>(n));
    return out;
}

}  // namespace naw
