#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "naw/fft.hpp"
#include "naw/signalgen.hpp"

using namespace naw;

namespace {

double mean_of(const std::vector<float>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<float>& v) {
    const double m = mean_of(v);
    double acc = 0.0;
    for (float x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

// Log-log slope of the periodogram between bins [lo, hi): a power law
// 1/f^e shows up as slope -e. Averaging eight independent realizations
// keeps the regression noise well under the +-0.3 acceptance band.
double psd_slope(int exponent, uint64_t seed) {
    const size_t n = 8192;
    RealFft fft(static_cast<int>(n));
    const size_t bins = n / 2 + 1;
    std::vector<double> power(bins, 0.0);
    std::vector<std::complex<float>> spec(bins);
    for (int rep = 0; rep < 8; ++rep) {
        const std::vector<float> x = colored_noise(n, exponent, 1.0, seed + static_cast<uint64_t>(rep));
        fft.forward(x, spec);
        for (size_t k = 0; k < bins; ++k) power[k] += std::norm(spec[k]);
    }
    const size_t lo = 8, hi = n / 8;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
    for (size_t k = lo; k < hi; ++k) {
        const double lx = std::log10(static_cast<double>(k));
        const double ly = std::log10(power[k] + 1e-30);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        cnt += 1;
    }
    return (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
}

}  // namespace

TEST_CASE("white noise is seeded, sized and scaled as requested") {
    const std::vector<float> a = white_noise(20000, 0.25, 1);
    const std::vector<float> b = white_noise(20000, 0.25, 1);
    const std::vector<float> c = white_noise(20000, 0.25, 2);
    CHECK(a.size() == 20000);
    CHECK(a == b);
    CHECK(a != c);
    CHECK(std::abs(mean_of(a)) < 0.01);                  // ~4 sigma/sqrt(n)
    CHECK(std_of(a) == doctest::Approx(0.25).epsilon(0.03));

    CHECK_THROWS_AS(white_noise(0, 1.0, 3), std::invalid_argument);
    CHECK_THROWS_AS(white_noise(16, -1.0, 3), std::invalid_argument);
}

TEST_CASE("colored noise is zero-mean with an exact sample scale") {
    for (int e : {1, 2}) {
        const std::vector<float> x = colored_noise(16384, e, 0.5, 5);
        CAPTURE(e);
        CHECK(std::abs(mean_of(x)) <= 1e-3 * 0.5);
        CHECK(std_of(x) == doctest::Approx(0.5).epsilon(1e-4));
    }
    CHECK_THROWS_AS(colored_noise(1024, 3, 1.0, 5), std::invalid_argument);
    CHECK_THROWS_AS(colored_noise(1, 1, 1.0, 5), std::invalid_argument);
}

TEST_CASE("pink and brown noise follow their power-law spectra") {
    const double pink = psd_slope(1, 7);
    const double brown = psd_slope(2, 9);
    CHECK(pink == doctest::Approx(-1.0).epsilon(0.25));
    CHECK(brown == doctest::Approx(-2.0).epsilon(0.15));
    CHECK(pink > brown + 0.5);  // clearly distinct laws
}

TEST_CASE("fir convolution matches the definition and keeps the length") {
    const std::vector<float> x{1.0f, 2.0f, -1.0f, 0.5f, 3.0f};
    const std::vector<float> ir{0.5f, -0.25f, 1.0f};
    const std::vector<float> y = fir_convolve(x, ir);
    REQUIRE(y.size() == x.size());
    for (size_t n = 0; n < y.size(); ++n) {
        double acc = 0.0;
        for (size_t k = 0; k < ir.size(); ++k)
            if (n >= k) acc += double(ir[k]) * x[n - k];
        CHECK(y[n] == doctest::Approx(acc));
    }

    // Identity and pure-delay kernels act exactly as expected.
    CHECK(fir_convolve(x, std::vector<float>{1.0f}) == x);
    const std::vector<float> delayed = fir_convolve(x, std::vector<float>{0.0f, 0.0f, 1.0f});
    for (size_t n = 0; n < x.size(); ++n)
        CHECK(delayed[n] == (n >= 2 ? x[n - 2] : 0.0f));
    CHECK_THROWS_AS(fir_convolve(x, std::vector<float>{}), std::invalid_argument);
}

TEST_CASE("mixing hits the requested snr exactly") {
    const std::vector<float> speech = colored_noise(8000, 1, 0.4, 11);
    const std::vector<float> noise = white_noise(8000, 1.7, 13);
    for (double target : {-5.0, 0.0, 12.5, 40.0}) {
        const MixResult r = mix(speech, noise, target);
        REQUIRE(r.mixture.size() == speech.size());
        double es = 0.0, en = 0.0;
        for (size_t i = 0; i < speech.size(); ++i) {
            es += double(speech[i]) * speech[i];
            en += double(r.scaled_noise[i]) * r.scaled_noise[i];
            // The mixture is summed at double precision before the final
            // rounding, so reconstructing it from the rounded noise may
            // differ by one ulp.
            const float sum = speech[i] + r.scaled_noise[i];
            CHECK(std::abs(r.mixture[i] - sum) <= 2e-7f * std::max(1.0f, std::abs(sum)));
        }
        CHECK(10.0 * std::log10(es / en) == doctest::Approx(target).epsilon(1e-6));
    }

    const MixResult clean = mix(speech, noise, std::numeric_limits<double>::infinity());
    CHECK(clean.mixture == speech);
    for (float v : clean.scaled_noise) CHECK(v == 0.0f);

    CHECK_THROWS_AS(mix(speech, std::vector<float>(10, 0.1f), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(mix(std::vector<float>(8000, 0.0f), noise, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(mix(speech, std::vector<float>(8000, 0.0f), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(mix(speech, noise, -std::numeric_limits<double>::infinity()),
                    std::invalid_argument);
}

TEST_CASE("unit-factor resampling is the identity") {
    const std::vector<float> x = white_noise(3000, 0.3, 17);
    const std::vector<float> y = speed_perturb(x, 1.0);
    REQUIRE(y.size() == x.size());
    float worst = 0.0f;
    for (size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(y[i] - x[i]));
    CHECK(worst <= 1e-5f);
}

TEST_CASE("resampling scales the length and shifts tones by the factor") {
    const size_t n = 8000;
    std::vector<float> tone(n);
    const double w = 2.0 * M_PI * 440.0 / 16000.0;
    for (size_t i = 0; i < n; ++i) tone[i] = static_cast<float>(std::sin(w * static_cast<double>(i)));

    const double factor = 1.1;
    const std::vector<float> y = speed_perturb(tone, factor);
    CHECK(y.size() == static_cast<size_t>(std::llround(static_cast<double>(n) / factor)));

    // Away from the edges the output tracks sin(w * factor * i): the source
    // tone evaluated at the stretched positions.
    float worst = 0.0f;
    for (size_t i = 100; i + 100 < y.size(); ++i) {
        const float expect = static_cast<float>(std::sin(w * factor * static_cast<double>(i)));
        worst = std::max(worst, std::abs(y[i] - expect));
    }
    CHECK(worst <= 5e-3f);

    CHECK_THROWS_AS(speed_perturb(tone, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(speed_perturb(tone, 1.5), std::invalid_argument);
}
