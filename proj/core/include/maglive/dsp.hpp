#pragma once

#include "maglive/trace.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

namespace maglive::dsp {

// Uniformly sampled series, e.g. one magnetometer axis or the net magnitude.
struct UniformSeries {
    double rate = 100.0;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

struct AxisSeries {
    UniformSeries x, y, z;
};

// Linear interpolation of every axis onto t0 + k / rate, k = 0 .. while <= t_end.
AxisSeries resample_uniform(const SensorTrace& trace, double rate);

// ---------------------------------------------------------------------------
// Butterworth design as second-order sections (direct form II transposed).

struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};

enum class FilterType { lowpass, highpass };

struct SosFilter {
    std::vector<Biquad> sections;

    // Complex frequency response magnitude at `freq` Hz for sample rate `rate`.
    double magnitude_at(double freq, double rate) const;
};

// Even orders only; the detector uses order 4.
SosFilter butterworth(int order, double cutoff, double rate, FilterType type);

// Causal filtering with optional steady-state initial conditions scaled by x[0].
std::vector<double> sosfilt(const SosFilter& filter, const std::vector<double>& x, bool steady_state_init);

// Zero-phase forward-backward filtering with odd (point-reflected) padding of
// 3 * order samples at each end.
std::vector<double> filtfilt(const SosFilter& filter, int order, const std::vector<double>& x);

inline constexpr int kFilterOrder = 4;
inline constexpr double kHighpassCutoff = 5.0;

// 4th-order zero-phase Butterworth high-pass. Throws ParameterError when the
// cutoff is not below Nyquist and LengthError for series shorter than 12 samples.
UniformSeries highpass(const UniformSeries& series, double cutoff = kHighpassCutoff);

// sqrt(x^2 + y^2 + z^2) per sample.
UniformSeries net_magnitude(const UniformSeries& x, const UniformSeries& y, const UniformSeries& z);

// Resample to 100 Hz, high-pass every axis, then aggregate.
UniformSeries preprocess_trace(const SensorTrace& trace, double rate = 100.0, double cutoff = kHighpassCutoff);

// ---------------------------------------------------------------------------
// Model inputs

inline constexpr std::size_t kSegmentLength = 100;
inline constexpr std::size_t kStftWindow = 32;
inline constexpr std::size_t kStftBins = kStftWindow / 2 + 1;                 // 17
inline constexpr std::size_t kStftFrames = kSegmentLength - kStftWindow + 1;  // 69
inline constexpr std::size_t kSpectrogramSize = kStftBins * kStftFrames * 2;

struct ChannelStats {
    double mean = 0.0;
    double stddev = 1.0;
};

struct FeatureTensor {
    std::vector<double> envelope;     // (100)
    std::vector<double> spectrogram;  // (17, 69, 2) row-major; channel 0 log-magnitude, 1 phase
    struct {
        ChannelStats envelope, magnitude, phase;
    } stats;

    double& spec(std::size_t bin, std::size_t frame, std::size_t channel) {
        return spectrogram[(bin * kStftFrames + frame) * 2 + channel];
    }
    double spec(std::size_t bin, std::size_t frame, std::size_t channel) const {
        return spectrogram[(bin * kStftFrames + frame) * 2 + channel];
    }
};

// Magnitude of the FFT-built analytic signal.
std::vector<double> envelope(const UniformSeries& segment);

// Hann window 32, hop 1, one-sided: (17, 69, 2) with log(1 + |X|) and phase.
std::vector<double> stft_features(const UniformSeries& segment);

// Independent per-channel z-score; channels with variance < 1e-12 are only centered.
FeatureTensor normalize(const FeatureTensor& tensor);

// envelope + stft_features + normalize for one 100-sample window.
FeatureTensor make_features(const UniformSeries& segment);

// Flat little-endian float32 dump: 16-byte header, envelope, magnitude plane, phase plane.
void write_feature_dump(const std::filesystem::path& path, const FeatureTensor& tensor);
FeatureTensor read_feature_dump(const std::filesystem::path& path);

}  // namespace maglive::dsp
