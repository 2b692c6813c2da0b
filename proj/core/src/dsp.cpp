#include "maglive/dsp.hpp"

#include "maglive/error.hpp"
#include "fft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

namespace maglive::dsp {

namespace {

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw DataError(std::string(what) + " contains a non-finite value");
}

}  // namespace

AxisSeries resample_uniform(const SensorTrace& trace, double rate) {
    if (!(rate > 0)) throw ParameterError("resample rate must be positive");
    validate(trace);
    const double t0 = trace.timestamps.front();
    const double span = trace.timestamps.back() - t0;
    const auto count = static_cast<std::size_t>(std::floor(span * rate + 1e-9)) + 1;

    AxisSeries out;
    for (auto* s : {&out.x, &out.y, &out.z}) {
        s->rate = rate;
        s->values.resize(count);
    }
    std::size_t j = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const double t = t0 + static_cast<double>(k) / rate;
        while (j + 2 < trace.size() && trace.timestamps[j + 1] < t) ++j;
        const double ta = trace.timestamps[j];
        const double tb = trace.timestamps[j + 1];
        const double w = std::clamp((t - ta) / (tb - ta), 0.0, 1.0);
        const auto& a = trace.samples[j];
        const auto& b = trace.samples[j + 1];
        out.x.values[k] = a.x + w * (b.x - a.x);
        out.y.values[k] = a.y + w * (b.y - a.y);
        out.z.values[k] = a.z + w * (b.z - a.z);
    }
    return out;
}

// ---------------------------------------------------------------------------

double SosFilter::magnitude_at(double freq, double rate) const {
    const std::complex<double> z = std::polar(1.0, 2.0 * std::numbers::pi * freq / rate);
    const std::complex<double> zi = 1.0 / z;
    std::complex<double> h = 1.0;
    for (const auto& s : sections) {
        h *= (s.b[0] + s.b[1] * zi + s.b[2] * zi * zi) / (s.a[0] + s.a[1] * zi + s.a[2] * zi * zi);
    }
    return std::abs(h);
}

SosFilter butterworth(int order, double cutoff, double rate, FilterType type) {
    if (order <= 0 || order % 2 != 0) throw ParameterError("butterworth order must be positive and even");
    if (!(rate > 0)) throw ParameterError("sample rate must be positive");
    if (!(cutoff > 0) || !(cutoff < rate / 2)) throw ParameterError("cutoff must lie in (0, Nyquist)");

    // Bilinear transform with frequency prewarping.
    const double fs2 = 2.0 * rate;
    const double warped = fs2 * std::tan(std::numbers::pi * cutoff / rate);

    SosFilter filter;
    for (int k = 0; k < order / 2; ++k) {
        // Upper-half-plane pole of the normalized analog prototype.
        const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
        const std::complex<double> proto = std::polar(1.0, theta);
        const std::complex<double> analog = type == FilterType::lowpass ? warped * proto : warped / proto;
        const std::complex<double> p = (fs2 + analog) / (fs2 - analog);

        Biquad s;
        s.a = {1.0, -2.0 * p.real(), std::norm(p)};
        if (type == FilterType::lowpass) {
            const double gain = (s.a[0] + s.a[1] + s.a[2]) / 4.0;  // unit gain at DC
            s.b = {gain, 2.0 * gain, gain};
        } else {
            const double gain = (s.a[0] - s.a[1] + s.a[2]) / 4.0;  // unit gain at Nyquist
            s.b = {gain, -2.0 * gain, gain};
        }
        filter.sections.push_back(s);
    }
    return filter;
}

namespace {

// Per-section steady-state state for a unit step at the filter input.
std::vector<std::array<double, 2>> steady_state(const SosFilter& filter) {
    std::vector<std::array<double, 2>> zi;
    double scale = 1.0;
    for (const auto& s : filter.sections) {
        const double dc = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
        const double z1 = s.b[2] - s.a[2] * dc;
        const double z0 = s.b[1] - s.a[1] * dc + z1;
        zi.push_back({z0 * scale, z1 * scale});
        scale *= dc;
    }
    return zi;
}

}  // namespace

std::vector<double> sosfilt(const SosFilter& filter, const std::vector<double>& x, bool steady_state_init) {
    std::vector<double> y(x);
    std::vector<std::array<double, 2>> state(filter.sections.size(), {0.0, 0.0});
    if (steady_state_init && !x.empty()) {
        state = steady_state(filter);
        for (auto& z : state) {
            z[0] *= x.front();
            z[1] *= x.front();
        }
    }
    for (std::size_t k = 0; k < filter.sections.size(); ++k) {
        const auto& s = filter.sections[k];
        double z0 = state[k][0], z1 = state[k][1];
        for (double& v : y) {
            const double in = v;
            const double out = s.b[0] * in + z0;
            z0 = s.b[1] * in - s.a[1] * out + z1;
            z1 = s.b[2] * in - s.a[2] * out;
            v = out;
        }
    }
    return y;
}

std::vector<double> filtfilt(const SosFilter& filter, int order, const std::vector<double>& x) {
    const std::size_t min_len = static_cast<std::size_t>(3 * order);
    if (x.size() < min_len)
        throw LengthError("series of length " + std::to_string(x.size()) + " is shorter than " +
                          std::to_string(min_len) + " samples");
    const std::size_t pad = std::min(min_len, x.size() - 1);
    const std::size_t n = x.size();

    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[n - 1 - i]);

    auto forward = sosfilt(filter, ext, true);
    std::reverse(forward.begin(), forward.end());
    auto backward = sosfilt(filter, forward, true);
    std::reverse(backward.begin(), backward.end());
    return {backward.begin() + static_cast<std::ptrdiff_t>(pad),
            backward.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

UniformSeries highpass(const UniformSeries& series, double cutoff) {
    if (!(series.rate > 0)) throw ParameterError("series rate must be positive");
    if (!(cutoff < series.rate / 2))
        throw ParameterError("cutoff " + std::to_string(cutoff) + " Hz is not below Nyquist");
    check_finite(series.values, "series");
    const auto filter = butterworth(kFilterOrder, cutoff, series.rate, FilterType::highpass);
    return {series.rate, filtfilt(filter, kFilterOrder, series.values)};
}

UniformSeries net_magnitude(const UniformSeries& x, const UniformSeries& y, const UniformSeries& z) {
    if (x.size() != y.size() || x.size() != z.size()) throw ShapeError("axis series differ in length");
    if (x.rate != y.rate || x.rate != z.rate) throw ShapeError("axis series differ in rate");
    UniformSeries out{x.rate, std::vector<double>(x.size())};
    for (std::size_t i = 0; i < x.size(); ++i)
        out.values[i] = std::sqrt(x.values[i] * x.values[i] + y.values[i] * y.values[i] + z.values[i] * z.values[i]);
    return out;
}

UniformSeries preprocess_trace(const SensorTrace& trace, double rate, double cutoff) {
    const auto axes = resample_uniform(trace, rate);
    return net_magnitude(highpass(axes.x, cutoff), highpass(axes.y, cutoff), highpass(axes.z, cutoff));
}

// ---------------------------------------------------------------------------

std::vector<double> envelope(const UniformSeries& segment) {
    const std::size_t n = segment.size();
    if (n != kSegmentLength)
        throw ShapeError("envelope expects " + std::to_string(kSegmentLength) + " samples, got " + std::to_string(n));
    std::vector<std::complex<double>> x(segment.values.begin(), segment.values.end());
    auto spectrum = detail::fft(x);
    // Analytic signal: keep DC and Nyquist, double positive frequencies, drop negative ones.
    for (std::size_t k = 1; k < n; ++k) {
        if (k < (n + 1) / 2)
            spectrum[k] *= 2.0;
        else if (!(n % 2 == 0 && k == n / 2))
            spectrum[k] = 0.0;
    }
    const auto analytic = detail::ifft(spectrum);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(analytic[i]);
    return out;
}

std::vector<double> stft_features(const UniformSeries& segment) {
    if (segment.size() != kSegmentLength)
        throw ShapeError("stft expects " + std::to_string(kSegmentLength) + " samples, got " +
                         std::to_string(segment.size()));
    std::array<double, kStftWindow> window{};
    for (std::size_t i = 0; i < kStftWindow; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / kStftWindow);

    std::vector<double> frames(kStftFrames * kStftWindow);
    for (std::size_t t = 0; t < kStftFrames; ++t)
        for (std::size_t i = 0; i < kStftWindow; ++i) frames[t * kStftWindow + i] = segment.values[t + i] * window[i];
    const auto bins = detail::rfft_many(frames, kStftWindow, kStftFrames);

    std::vector<double> out(kSpectrogramSize);
    for (std::size_t t = 0; t < kStftFrames; ++t)
        for (std::size_t f = 0; f < kStftBins; ++f) {
            const auto x = bins[t * kStftBins + f];
            out[(f * kStftFrames + t) * 2 + 0] = std::log1p(std::abs(x));
            out[(f * kStftFrames + t) * 2 + 1] = std::arg(x);
        }
    return out;
}

namespace {

ChannelStats standardize(std::vector<double>& v, std::size_t offset, std::size_t stride) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = offset; i < v.size(); i += stride, ++count) sum += v[i];
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t i = offset; i < v.size(); i += stride) sq += (v[i] - mean) * (v[i] - mean);
    const double var = sq / static_cast<double>(count);
    ChannelStats stats{mean, 1.0};
    if (var < 1e-12) {
        // Constant channel: exact zeros, not rounding residue around the mean.
        for (std::size_t i = offset; i < v.size(); i += stride) v[i] = 0.0;
        return stats;
    }
    stats.stddev = std::sqrt(var);
    for (std::size_t i = offset; i < v.size(); i += stride) v[i] = (v[i] - mean) / stats.stddev;
    return stats;
}

}  // namespace

FeatureTensor normalize(const FeatureTensor& tensor) {
    if (tensor.envelope.size() != kSegmentLength || tensor.spectrogram.size() != kSpectrogramSize)
        throw ShapeError("feature tensor has wrong shape");
    check_finite(tensor.envelope, "envelope");
    check_finite(tensor.spectrogram, "spectrogram");
    FeatureTensor out = tensor;
    out.stats.envelope = standardize(out.envelope, 0, 1);
    out.stats.magnitude = standardize(out.spectrogram, 0, 2);
    out.stats.phase = standardize(out.spectrogram, 1, 2);
    return out;
}

FeatureTensor make_features(const UniformSeries& segment) {
    FeatureTensor raw;
    raw.envelope = envelope(segment);
    raw.spectrogram = stft_features(segment);
    return normalize(raw);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kDumpMagic[4] = {'M', 'L', 'F', 'T'};
constexpr std::uint32_t kDumpVersion = 1;
constexpr std::uint32_t kDumpFloats = kSegmentLength + kSpectrogramSize;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double v) {
    const auto f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

double get_f32(const unsigned char* p) {
    const std::uint32_t bits = get_u32(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

void write_feature_dump(const std::filesystem::path& path, const FeatureTensor& tensor) {
    if (tensor.envelope.size() != kSegmentLength || tensor.spectrogram.size() != kSpectrogramSize)
        throw ShapeError("feature tensor has wrong shape");
    std::string out(kDumpMagic, 4);
    put_u32(out, kDumpVersion);
    put_u32(out, kDumpFloats);
    put_u32(out, 0);
    for (double v : tensor.envelope) put_f32(out, v);
    for (std::size_t ch = 0; ch < 2; ++ch)
        for (std::size_t f = 0; f < kStftBins; ++f)
            for (std::size_t t = 0; t < kStftFrames; ++t) put_f32(out, tensor.spec(f, t, ch));
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ResolutionError("cannot write feature dump " + path.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

FeatureTensor read_feature_dump(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ResolutionError("cannot open feature dump " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    if (bytes.size() != 16 + 4 * std::size_t{kDumpFloats} || std::memcmp(bytes.data(), kDumpMagic, 4) != 0 ||
        get_u32(&bytes[4]) != kDumpVersion || get_u32(&bytes[8]) != kDumpFloats)
        throw FormatError(path.string() + ": not a version-1 feature dump");
    FeatureTensor t;
    t.envelope.resize(kSegmentLength);
    t.spectrogram.resize(kSpectrogramSize);
    const unsigned char* p = bytes.data() + 16;
    for (double& v : t.envelope) {
        v = get_f32(p);
        p += 4;
    }
    for (std::size_t ch = 0; ch < 2; ++ch)
        for (std::size_t f = 0; f < kStftBins; ++f)
            for (std::size_t tt = 0; tt < kStftFrames; ++tt) {
                t.spec(f, tt, ch) = get_f32(p);
                p += 4;
            }
    return t;
}

}  // namespace maglive::dsp
