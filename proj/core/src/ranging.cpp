#include "maglive/ranging.hpp"

#include "maglive/error.hpp"
#include "fft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace maglive::ranging {

void RangingConfig::validate() const {
    if (!(mic_spacing > 0) || !(sound_speed > 0) || !(distance_threshold > 0) || !(energy_epsilon > 0))
        throw ParameterError("ranging configuration values must be positive");
    if (!(distance_threshold < 1.0)) throw ParameterError("distance threshold must be below 1 m");
}

double gcc_phat_tdoa(std::span<const double> ch1, std::span<const double> ch2, double rate, double max_lag) {
    if (ch1.size() != ch2.size()) throw ShapeError("channels differ in length");
    if (ch1.size() < 256) throw LengthError("GCC-PHAT needs at least 256 samples per channel");
    if (!(rate > 0) || !(max_lag >= 0)) throw ParameterError("invalid rate or max lag");
    const bool silent1 = std::all_of(ch1.begin(), ch1.end(), [](double v) { return v == 0.0; });
    const bool silent2 = std::all_of(ch2.begin(), ch2.end(), [](double v) { return v == 0.0; });
    if (silent1 || silent2) throw RangingError("no signal");

    std::size_t n = 1;
    while (n < 2 * ch1.size()) n <<= 1;
    std::vector<double> a(n, 0.0), b(n, 0.0);
    std::copy(ch1.begin(), ch1.end(), a.begin());
    std::copy(ch2.begin(), ch2.end(), b.begin());
    const auto fa = detail::rfft(a);
    const auto fb = detail::rfft(b);
    std::vector<std::complex<double>> cross(fa.size());
    for (std::size_t k = 0; k < fa.size(); ++k) {
        const auto c = fb[k] * std::conj(fa[k]);
        cross[k] = c / (std::abs(c) + 1e-12);
    }
    // corr[l] = sum_t ch2[t + l] * ch1[t], negative lags wrap to the end.
    const auto corr = detail::irfft(cross, n);

    const auto max_shift = std::min<long>(static_cast<long>(std::floor(max_lag * rate)),
                                          static_cast<long>(ch1.size()) - 1);
    long best_lag = 0;
    double best = corr[0];
    for (long lag = -max_shift; lag <= max_shift; ++lag) {
        const double v = corr[static_cast<std::size_t>(lag >= 0 ? lag : static_cast<long>(n) + lag)];
        if (v > best || (v == best && std::labs(lag) < std::labs(best_lag))) {
            best = v;
            best_lag = lag;
        }
    }
    return static_cast<double>(best_lag) / rate;
}

RangeEstimate estimate_distances(double tdoa, double e1, double e2, const RangingConfig& cfg) {
    cfg.validate();
    if (!(e1 > 0) || !(e2 > 0)) throw RangingError("channel energies must be positive");

    RangeEstimate est;
    est.tdoa = tdoa;
    est.e1 = e1;
    est.e2 = e2;
    est.delta_d = cfg.sound_speed * std::abs(tdoa);
    if (est.delta_d > cfg.mic_spacing * 1.1)
        throw RangingError("geometry error: path difference " + std::to_string(est.delta_d) +
                           " m exceeds microphone spacing");

    const bool first_near = e1 >= e2;
    const double root_near = std::sqrt(first_near ? e1 : e2);
    const double root_far = std::sqrt(first_near ? e2 : e1);
    if (root_near - root_far < cfg.energy_epsilon * root_near)
        throw RangingError("indeterminate range: channel energies are equal");

    const double d_far = root_near / (root_near - root_far) * est.delta_d;
    const double d_near = root_far / (root_near - root_far) * est.delta_d;
    est.d1 = first_near ? d_near : d_far;
    est.d2 = first_near ? d_far : d_near;
    est.gate_distance = std::min(est.d1, est.d2);
    est.passed = est.gate_distance <= cfg.distance_threshold;
    return est;
}

GateResult range_gate(const AudioClip& audio, const vad::VoiceSegment& voice, const RangingConfig& cfg) {
    validate(audio);
    GateResult result;
    if (audio.num_channels() != 2) {
        result.reason = "ranging unavailable: mono audio";
        return result;
    }
    const auto n = static_cast<long>(audio.num_frames());
    const long first = std::clamp(static_cast<long>(std::floor(voice.start * audio.sample_rate)), 0L, n);
    const long last = std::clamp(static_cast<long>(std::ceil(voice.end * audio.sample_rate)), first, n);
    std::span<const double> c1(audio.channels[0].data() + first, static_cast<std::size_t>(last - first));
    std::span<const double> c2(audio.channels[1].data() + first, static_cast<std::size_t>(last - first));

    // Mean-square energy; amplitude falls as 1/d, so this falls as 1/d^2.
    auto energy = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return x.empty() ? 0.0 : s / static_cast<double>(x.size());
    };
    const double max_lag = 1.1 * cfg.mic_spacing / cfg.sound_speed;
    const double tdoa = gcc_phat_tdoa(c1, c2, audio.sample_rate, max_lag);
    result.estimate = estimate_distances(tdoa, energy(c1), energy(c2), cfg);
    result.status = GateStatus::evaluated;
    result.reason = result.estimate->passed ? "within range" : "out of range";
    return result;
}

}  // namespace maglive::ranging
