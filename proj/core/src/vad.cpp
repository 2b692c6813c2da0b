#include "maglive/vad.hpp"

#include "maglive/error.hpp"

#include <algorithm>
#include <cmath>

namespace maglive::vad {

std::vector<VoiceSegment> detect_voice_segments(const AudioClip& audio, const VadParams& params) {
    validate(audio);
    if (audio.duration() < 0.1) throw ParameterError("audio shorter than 0.1 s");

    const auto mono = audio.downmix();
    const double rate = audio.sample_rate;
    const auto frame = static_cast<std::size_t>(std::lround(params.frame_s * rate));
    const auto hop = static_cast<std::size_t>(std::lround(params.hop_s * rate));
    if (frame == 0 || hop == 0 || mono.size() < frame) return {};

    const std::size_t n_frames = (mono.size() - frame) / hop + 1;
    std::vector<double> energy_db(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) {
        double sum = 0.0;
        for (std::size_t i = f * hop; i < f * hop + frame; ++i) sum += mono[i] * mono[i];
        energy_db[f] = 10.0 * std::log10(sum / static_cast<double>(frame) + 1e-12);
    }

    std::vector<double> sorted = energy_db;
    const auto rank = static_cast<std::size_t>(
        std::floor(params.floor_percentile / 100.0 * static_cast<double>(n_frames - 1)));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank), sorted.end());
    const double floor_db = sorted[rank];
    const double max_db = *std::max_element(energy_db.begin(), energy_db.end());
    if (max_db - floor_db < params.min_dynamic_range_db) return {};

    const double onset = floor_db + params.onset_db;
    const double offset = floor_db + params.offset_db;

    struct Run {
        std::size_t first, last;
        double peak;
    };
    std::vector<Run> runs;
    bool active = false;
    for (std::size_t f = 0; f < n_frames; ++f) {
        if (!active && energy_db[f] > onset) {
            active = true;
            runs.push_back({f, f, energy_db[f]});
        } else if (active && energy_db[f] < offset) {
            active = false;
        }
        if (active) {
            runs.back().last = f;
            runs.back().peak = std::max(runs.back().peak, energy_db[f]);
        }
    }

    const double frame_s = static_cast<double>(frame) / rate;
    const double hop_s = static_cast<double>(hop) / rate;
    std::vector<VoiceSegment> merged;
    for (const auto& r : runs) {
        VoiceSegment seg{static_cast<double>(r.first) * hop_s, static_cast<double>(r.last) * hop_s + frame_s,
                         r.peak - floor_db};
        if (!merged.empty() && seg.start - merged.back().end < params.merge_gap_s) {
            merged.back().end = seg.end;
            merged.back().peak_energy = std::max(merged.back().peak_energy, seg.peak_energy);
        } else {
            merged.push_back(seg);
        }
    }
    std::erase_if(merged, [&](const VoiceSegment& s) { return s.end - s.start < params.min_duration_s; });
    return merged;
}

std::vector<AlignedSegment> align_segments(const RecordingMeta& meta, const std::vector<VoiceSegment>& voice,
                                           const dsp::UniformSeries& net_mag) {
    constexpr std::size_t window = dsp::kSegmentLength;
    if (net_mag.size() < window)
        throw SegmentationError("trace has " + std::to_string(net_mag.size()) + " samples, need at least " +
                                std::to_string(window));
    const auto max_start = static_cast<long>(net_mag.size() - window);

    std::vector<AlignedSegment> out;
    out.reserve(voice.size());
    for (const auto& v : voice) {
        const long centre = std::lround(v.midpoint() * net_mag.rate);
        const long start = std::clamp(centre - static_cast<long>(window / 2), 0L, max_start);
        AlignedSegment seg;
        seg.window_start_index = static_cast<std::size_t>(start);
        seg.mag_window.assign(net_mag.values.begin() + start, net_mag.values.begin() + start + window);
        seg.voice = v;
        seg.source = meta;
        out.push_back(std::move(seg));
    }
    return out;
}

}  // namespace maglive::vad
