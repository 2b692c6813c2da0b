#pragma once

#include "maglive/dsp.hpp"
#include "maglive/trace.hpp"

#include <cstddef>
#include <vector>

namespace maglive::vad {

struct VoiceSegment {
    double start = 0.0;  // seconds
    double end = 0.0;
    double peak_energy = 0.0;  // dB over the clip noise floor

    double midpoint() const { return 0.5 * (start + end); }
};

// Short-time log-energy detector with hysteresis. Thresholds are relative to
// the clip's own noise floor, so they do not depend on recording gain.
struct VadParams {
    double frame_s = 0.020;
    double hop_s = 0.010;
    double floor_percentile = 10.0;
    double onset_db = 12.0;
    double offset_db = 6.0;
    double merge_gap_s = 0.100;
    double min_duration_s = 0.080;
    double min_dynamic_range_db = 3.0;
};

std::vector<VoiceSegment> detect_voice_segments(const AudioClip& audio, const VadParams& params = {});

struct AlignedSegment {
    std::vector<double> mag_window;  // 100 net-magnitude samples at 100 Hz
    VoiceSegment voice;
    RecordingMeta source;
    std::size_t window_start_index = 0;
};

// One 100-sample window per voice segment, centred on its midpoint and shifted
// inward at the trace boundaries.
std::vector<AlignedSegment> align_segments(const RecordingMeta& meta, const std::vector<VoiceSegment>& voice,
                                           const dsp::UniformSeries& net_mag);

}  // namespace maglive::vad
