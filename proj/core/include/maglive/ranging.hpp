#pragma once

#include "maglive/trace.hpp"
#include "maglive/vad.hpp"

#include <optional>
#include <span>
#include <string>

namespace maglive::ranging {

struct RangingConfig {
    double mic_spacing = 0.15;         // m
    double sound_speed = 340.0;        // m/s
    double distance_threshold = 0.06;  // m
    double energy_epsilon = 1e-6;      // relative

    void validate() const;
};

struct RangeEstimate {
    double tdoa = 0.0;     // s, arrival at channel 2 minus arrival at channel 1
    double delta_d = 0.0;  // m
    double d1 = 0.0;       // distance to channel 1, m
    double d2 = 0.0;       // distance to channel 2, m
    double e1 = 0.0;       // RMS energies actually used
    double e2 = 0.0;
    double gate_distance = 0.0;
    bool passed = false;
};

// GCC-PHAT time delay between two equal-length channels, restricted to
// |lag| <= max_lag seconds. Positive when channel 2 receives the sound later.
double gcc_phat_tdoa(std::span<const double> ch1, std::span<const double> ch2, double rate, double max_lag);

// Energy-ratio ranging. The louder channel is the nearer microphone and
// E_near * d_near^2 = E_far * d_far^2 with d_far - d_near = sound_speed * |tdoa|.
RangeEstimate estimate_distances(double tdoa, double e1, double e2, const RangingConfig& cfg);

enum class GateStatus { evaluated, unavailable };

struct GateResult {
    GateStatus status = GateStatus::unavailable;
    std::optional<RangeEstimate> estimate;
    std::string reason;

    bool passed() const { return status == GateStatus::evaluated && estimate && estimate->passed; }
};

// Crop both channels to the voiced interval and range the source. Mono clips
// report GateStatus::unavailable.
GateResult range_gate(const AudioClip& audio, const vad::VoiceSegment& voice, const RangingConfig& cfg = {});

}  // namespace maglive::ranging
