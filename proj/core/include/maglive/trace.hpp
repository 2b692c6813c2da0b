#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace maglive {

enum class Label { human, loudspeaker };

std::string to_string(Label label);
Label parse_label(const std::string& text);

// One magnetometer reading, microtesla.
struct MagSample {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

// Timestamped 3-axis magnetometer samples. Timestamps are seconds, strictly
// increasing, re-based so the first sample sits at t = 0 when loaded from disk.
struct SensorTrace {
    std::vector<double> timestamps;
    std::vector<MagSample> samples;
    double nominal_rate = 100.0;

    std::size_t size() const { return samples.size(); }
    double duration() const { return timestamps.empty() ? 0.0 : timestamps.back() - timestamps.front(); }
};

// Throws ValidationError when the trace breaks its invariants.
void validate(const SensorTrace& trace);

struct AudioClip {
    double sample_rate = 44100.0;
    std::vector<std::vector<double>> channels;  // [channel][sample], amplitudes in [-1, 1]

    std::size_t num_channels() const { return channels.size(); }
    std::size_t num_frames() const { return channels.empty() ? 0 : channels.front().size(); }
    double duration() const { return sample_rate > 0 ? static_cast<double>(num_frames()) / sample_rate : 0.0; }

    // Channel average; the mono channel itself for single-channel clips.
    std::vector<double> downmix() const;
};

void validate(const AudioClip& clip);

struct RecordingMeta {
    Label label = Label::human;
    std::string user_id;
    std::string device_id;
    std::string content_id;
    std::string command_id;
};

struct RecordingPair {
    SensorTrace trace;
    AudioClip audio;
    RecordingMeta meta;
};

struct ManifestEntry {
    std::filesystem::path trace_path;
    std::filesystem::path audio_path;
    RecordingMeta meta;
    std::optional<std::string> split;  // "train" / "test" when present
};

struct ManifestSummary {
    std::map<std::string, std::size_t> per_label;
    std::map<std::string, std::size_t> per_user;
    std::map<std::string, std::size_t> per_device;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    ManifestSummary summary;
};

// Trace CSV: header `t,mx,my,mz`, one reading per row.
SensorTrace load_trace(const std::filesystem::path& path);
void write_trace(const std::filesystem::path& path, const SensorTrace& trace);

// RIFF/WAV with 16-bit PCM samples, 1 or 2 channels.
AudioClip load_audio(const std::filesystem::path& path);
void write_audio(const std::filesystem::path& path, const AudioClip& clip);

// JSON lines; relative paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

RecordingPair load_pair(const ManifestEntry& entry);

}  // namespace maglive
