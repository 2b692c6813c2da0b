#pragma once

#include "maglive/dsp.hpp"
#include "maglive/trace.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace maglive::synth {

// Loudspeaker magnetic coupling. The disturbance amplitude at distance d is
// coil_gain / d^falloff_exponent microtesla, carried on a band-limited
// (carrier_low .. carrier_high Hz) tone mix modulated by the audio envelope.
struct DeviceProfile {
    std::string name = "default";
    double coil_gain = 3.84e-5;  // uT * m^3: 0.6 uT at 4 cm
    double falloff_exponent = 3.0;
    double drift_rate = 0.02;  // uT/s
    double carrier_low = 8.0;
    double carrier_high = 30.0;

    void validate() const;
};

// Per-user handling noise: slow wander plus a small physiological tremor.
struct UserProfile {
    std::string name = "user";
    double wander_amplitude = 0.8;  // uT
    double wander_corner_hz = 1.0;
    double tremor_hz = 9.0;
    double tremor_amplitude = 0.012;  // uT
};

std::vector<DeviceProfile> default_devices();
UserProfile make_user(const std::string& name, std::uint64_t seed);

enum class SourceKind { human, loudspeaker };

struct WordPlan {
    double duration = 0.4;  // s
    double gap = 0.4;       // silence after the word, s
};

struct SceneConfig {
    SourceKind source = SourceKind::human;
    DeviceProfile device;  // coupling is ignored for human scenes
    UserProfile user;
    double distance = 0.04;     // source to nearest microphone, m
    double mic_spacing = 0.15;  // m
    std::vector<WordPlan> words{{0.4, 0.4}, {0.35, 0.4}, {0.45, 0.4}};
    double lead_in = 0.6;  // s
    double tail = 0.4;     // s
    double mag_noise_sigma = 0.05;  // uT per axis
    double audio_snr_db = 30.0;
    double source_amplitude = 0.25;  // word RMS at the nearest microphone
    std::array<double, 3> earth_field{22.0, -4.0, 41.0};  // uT
    double audio_rate = 44100.0;
    double mag_rate = 100.0;
    double timestamp_jitter = 0.001;  // s, uniform +-
    bool stereo = true;
    std::uint64_t seed = 1;

    void validate() const;
};

struct GroundTruth {
    std::vector<std::pair<double, double>> words;  // [start, end) seconds
    double d_near = 0.0;
    double d_far = 0.0;
    double tdoa = 0.0;          // arrival(far) - arrival(near), s
    double energy_ratio = 1.0;  // E_near / E_far of the clean source
    double coupling_amplitude = 0.0;  // uT at the phone, 0 for humans
    std::array<double, 3> coupling_axis{1.0, 0.0, 0.0};
};

struct Scene {
    RecordingPair pair;
    GroundTruth truth;
};

// Paired audio + magnetometer recording. Only loudspeaker scenes with a
// non-zero coil gain carry an audio-correlated magnetic term.
Scene gen_pair(const SceneConfig& cfg);

// Two-microphone capture of the scene's source; channel 0 is the near mic.
struct StereoScene {
    AudioClip audio;
    GroundTruth truth;
};
StereoScene gen_stereo_audio(const SceneConfig& cfg);

// Pearson correlation between the smoothed net high-passed magnetometer
// magnitude and the 100 Hz audio envelope, over samples within 0.5 s of a word.
double magnetic_envelope_correlation(const Scene& scene);

// Jittered sampling instants: k / rate + U(-jitter, jitter), strictly increasing.
std::vector<double> jittered_timestamps(std::size_t count, double rate, double jitter, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Corpus generation

struct CorpusSpec {
    std::vector<std::string> users;
    std::vector<DeviceProfile> devices;  // defaults when empty
    std::vector<SourceKind> labels{SourceKind::human, SourceKind::loudspeaker};
    std::size_t commands = 5;
    double audio_rate = 16000.0;
    bool stereo = false;
    double mag_noise_sigma = 0.05;
    double audio_snr_db = 30.0;
    double distance_min = 0.02;
    double distance_max = 0.06;
    std::vector<std::string> train_users;
    std::vector<std::string> test_users;
    std::optional<std::string> holdout_device;  // excluded from training

    static CorpusSpec from_json_file(const std::filesystem::path& path);
    void validate() const;
};

struct CorpusEntry {
    SceneConfig config;
    RecordingMeta meta;
    std::optional<std::string> split;
};

// Scene seeds: splitmix64(master_seed ^ fnv1a64("label/user/device/command")).
std::uint64_t entry_seed(std::uint64_t master_seed, const std::string& key);

// Deterministic plan of every recording in the corpus, in manifest order.
std::vector<CorpusEntry> plan_corpus(const CorpusSpec& spec, std::uint64_t master_seed);

// Writes traces/, audio/ and manifest.jsonl under `out_dir`; returns the manifest path.
std::filesystem::path gen_dataset(const CorpusSpec& spec, std::uint64_t master_seed,
                                  const std::filesystem::path& out_dir);

}  // namespace maglive::synth
