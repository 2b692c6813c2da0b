#include "maglive/synth.hpp"

#include "maglive/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace maglive::synth {

namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

// Portable generator: raw 64-bit draws mapped to doubles by hand so streams do
// not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * pi * u2);
    }
    std::array<double, 3> unit_vector() {
        std::array<double, 3> v{};
        double n = 0.0;
        while (n < 1e-6) {
            for (double& c : v) c = gaussian();
            n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        }
        for (double& c : v) c /= n;
        return v;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr double kSoundSpeed = 340.0;

struct Source {
    std::vector<double> signal;        // clean mono source at the audio rate
    std::vector<double> envelope_100;  // smoothed word envelope, ~1 inside words
    std::vector<std::pair<double, double>> words;
    double duration = 0.0;
};

Source make_source(const SceneConfig& cfg, Rng& rng) {
    Source src;
    double t = cfg.lead_in;
    for (const auto& w : cfg.words) {
        src.words.emplace_back(t, t + w.duration);
        t += w.duration + w.gap;
    }
    src.duration = t + cfg.tail;

    const double rate = cfg.audio_rate;
    const auto n = static_cast<std::size_t>(std::ceil(src.duration * rate));
    src.signal.assign(n, 0.0);
    const double ramp = 0.02;
    for (const auto& [start, end] : src.words) {
        const auto first = static_cast<std::size_t>(std::lround(start * rate));
        const auto last = std::min(n, static_cast<std::size_t>(std::lround(end * rate)));
        const double syllable_hz = rng.uniform(3.0, 5.0);
        const double phase = rng.uniform(0.0, 2.0 * pi);
        double lp = 0.0, prev = 0.0;
        double energy = 0.0;
        for (std::size_t i = first; i < last; ++i) {
            // Low-passed, slightly de-emphasized noise: a crude speech-like tilt.
            const double white = rng.gaussian();
            lp = 0.85 * lp + white;
            const double shaped = lp - 0.5 * prev;
            prev = lp;
            const double tt = static_cast<double>(i) / rate;
            const double attack = std::min({1.0, (tt - start) / ramp, (end - tt) / ramp});
            const double gate = attack <= 0 ? 0.0 : 0.5 - 0.5 * std::cos(pi * attack);
            const double syllabic = 0.75 + 0.25 * std::sin(2.0 * pi * syllable_hz * tt + phase);
            src.signal[i] = shaped * gate * syllabic;
            energy += src.signal[i] * src.signal[i];
        }
        const double rms = last > first ? std::sqrt(energy / static_cast<double>(last - first)) : 0.0;
        if (rms > 0)
            for (std::size_t i = first; i < last; ++i) src.signal[i] *= cfg.source_amplitude / rms;
    }

    // 10 ms RMS frames centred on k / 100 s, smoothed over three frames.
    const auto frames = static_cast<std::size_t>(std::floor(src.duration * 100.0)) + 1;
    const auto half = static_cast<long>(std::lround(0.005 * rate));
    std::vector<double> raw(frames, 0.0);
    for (std::size_t k = 0; k < frames; ++k) {
        const long centre = std::lround(static_cast<double>(k) / 100.0 * rate);
        double e = 0.0;
        long count = 0;
        for (long i = centre - half; i < centre + half; ++i) {
            if (i < 0 || i >= static_cast<long>(n)) continue;
            e += src.signal[static_cast<std::size_t>(i)] * src.signal[static_cast<std::size_t>(i)];
            ++count;
        }
        raw[k] = count ? std::sqrt(e / static_cast<double>(count)) / cfg.source_amplitude : 0.0;
    }
    src.envelope_100.resize(frames);
    for (std::size_t k = 0; k < frames; ++k) {
        const double a = raw[k > 0 ? k - 1 : k], b = raw[k], c = raw[k + 1 < frames ? k + 1 : k];
        src.envelope_100[k] = (a + b + c) / 3.0;
    }
    return src;
}

// Band-limited fractional delay (Blackman-windowed sinc, 64 taps).
std::vector<double> delayed(const std::vector<double>& x, double delay_samples, double gain) {
    constexpr int half = 32;
    std::vector<double> out(x.size(), 0.0);
    const auto n = static_cast<long>(x.size());
    for (long i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) - delay_samples;
        const long base = static_cast<long>(std::floor(pos));
        double acc = 0.0;
        for (long m = base - half + 1; m <= base + half; ++m) {
            if (m < 0 || m >= n) continue;
            const double u = pos - static_cast<double>(m);
            const double sinc = u == 0.0 ? 1.0 : std::sin(pi * u) / (pi * u);
            const double w = 0.42 + 0.5 * std::cos(pi * u / half) + 0.08 * std::cos(2.0 * pi * u / half);
            acc += x[static_cast<std::size_t>(m)] * sinc * w;
        }
        out[static_cast<std::size_t>(i)] = acc * gain;
    }
    return out;
}

AudioClip capture_audio(const SceneConfig& cfg, const Source& src, Rng& rng, GroundTruth& truth) {
    truth.d_near = cfg.distance;
    truth.d_far = cfg.distance + cfg.mic_spacing;
    truth.tdoa = cfg.mic_spacing / kSoundSpeed;
    truth.energy_ratio = (truth.d_far / truth.d_near) * (truth.d_far / truth.d_near);

    const double noise = cfg.source_amplitude * std::pow(10.0, -cfg.audio_snr_db / 20.0);
    AudioClip clip;
    clip.sample_rate = cfg.audio_rate;
    if (cfg.stereo) {
        clip.channels.push_back(delayed(src.signal, truth.d_near / kSoundSpeed * cfg.audio_rate, 1.0));
        clip.channels.push_back(
            delayed(src.signal, truth.d_far / kSoundSpeed * cfg.audio_rate, truth.d_near / truth.d_far));
    } else {
        clip.channels.push_back(src.signal);
    }
    for (auto& ch : clip.channels)
        for (double& v : ch) v = std::clamp(v + noise * rng.gaussian(), -1.0, 1.0);
    return clip;
}

double interp(const std::vector<double>& v, double rate, double t) {
    const double pos = t * rate;
    if (pos <= 0) return v.front();
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    const double w = pos - static_cast<double>(i);
    return v[i] * (1.0 - w) + v[i + 1] * w;
}

}  // namespace

void DeviceProfile::validate() const {
    if (coil_gain < 0) throw ParameterError("coil gain must be non-negative");
    if (falloff_exponent < 2 || falloff_exponent > 4) throw ParameterError("falloff exponent must lie in [2, 4]");
    if (!(carrier_low > 0) || !(carrier_high > carrier_low) || carrier_high >= 50.0)
        throw ParameterError("carrier band must satisfy 0 < low < high < 50 Hz");
}

void SceneConfig::validate() const {
    device.validate();
    if (!(distance > 0)) throw ParameterError("source distance must be positive");
    // Zero spacing places both microphones at the same distance from the source.
    if (!(mic_spacing >= 0)) throw ParameterError("microphone spacing must be non-negative");
    if (words.empty()) throw ParameterError("utterance plan is empty");
    for (const auto& w : words)
        if (!(w.duration > 0) || w.gap < 0) throw ParameterError("word durations must be positive");
    if (!(audio_rate > 0) || !(mag_rate > 0)) throw ParameterError("sample rates must be positive");
    if (timestamp_jitter < 0 || timestamp_jitter >= 0.5 / mag_rate)
        throw ParameterError("timestamp jitter must be below half a sampling period");
}

std::vector<DeviceProfile> default_devices() {
    return {
        {"dev-a", 3.8e-5, 3.0, 0.02, 8.0, 30.0},
        {"dev-b", 2.6e-5, 3.0, 0.03, 12.0, 40.0},
        {"dev-c", 5.0e-5, 3.0, 0.01, 6.0, 22.0},
        {"dev-d", 3.2e-5, 3.0, 0.02, 15.0, 45.0},
    };
}

UserProfile make_user(const std::string& name, std::uint64_t seed) {
    Rng rng(splitmix64(seed ^ fnv1a64("user/" + name)));
    UserProfile u;
    u.name = name;
    u.wander_amplitude = rng.uniform(0.4, 1.5);
    u.wander_corner_hz = rng.uniform(0.5, 2.0);
    u.tremor_hz = rng.uniform(6.0, 12.0);
    u.tremor_amplitude = rng.uniform(0.005, 0.02);
    return u;
}

std::vector<double> jittered_timestamps(std::size_t count, double rate, double jitter, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> t(count);
    for (std::size_t k = 0; k < count; ++k)
        t[k] = static_cast<double>(k) / rate + (k == 0 ? 0.0 : rng.uniform(-jitter, jitter));
    return t;
}

StereoScene gen_stereo_audio(const SceneConfig& cfg) {
    SceneConfig c = cfg;
    c.stereo = true;
    c.validate();
    Rng rng(c.seed);
    const Source src = make_source(c, rng);
    StereoScene scene;
    scene.truth.words = src.words;
    scene.audio = capture_audio(c, src, rng, scene.truth);
    return scene;
}

Scene gen_pair(const SceneConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const Source src = make_source(cfg, rng);

    Scene scene;
    scene.truth.words = src.words;
    scene.pair.audio = capture_audio(cfg, src, rng, scene.truth);
    scene.pair.meta.label = cfg.source == SourceKind::human ? Label::human : Label::loudspeaker;

    // Magnetometer, evaluated at the jittered sampling instants.
    const auto count = static_cast<std::size_t>(std::floor(src.duration * cfg.mag_rate)) + 1;
    auto& trace = scene.pair.trace;
    trace.nominal_rate = cfg.mag_rate;
    trace.timestamps = jittered_timestamps(count, cfg.mag_rate, cfg.timestamp_jitter,
                                           static_cast<std::uint64_t>(rng.uniform() * 0x1.0p53));
    trace.samples.resize(count);

    const auto drift_axis = rng.unit_vector();
    const auto tremor_axis = rng.unit_vector();
    const auto coupling_axis = rng.unit_vector();
    const double tremor_hz = cfg.user.tremor_hz + rng.uniform(-0.5, 0.5);
    const double tremor_phase = rng.uniform(0.0, 2.0 * pi);

    // Device carrier: tone frequencies fixed per device, phases per scene.
    constexpr int kTones = 6;
    Rng device_rng(fnv1a64("device/" + cfg.device.name));
    std::array<double, kTones> tone_hz{}, tone_phase{};
    for (int q = 0; q < kTones; ++q) {
        tone_hz[q] = device_rng.uniform(cfg.device.carrier_low, cfg.device.carrier_high);
        tone_phase[q] = rng.uniform(0.0, 2.0 * pi);
    }
    const double coupling = cfg.source == SourceKind::loudspeaker
                                ? cfg.device.coil_gain / std::pow(cfg.distance, cfg.device.falloff_exponent)
                                : 0.0;
    scene.truth.coupling_amplitude = coupling;
    scene.truth.coupling_axis = coupling_axis;

    const double rho = std::exp(-2.0 * pi * cfg.user.wander_corner_hz / cfg.mag_rate);
    const double innovation = cfg.user.wander_amplitude * std::sqrt(1.0 - rho * rho);
    // Hand motion: an AR(1) process smoothed by a second unity-gain pole, so
    // its spectrum falls as 1/f^4 and little of it survives the 5 Hz high-pass.
    std::array<double, 3> drive{}, wander{};
    for (int a = 0; a < 3; ++a) wander[a] = drive[a] = cfg.user.wander_amplitude * rng.gaussian();

    for (std::size_t k = 0; k < count; ++k) {
        const double t = trace.timestamps[k];
        if (k > 0)
            for (int a = 0; a < 3; ++a) {
                drive[a] = rho * drive[a] + innovation * rng.gaussian();
                wander[a] = rho * wander[a] + (1.0 - rho) * drive[a];
            }
        std::array<double, 3> m = cfg.earth_field;
        const double tremor = cfg.user.tremor_amplitude * std::sin(2.0 * pi * tremor_hz * t + tremor_phase);
        double carrier = 0.0;
        for (int q = 0; q < kTones; ++q) carrier += std::sin(2.0 * pi * tone_hz[q] * t + tone_phase[q]);
        carrier /= std::sqrt(kTones / 2.0);
        const double disturbance = coupling * interp(src.envelope_100, 100.0, t) * carrier;
        for (int a = 0; a < 3; ++a) {
            m[a] += cfg.device.drift_rate * t * drift_axis[a] + wander[a] + tremor * tremor_axis[a] +
                    disturbance * coupling_axis[a] + cfg.mag_noise_sigma * rng.gaussian();
        }
        trace.samples[k] = {m[0], m[1], m[2]};
    }
    return scene;
}

double magnetic_envelope_correlation(const Scene& scene) {
    const auto net = dsp::preprocess_trace(scene.pair.trace);
    const std::size_t n = net.size();
    std::vector<double> smooth(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        int c = 0;
        for (long j = static_cast<long>(i) - 2; j <= static_cast<long>(i) + 2; ++j) {
            if (j < 0 || j >= static_cast<long>(n)) continue;
            s += net.values[static_cast<std::size_t>(j)];
            ++c;
        }
        smooth[i] = s / c;
    }

    const auto mono = scene.pair.audio.downmix();
    const double rate = scene.pair.audio.sample_rate;
    const auto half = static_cast<long>(std::lround(0.005 * rate));
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / net.rate;
        const bool near_word = std::any_of(scene.truth.words.begin(), scene.truth.words.end(), [&](const auto& w) {
            return std::abs(t - 0.5 * (w.first + w.second)) <= 0.5;
        });
        if (!near_word) continue;
        const long centre = std::lround(t * rate);
        double e = 0.0;
        long count = 0;
        for (long j = centre - half; j < centre + half; ++j) {
            if (j < 0 || j >= static_cast<long>(mono.size())) continue;
            e += mono[static_cast<std::size_t>(j)] * mono[static_cast<std::size_t>(j)];
            ++count;
        }
        xs.push_back(smooth[i]);
        ys.push_back(count ? std::sqrt(e / static_cast<double>(count)) : 0.0);
    }
    if (xs.size() < 3) return 0.0;
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx <= 0 || syy <= 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------

std::uint64_t entry_seed(std::uint64_t master_seed, const std::string& key) {
    return splitmix64(master_seed ^ fnv1a64(key));
}

void CorpusSpec::validate() const {
    if (users.empty()) throw ParameterError("corpus spec lists no users");
    if (labels.empty()) throw ParameterError("corpus spec lists no labels");
    if (commands == 0) throw ParameterError("corpus spec needs at least one command");
    if (!(distance_min > 0) || distance_max < distance_min) throw ParameterError("invalid distance range");
    for (const auto& d : devices) d.validate();
    for (const auto& u : train_users)
        if (std::find(test_users.begin(), test_users.end(), u) != test_users.end())
            throw ParameterError("user '" + u + "' is in both train and test splits");
}

CorpusSpec CorpusSpec::from_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ResolutionError("cannot open corpus spec " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("corpus spec: ") + e.what(), 0);
    }
    CorpusSpec spec;
    try {
        if (j.contains("users") && j["users"].is_array()) {
            spec.users = j["users"].get<std::vector<std::string>>();
        } else {
            const auto n = j.value("num_users", 4);
            for (int i = 0; i < n; ++i) spec.users.push_back("user" + std::to_string(i + 1));
        }
        if (j.contains("devices")) {
            for (const auto& d : j["devices"]) {
                DeviceProfile p;
                p.name = d.at("name").get<std::string>();
                p.coil_gain = d.value("coil_gain", p.coil_gain);
                p.falloff_exponent = d.value("falloff_exponent", p.falloff_exponent);
                p.drift_rate = d.value("drift_rate", p.drift_rate);
                p.carrier_low = d.value("carrier_low", p.carrier_low);
                p.carrier_high = d.value("carrier_high", p.carrier_high);
                spec.devices.push_back(p);
            }
        } else if (j.contains("num_devices")) {
            auto defaults = default_devices();
            const auto n = std::min<std::size_t>(j["num_devices"].get<std::size_t>(), defaults.size());
            spec.devices.assign(defaults.begin(), defaults.begin() + static_cast<std::ptrdiff_t>(n));
        }
        if (j.contains("labels")) {
            spec.labels.clear();
            for (const auto& l : j["labels"])
                spec.labels.push_back(parse_label(l.get<std::string>()) == Label::human ? SourceKind::human
                                                                                        : SourceKind::loudspeaker);
        }
        spec.commands = j.value("commands", spec.commands);
        spec.audio_rate = j.value("audio_rate", spec.audio_rate);
        spec.stereo = j.value("stereo", spec.stereo);
        spec.mag_noise_sigma = j.value("mag_noise_sigma", spec.mag_noise_sigma);
        spec.audio_snr_db = j.value("audio_snr_db", spec.audio_snr_db);
        spec.distance_min = j.value("distance_min", spec.distance_min);
        spec.distance_max = j.value("distance_max", spec.distance_max);
        if (j.contains("train_users")) spec.train_users = j["train_users"].get<std::vector<std::string>>();
        if (j.contains("test_users")) spec.test_users = j["test_users"].get<std::vector<std::string>>();
        if (j.contains("holdout_device")) spec.holdout_device = j["holdout_device"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("corpus spec: ") + e.what(), 0);
    }
    spec.validate();
    return spec;
}

std::vector<CorpusEntry> plan_corpus(const CorpusSpec& spec, std::uint64_t master_seed) {
    spec.validate();
    std::vector<DeviceProfile> devices = spec.devices;
    if (devices.empty()) devices.push_back(DeviceProfile{});

    std::vector<CorpusEntry> plan;
    for (const auto kind : spec.labels) {
        const std::string label = kind == SourceKind::human ? "human" : "loudspeaker";
        for (const auto& user_name : spec.users) {
            const UserProfile user = make_user(user_name, master_seed);
            for (const auto& device : devices) {
                for (std::size_t c = 0; c < spec.commands; ++c) {
                    char content[16];
                    std::snprintf(content, sizeof content, "cmd%02zu", c + 1);
                    const std::string key = label + "/" + user_name + "/" + device.name + "/" + content;

                    CorpusEntry e;
                    SceneConfig& cfg = e.config;
                    cfg.source = kind;
                    cfg.device = device;
                    cfg.user = user;
                    cfg.audio_rate = spec.audio_rate;
                    cfg.stereo = spec.stereo;
                    cfg.mag_noise_sigma = spec.mag_noise_sigma;
                    cfg.audio_snr_db = spec.audio_snr_db;
                    cfg.seed = entry_seed(master_seed, key);

                    // Word count and nominal durations belong to the command text;
                    // each utterance varies them slightly.
                    Rng content_rng(fnv1a64(std::string("content/") + content));
                    Rng scene_rng(cfg.seed ^ 0xa5a5a5a5a5a5a5a5ULL);
                    const int words = 2 + static_cast<int>(content_rng.uniform() * 3.0);
                    cfg.words.clear();
                    for (int w = 0; w < words; ++w) {
                        const double nominal = content_rng.uniform(0.25, 0.55);
                        cfg.words.push_back(
                            {nominal * scene_rng.uniform(0.9, 1.1), scene_rng.uniform(0.3, 0.5)});
                    }
                    cfg.distance = scene_rng.uniform(spec.distance_min, spec.distance_max);

                    e.meta.label = kind == SourceKind::human ? Label::human : Label::loudspeaker;
                    e.meta.user_id = user_name;
                    e.meta.device_id = device.name;
                    e.meta.content_id = content;
                    e.meta.command_id = label.substr(0, 1) + "-" + user_name + "-" + device.name + "-" + content;

                    const auto in = [](const std::vector<std::string>& v, const std::string& s) {
                        return std::find(v.begin(), v.end(), s) != v.end();
                    };
                    const bool held_out = spec.holdout_device && *spec.holdout_device == device.name;
                    if (in(spec.train_users, user_name) && !held_out)
                        e.split = "train";
                    else if (in(spec.test_users, user_name))
                        e.split = "test";
                    plan.push_back(std::move(e));
                }
            }
        }
    }
    return plan;
}

fs::path gen_dataset(const CorpusSpec& spec, std::uint64_t master_seed, const fs::path& out_dir) {
    const auto plan = plan_corpus(spec, master_seed);
    std::error_code ec;
    fs::create_directories(out_dir / "traces", ec);
    if (ec) throw ResolutionError("cannot create " + (out_dir / "traces").string() + ": " + ec.message());
    fs::create_directories(out_dir / "audio", ec);
    if (ec) throw ResolutionError("cannot create " + (out_dir / "audio").string() + ": " + ec.message());

    std::vector<ManifestEntry> entries;
    entries.reserve(plan.size());
    for (const auto& e : plan) {
        const Scene scene = gen_pair(e.config);
        ManifestEntry m;
        m.trace_path = fs::path("traces") / (e.meta.command_id + ".csv");
        m.audio_path = fs::path("audio") / (e.meta.command_id + ".wav");
        m.meta = e.meta;
        m.split = e.split;
        write_trace(out_dir / m.trace_path, scene.pair.trace);
        write_audio(out_dir / m.audio_path, scene.pair.audio);
        entries.push_back(std::move(m));
    }
    const fs::path manifest = out_dir / "manifest.jsonl";
    write_manifest(manifest, entries);
    return manifest;
}

}  // namespace maglive::synth
