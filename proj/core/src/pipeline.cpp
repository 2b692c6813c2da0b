#include "maglive/pipeline.hpp"

#include "maglive/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

namespace maglive::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Reads known keys from `j` into the fields bound by `bind`; any other key is an error.
template <typename Bind>
void read_object(const json& j, const std::string& where, Bind&& bind) {
    if (!j.is_object()) throw ParameterError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!bind(key, value)) throw ParameterError("unknown config key '" + where + "." + key + "'");
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace

void PipelineConfig::validate() const {
    if (!(preprocess.rate > 0)) throw ParameterError("preprocess.rate must be positive");
    if (!(preprocess.cutoff > 0) || preprocess.cutoff >= preprocess.rate / 2)
        throw ParameterError("preprocess.cutoff must lie in (0, rate/2)");
    ranging.validate();
    train.validate();
    if (!(threshold > 0 && threshold < 1)) throw ParameterError("threshold must lie in (0, 1)");
    if (workers == 0) throw ParameterError("workers must be at least 1");
}

json to_json(const PipelineConfig& cfg) {
    const auto& v = cfg.preprocess.vad;
    return json{
        {"dataset", cfg.dataset.string()},
        {"output", cfg.output.string()},
        {"preprocess",
         {{"rate", cfg.preprocess.rate},
          {"cutoff", cfg.preprocess.cutoff},
          {"vad",
           {{"frame_s", v.frame_s},
            {"hop_s", v.hop_s},
            {"floor_percentile", v.floor_percentile},
            {"onset_db", v.onset_db},
            {"offset_db", v.offset_db},
            {"merge_gap_s", v.merge_gap_s},
            {"min_duration_s", v.min_duration_s},
            {"min_dynamic_range_db", v.min_dynamic_range_db}}}}},
        {"ranging",
         {{"enabled", cfg.ranging_enabled},
          {"mic_spacing", cfg.ranging.mic_spacing},
          {"sound_speed", cfg.ranging.sound_speed},
          {"distance_threshold", cfg.ranging.distance_threshold},
          {"energy_epsilon", cfg.ranging.energy_epsilon}}},
        {"train",
         {{"tau", cfg.train.tau},
          {"batch_size", cfg.train.batch_size},
          {"learning_rate", cfg.train.learning_rate},
          {"beta1", cfg.train.beta1},
          {"beta2", cfg.train.beta2},
          {"adam_epsilon", cfg.train.adam_epsilon},
          {"epochs_stage1", cfg.train.epochs_stage1},
          {"epochs_stage2", cfg.train.epochs_stage2}}},
        {"threshold", cfg.threshold},
        {"workers", cfg.workers},
        {"seed", cfg.seed},
    };
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig cfg;
    try {
        read_object(j, "config", [&](const std::string& key, const json& value) {
            if (key == "dataset") cfg.dataset = value.get<std::string>();
            else if (key == "output") cfg.output = value.get<std::string>();
            else if (key == "threshold") cfg.threshold = value.get<double>();
            else if (key == "workers") cfg.workers = value.get<std::size_t>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "preprocess") {
                read_object(value, "preprocess", [&](const std::string& k, const json& x) {
                    if (k == "rate") cfg.preprocess.rate = x.get<double>();
                    else if (k == "cutoff") cfg.preprocess.cutoff = x.get<double>();
                    else if (k == "vad") {
                        auto& v = cfg.preprocess.vad;
                        read_object(x, "preprocess.vad", [&](const std::string& n, const json& y) {
                            if (n == "frame_s") v.frame_s = y.get<double>();
                            else if (n == "hop_s") v.hop_s = y.get<double>();
                            else if (n == "floor_percentile") v.floor_percentile = y.get<double>();
                            else if (n == "onset_db") v.onset_db = y.get<double>();
                            else if (n == "offset_db") v.offset_db = y.get<double>();
                            else if (n == "merge_gap_s") v.merge_gap_s = y.get<double>();
                            else if (n == "min_duration_s") v.min_duration_s = y.get<double>();
                            else if (n == "min_dynamic_range_db") v.min_dynamic_range_db = y.get<double>();
                            else return false;
                            return true;
                        });
                    } else return false;
                    return true;
                });
            } else if (key == "ranging") {
                read_object(value, "ranging", [&](const std::string& k, const json& x) {
                    if (k == "enabled") cfg.ranging_enabled = x.get<bool>();
                    else if (k == "mic_spacing") cfg.ranging.mic_spacing = x.get<double>();
                    else if (k == "sound_speed") cfg.ranging.sound_speed = x.get<double>();
                    else if (k == "distance_threshold") cfg.ranging.distance_threshold = x.get<double>();
                    else if (k == "energy_epsilon") cfg.ranging.energy_epsilon = x.get<double>();
                    else return false;
                    return true;
                });
            } else if (key == "train") {
                read_object(value, "train", [&](const std::string& k, const json& x) {
                    auto& t = cfg.train;
                    if (k == "tau") t.tau = x.get<double>();
                    else if (k == "batch_size") t.batch_size = x.get<std::size_t>();
                    else if (k == "learning_rate") t.learning_rate = x.get<double>();
                    else if (k == "beta1") t.beta1 = x.get<double>();
                    else if (k == "beta2") t.beta2 = x.get<double>();
                    else if (k == "adam_epsilon") t.adam_epsilon = x.get<double>();
                    else if (k == "epochs_stage1") t.epochs_stage1 = x.get<std::size_t>();
                    else if (k == "epochs_stage2") t.epochs_stage2 = x.get<std::size_t>();
                    else return false;
                    return true;
                });
            } else return false;
            return true;
        });
    } catch (const json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
    cfg.train.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ResolutionError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("config " + path.string() + ": " + e.what(), 0);
    }
    return config_from_json(j);
}

std::string config_hash(const PipelineConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(cfg).dump())));
    return buf;
}

void write_run_manifest(const fs::path& dir, const std::string& command, const PipelineConfig& cfg,
                        const std::vector<fs::path>& inputs) {
    json j{{"command", command},
           {"version", kVersion},
           {"seed", cfg.seed},
           {"config_hash", config_hash(cfg)},
           {"config", to_json(cfg)},
           {"inputs", json::array()}};
    for (const auto& p : inputs) j["inputs"].push_back(p.string());
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream out(dir / "run_manifest.json");
    if (!out) throw ResolutionError("cannot write " + (dir / "run_manifest.json").string());
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

std::vector<SegmentRecord> segment_recording(const RecordingPair& pair, const PreprocessParams& params) {
    const auto net = dsp::preprocess_trace(pair.trace, params.rate, params.cutoff);
    const auto voice = vad::detect_voice_segments(pair.audio, params.vad);
    auto aligned = vad::align_segments(pair.meta, voice, net);
    std::vector<SegmentRecord> out;
    out.reserve(aligned.size());
    for (auto& a : aligned) {
        dsp::UniformSeries window{net.rate, a.mag_window};
        auto features = dsp::make_features(window);
        out.push_back({std::move(a), std::move(features)});
    }
    return out;
}

std::vector<RecordingSegments> preprocess_dataset(const DatasetManifest& manifest, const PreprocessParams& params,
                                                  std::size_t workers) {
    std::vector<RecordingSegments> out(manifest.entries.size());
    parallel_for(out.size(), workers, [&](std::size_t i) {
        out[i].entry = i;
        try {
            out[i].segments = segment_recording(load_pair(manifest.entries[i]), params);
        } catch (const Error& e) {
            out[i].error = e.what();
        }
    });
    return out;
}

std::vector<RecordingSegments> preprocess_plan(const std::vector<synth::CorpusEntry>& plan,
                                               const PreprocessParams& params, std::size_t workers) {
    std::vector<RecordingSegments> out(plan.size());
    parallel_for(out.size(), workers, [&](std::size_t i) {
        out[i].entry = i;
        try {
            auto scene = synth::gen_pair(plan[i].config);
            scene.pair.meta = plan[i].meta;
            out[i].segments = segment_recording(scene.pair, params);
        } catch (const Error& e) {
            out[i].error = e.what();
        }
    });
    return out;
}

SegmentSet collect(const std::vector<RecordingSegments>& segments, const std::vector<RecordingMeta>& meta,
                   const std::vector<std::optional<std::string>>& splits, const std::optional<std::string>& split) {
    SegmentSet set;
    for (const auto& rec : segments) {
        if (split && splits.at(rec.entry) != split) continue;
        for (const auto& s : rec.segments) {
            set.inputs.push_back(s.features);
            set.labels.push_back(meta.at(rec.entry).label == Label::human ? 1 : 0);
            set.meta.push_back(meta.at(rec.entry));
        }
    }
    return set;
}

TrainResult train_model(model::MagLiveModel& model, const SegmentSet& train, const training::TrainConfig& cfg,
                        const training::LogSink& log) {
    TrainResult result;
    result.stage1 = training::train_extractor(model, train.inputs, train.labels, cfg, log);
    const auto features = model.features(train.inputs);
    result.stage2 = training::train_classifier(model, features, train.labels, cfg, log);
    return result;
}

std::vector<eval::ScoredSample> score_set(model::MagLiveModel& model, const SegmentSet& set) {
    const auto scores = model.scores(set.inputs);
    std::vector<eval::ScoredSample> out(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) out[i] = {scores[i], set.labels[i], set.meta[i]};
    return out;
}

// ---------------------------------------------------------------------------

DetectResult run_detect(const RecordingPair& pair, model::MagLiveModel& model, const PipelineConfig& cfg) {
    const auto start = Clock::now();
    DetectResult result;
    const auto voice = vad::detect_voice_segments(pair.audio, cfg.preprocess.vad);
    if (voice.empty()) {
        result.verdict = "rejected: no speech";
        result.latency_ms = elapsed_ms(start);
        return result;
    }

    if (cfg.ranging_enabled) {
        // Range over the whole command, from the first onset to the last offset.
        const vad::VoiceSegment span{voice.front().start, voice.back().end, 0.0};
        try {
            result.gate = ranging::range_gate(pair.audio, span, cfg.ranging);
        } catch (const RangingError& e) {
            result.gate_error = e.what();
        }
        const bool evaluated_fail = result.gate && result.gate->status == ranging::GateStatus::evaluated &&
                                    !result.gate->passed();
        if (!result.gate_error.empty() || evaluated_fail) {
            result.verdict = "rejected: out of range";
            result.latency_ms = elapsed_ms(start);
            return result;
        }
    }

    const auto net = dsp::preprocess_trace(pair.trace, cfg.preprocess.rate, cfg.preprocess.cutoff);
    const auto aligned = vad::align_segments(pair.meta, voice, net);
    std::vector<dsp::FeatureTensor> inputs;
    inputs.reserve(aligned.size());
    for (const auto& a : aligned) inputs.push_back(dsp::make_features({net.rate, a.mag_window}));
    result.word_scores = model.scores(inputs);
    result.model_invoked = true;
    result.accepted = eval::command_verdict(result.word_scores, cfg.threshold);
    result.verdict = result.accepted ? "human" : "spoof";
    result.latency_ms = elapsed_ms(start);
    return result;
}

json to_json(const DetectResult& r) {
    json range = nullptr;
    if (r.gate) {
        range = json{{"status", r.gate->status == ranging::GateStatus::evaluated ? "evaluated" : "unavailable"},
                     {"reason", r.gate->reason}};
        if (const auto& e = r.gate->estimate) {
            range["tdoa"] = e->tdoa;
            range["delta_d"] = e->delta_d;
            range["d1"] = e->d1;
            range["d2"] = e->d2;
            range["gate_distance"] = e->gate_distance;
            range["passed"] = e->passed;
        }
    } else if (!r.gate_error.empty()) {
        range = json{{"status", "error"}, {"reason", r.gate_error}};
    }
    return json{{"range", range},
                {"per_word_scores", r.word_scores},
                {"verdict", r.verdict},
                {"latency_ms", r.latency_ms}};
}

LatencyStats run_benchmark(model::MagLiveModel& model, std::size_t trials, std::uint64_t seed) {
    synth::SceneConfig scene_cfg;
    scene_cfg.source = synth::SourceKind::loudspeaker;
    scene_cfg.words = {{0.4, 0.3}};
    scene_cfg.lead_in = 0.3;
    scene_cfg.tail = 0.3;
    scene_cfg.stereo = false;
    scene_cfg.audio_rate = 16000.0;
    scene_cfg.seed = seed;
    const auto scene = synth::gen_pair(scene_cfg);
    const auto& word = scene.truth.words.front();
    const vad::VoiceSegment voice{word.first, word.second, 0.0};

    LatencyStats stats;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto start = Clock::now();
        const auto net = dsp::preprocess_trace(scene.pair.trace);
        const auto aligned = vad::align_segments(scene.pair.meta, {voice}, net);
        const auto features = dsp::make_features({net.rate, aligned.front().mag_window});
        const auto score = model.scores(std::span(&features, 1)).front();
        stats.samples_ms.push_back(elapsed_ms(start));
        stats.scores.push_back(score);
    }
    if (trials == 0) return stats;
    auto sorted = stats.samples_ms;
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    stats.mean_ms = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
    stats.median_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    // Nearest-rank percentile.
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
    stats.p95_ms = sorted[std::max<std::size_t>(rank, 1) - 1];
    return stats;
}

json to_json(const LatencyStats& s) {
    return json{{"trials", s.samples_ms.size()},
                {"mean_ms", s.mean_ms},
                {"median_ms", s.median_ms},
                {"p95_ms", s.p95_ms},
                {"samples_ms", s.samples_ms},
                {"scores", s.scores}};
}

}  // namespace maglive::pipeline
