#pragma once

#include "maglive/dsp.hpp"
#include "maglive/evaluation.hpp"
#include "maglive/model.hpp"
#include "maglive/ranging.hpp"
#include "maglive/synth.hpp"
#include "maglive/trace.hpp"
#include "maglive/training.hpp"
#include "maglive/vad.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace maglive::pipeline {

inline constexpr const char* kVersion = "1.0.0";

struct PreprocessParams {
    double rate = 100.0;
    double cutoff = dsp::kHighpassCutoff;
    vad::VadParams vad;
};

// Everything a run needs. Each random stream is derived from `seed`.
struct PipelineConfig {
    std::filesystem::path dataset;
    std::filesystem::path output;
    PreprocessParams preprocess;
    ranging::RangingConfig ranging;
    bool ranging_enabled = true;
    training::TrainConfig train;
    double threshold = model::kDecisionThreshold;
    std::size_t workers = 1;
    std::uint64_t seed = 7;

    void validate() const;
};

nlohmann::json to_json(const PipelineConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

// Written next to every CLI output set.
void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const PipelineConfig& cfg,
                        const std::vector<std::filesystem::path>& inputs);

// ---------------------------------------------------------------------------
// Recording -> per-word feature tensors

struct SegmentRecord {
    vad::AlignedSegment aligned;
    dsp::FeatureTensor features;
};

std::vector<SegmentRecord> segment_recording(const RecordingPair& pair, const PreprocessParams& params);

struct RecordingSegments {
    std::size_t entry = 0;  // index into the source list
    std::vector<SegmentRecord> segments;
    std::string error;  // non-empty when the recording was skipped
};

// Segments every manifest entry using at most `workers` threads. Output order
// follows the manifest regardless of scheduling.
std::vector<RecordingSegments> preprocess_dataset(const DatasetManifest& manifest, const PreprocessParams& params,
                                                  std::size_t workers);

// In-memory variant over a synthetic corpus plan; nothing touches disk.
std::vector<RecordingSegments> preprocess_plan(const std::vector<synth::CorpusEntry>& plan,
                                               const PreprocessParams& params, std::size_t workers);

struct SegmentSet {
    std::vector<dsp::FeatureTensor> inputs;
    std::vector<int> labels;  // 1 human, 0 loudspeaker
    std::vector<RecordingMeta> meta;

    std::size_t size() const { return inputs.size(); }
};

// Gathers segments whose recording split equals `split` (all when nullopt).
SegmentSet collect(const std::vector<RecordingSegments>& segments, const std::vector<RecordingMeta>& meta,
                   const std::vector<std::optional<std::string>>& splits, const std::optional<std::string>& split);

struct TrainResult {
    training::TrainHistory stage1;
    training::TrainHistory stage2;
};

// Two-stage training of a freshly seeded model.
TrainResult train_model(model::MagLiveModel& model, const SegmentSet& train, const training::TrainConfig& cfg,
                        const training::LogSink& log = {});

std::vector<eval::ScoredSample> score_set(model::MagLiveModel& model, const SegmentSet& set);

// ---------------------------------------------------------------------------
// Single-recording decision

struct DetectResult {
    std::optional<ranging::GateResult> gate;
    std::string gate_error;  // ranging failure that forced a rejection
    std::vector<double> word_scores;
    std::string verdict;  // "human", "spoof", "rejected: out of range", "rejected: no speech"
    bool accepted = false;
    bool model_invoked = false;
    double latency_ms = 0.0;
};

DetectResult run_detect(const RecordingPair& pair, model::MagLiveModel& model, const PipelineConfig& cfg);
nlohmann::json to_json(const DetectResult& result);

struct LatencyStats {
    std::vector<double> samples_ms;
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double p95_ms = 0.0;
    std::vector<double> scores;  // one per trial, identical across trials
};

// Preprocessing plus inference of one synthetic word segment, timed per trial.
LatencyStats run_benchmark(model::MagLiveModel& model, std::size_t trials, std::uint64_t seed);
nlohmann::json to_json(const LatencyStats& stats);

}  // namespace maglive::pipeline
