// maglive: command-line front end over the core library.
//
// Exit codes: 0 success / accepted, 1 rejected, 2 usage or parameter error,
// 3 data error (unreadable, malformed or unusable input).

#include "maglive/error.hpp"
#include "maglive/evaluation.hpp"
#include "maglive/pipeline.hpp"
#include "maglive/ranging.hpp"
#include "maglive/synth.hpp"
#include "maglive/vad.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace maglive;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kReject = 1, kUsage = 2, kData = 3 };

// Flags shared by the pipeline subcommands. Unset flags leave the config file
// (or the defaults) alone.
struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> threshold;
    std::optional<std::size_t> workers;

    void attach(CLI::App* app, bool with_workers) {
        app->add_option("-c,--config", config, "pipeline config JSON");
        app->add_option("--seed", seed, "master seed");
        app->add_option("--threshold", threshold, "decision threshold on the human probability");
        if (with_workers) app->add_option("-j,--workers", workers, "preprocessing threads");
    }

    pipeline::PipelineConfig resolve() const {
        auto cfg = config.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(config);
        if (seed) cfg.seed = *seed, cfg.train.seed = *seed;
        if (threshold) cfg.threshold = *threshold;
        if (workers) cfg.workers = *workers;
        cfg.validate();
        return cfg;
    }
};

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ResolutionError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::optional<std::string> pick_split(const DatasetManifest& m, const std::string& wanted) {
    for (const auto& e : m.entries)
        if (e.split) return wanted;
    return std::nullopt;  // untagged corpus: use everything
}

struct Loaded {
    DatasetManifest manifest;
    std::vector<pipeline::RecordingSegments> segments;
    std::vector<RecordingMeta> meta;
    std::vector<std::optional<std::string>> splits;
};

Loaded load_and_segment(const fs::path& manifest_path, const pipeline::PipelineConfig& cfg) {
    Loaded l;
    l.manifest = load_manifest(manifest_path);
    l.segments = pipeline::preprocess_dataset(l.manifest, cfg.preprocess, cfg.workers);
    for (const auto& e : l.manifest.entries) l.meta.push_back(e.meta), l.splits.push_back(e.split);
    for (const auto& r : l.segments)
        if (!r.error.empty())
            std::cerr << "skipped " << l.meta[r.entry].command_id << ": " << r.error << '\n';
    return l;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& spec_path, int users, int devices, int commands, bool stereo,
              std::uint64_t seed, const fs::path& out) {
    synth::CorpusSpec spec;
    if (!spec_path.empty()) {
        spec = synth::CorpusSpec::from_json_file(spec_path);
    } else {
        for (int u = 1; u <= users; ++u) spec.users.push_back("user" + std::to_string(u));
        const auto all = synth::default_devices();
        if (devices < 1 || devices > static_cast<int>(all.size()))
            throw ParameterError("--devices must lie in [1, " + std::to_string(all.size()) + "]");
        spec.devices.assign(all.begin(), all.begin() + devices);
        spec.commands = static_cast<std::size_t>(commands);
        spec.stereo = stereo;
        // Half the users (at least one) train; the rest test.
        const int train = std::max(1, users / 2);
        for (int u = 1; u <= users; ++u)
            (u <= train ? spec.train_users : spec.test_users).push_back("user" + std::to_string(u));
    }
    const auto manifest = synth::gen_dataset(spec, seed, out);
    pipeline::PipelineConfig cfg;
    cfg.seed = seed;
    cfg.output = out;
    pipeline::write_run_manifest(out, "synth", cfg, spec_path.empty() ? std::vector<fs::path>{} : std::vector<fs::path>{spec_path});
    std::cout << json{{"manifest", manifest.string()}, {"entries", load_manifest(manifest).entries.size()}}.dump()
              << '\n';
    return kOk;
}

int cmd_preprocess(const Common& common, const fs::path& dataset, const fs::path& out) {
    auto cfg = common.resolve();
    cfg.dataset = dataset;
    cfg.output = out;
    const auto l = load_and_segment(dataset, cfg);
    fs::create_directories(out / "features");
    std::ofstream seg(out / "segments.jsonl", std::ios::binary);
    if (!seg) throw ResolutionError("cannot write " + (out / "segments.jsonl").string());
    std::size_t written = 0;
    for (const auto& r : l.segments) {
        const auto& m = l.meta[r.entry];
        if (!r.error.empty()) continue;
        for (std::size_t k = 0; k < r.segments.size(); ++k) {
            const auto& s = r.segments[k];
            const fs::path rel = fs::path("features") / (m.command_id + "-w" + std::to_string(k) + ".f32");
            dsp::write_feature_dump(out / rel, s.features);
            json line{{"command", m.command_id}, {"word", k},
                      {"label", to_string(m.label)}, {"user", m.user_id},
                      {"device", m.device_id}, {"content", m.content_id},
                      {"voice_start", s.aligned.voice.start}, {"voice_end", s.aligned.voice.end},
                      {"window_start", s.aligned.window_start_index}, {"features", rel.generic_string()}};
            if (l.splits[r.entry]) line["split"] = *l.splits[r.entry];
            seg << line.dump() << '\n';
            ++written;
        }
    }
    pipeline::write_run_manifest(out, "preprocess", cfg, {dataset});
    std::cout << json{{"segments", written}, {"recordings", l.segments.size()}}.dump() << '\n';
    return kOk;
}

int cmd_range(const Common& common, const fs::path& audio_path, std::optional<double> start,
              std::optional<double> end) {
    const auto cfg = common.resolve();
    const auto audio = load_audio(audio_path);
    vad::VoiceSegment span;
    if (start && end) {
        span = {*start, *end, 0.0};
    } else {
        const auto voice = vad::detect_voice_segments(audio, cfg.preprocess.vad);
        if (voice.empty()) {
            std::cout << json{{"status", "no speech"}}.dump(2) << '\n';
            return kReject;
        }
        span = {voice.front().start, voice.back().end, 0.0};
    }
    const auto gate = ranging::range_gate(audio, span, cfg.ranging);
    if (gate.status == ranging::GateStatus::unavailable) {
        std::cout << json{{"status", "unavailable"}, {"reason", gate.reason}}.dump(2) << '\n';
        return kData;
    }
    const auto& e = *gate.estimate;
    std::cout << json{{"status", "evaluated"},   {"tdoa", e.tdoa}, {"delta_d", e.delta_d}, {"d1", e.d1},
                      {"d2", e.d2},             {"e1", e.e1},     {"e2", e.e2},           {"gate_distance", e.gate_distance},
                      {"passed", e.passed},     {"span", {span.start, span.end}}}
                     .dump(2)
              << '\n';
    return e.passed ? kOk : kReject;
}

int cmd_train(const Common& common, const fs::path& dataset, const fs::path& out, std::optional<std::size_t> e1,
              std::optional<std::size_t> e2) {
    auto cfg = common.resolve();
    if (e1) cfg.train.epochs_stage1 = *e1;
    if (e2) cfg.train.epochs_stage2 = *e2;
    cfg.dataset = dataset;
    cfg.output = out;
    cfg.validate();
    const auto l = load_and_segment(dataset, cfg);
    const auto train = pipeline::collect(l.segments, l.meta, l.splits, pick_split(l.manifest, "train"));
    if (train.size() == 0) throw DataError("no training segments in " + dataset.string());

    fs::create_directories(out);
    std::ofstream log(out / "train_log.jsonl", std::ios::binary);
    if (!log) throw ResolutionError("cannot write " + (out / "train_log.jsonl").string());
    model::MagLiveModel m(cfg.seed);
    const auto result = pipeline::train_model(m, train, cfg.train, [&](const training::LogRecord& r) {
        log << json{{"step", r.step}, {"stage", r.stage}, {"epoch", r.epoch}, {"loss", r.loss},
                    {"learning_rate", r.learning_rate}, {"wall_clock_s", r.wall_clock_s}}
                   .dump()
            << '\n';
    });
    m.save(out / "model.ckpt");
    pipeline::write_run_manifest(out, "train", cfg, {dataset});
    for (const auto* h : {&result.stage1, &result.stage2})
        for (const auto& w : h->warnings) std::cerr << "warning: " << w << '\n';
    std::cout << json{{"checkpoint", (out / "model.ckpt").string()},
                      {"segments", train.size()},
                      {"stage1_final_loss", result.stage1.epoch_loss.empty() ? 0.0 : result.stage1.epoch_loss.back()},
                      {"stage2_final_loss", result.stage2.epoch_loss.empty() ? 0.0 : result.stage2.epoch_loss.back()}}
                     .dump()
              << '\n';
    return kOk;
}

int cmd_eval(const Common& common, const fs::path& dataset, const fs::path& checkpoint, const fs::path& out,
             const std::string& split) {
    auto cfg = common.resolve();
    cfg.dataset = dataset;
    cfg.output = out;
    const auto l = load_and_segment(dataset, cfg);
    const auto set = pipeline::collect(l.segments, l.meta, l.splits,
                                       split == "all" ? std::nullopt : pick_split(l.manifest, split));
    if (set.size() == 0) throw DataError("no evaluation segments in " + dataset.string());
    model::MagLiveModel m;
    m.load(checkpoint);
    const auto report = eval::evaluate(pipeline::score_set(m, set), cfg.threshold);

    fs::create_directories(out);
    write_json(out / "report.json", eval::to_json(report));
    eval::write_roc_csv(out / "roc.csv", report.roc);
    if (set.size() >= 3) {
        const auto pca = eval::pca_project(m.features(set.inputs), cfg.seed);
        eval::write_pca_csv(out / "pca.csv", pca, set.labels);
    }
    pipeline::write_run_manifest(out, "eval", cfg, {dataset, checkpoint});
    std::cout << json{{"bac", report.at_threshold.bac}, {"far", report.at_threshold.far},
                      {"frr", report.at_threshold.frr}, {"eer", report.eer.eer},
                      {"auc", report.roc.auc},          {"command_far", report.command_rates.far},
                      {"samples", set.size()}}
                     .dump()
              << '\n';
    return kOk;
}

int cmd_detect(const Common& common, const fs::path& trace, const fs::path& audio, const fs::path& checkpoint,
               bool no_ranging) {
    auto cfg = common.resolve();
    if (no_ranging) cfg.ranging_enabled = false;
    RecordingPair pair{load_trace(trace), load_audio(audio), {}};
    model::MagLiveModel m;
    m.load(checkpoint);
    const auto result = pipeline::run_detect(pair, m, cfg);
    std::cout << pipeline::to_json(result).dump(2) << '\n';
    return result.accepted ? kOk : kReject;
}

int cmd_bench(const fs::path& checkpoint, std::size_t trials, std::uint64_t seed) {
    model::MagLiveModel m;
    m.load(checkpoint);
    std::cout << pipeline::to_json(pipeline::run_benchmark(m, trials, seed)).dump(2) << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"maglive: magnetometer-based voice liveness detection"};
    app.set_version_flag("--version", std::string(pipeline::kVersion));
    app.require_subcommand(1);

    std::function<int()> run;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic paired corpus");
    std::string spec_path;
    int users = 4, devices = 2, commands = 5;
    bool stereo = false;
    std::uint64_t synth_seed = 7;
    fs::path synth_out;
    synth->add_option("--spec", spec_path, "corpus spec JSON (overrides the count flags)");
    synth->add_option("--users", users, "number of users")->check(CLI::PositiveNumber);
    synth->add_option("--devices", devices, "number of loudspeaker profiles");
    synth->add_option("--commands", commands, "commands per user, device and label")->check(CLI::PositiveNumber);
    synth->add_flag("--stereo", stereo, "record two microphone channels");
    synth->add_option("--seed", synth_seed, "master seed");
    synth->add_option("-o,--out", synth_out, "output directory")->required();
    synth->callback([&] { run = [&] { return cmd_synth(spec_path, users, devices, commands, stereo, synth_seed, synth_out); }; });

    // preprocess
    Common pre_common;
    fs::path pre_dataset, pre_out;
    auto* pre = app.add_subcommand("preprocess", "segment recordings and dump feature tensors");
    pre_common.attach(pre, true);
    pre->add_option("-d,--dataset", pre_dataset, "manifest.jsonl")->required();
    pre->add_option("-o,--out", pre_out, "output directory")->required();
    pre->callback([&] { run = [&] { return cmd_preprocess(pre_common, pre_dataset, pre_out); }; });

    // range
    Common range_common;
    fs::path range_audio;
    std::optional<double> range_start, range_end;
    auto* range = app.add_subcommand("range", "estimate source distance from a stereo recording");
    range_common.attach(range, false);
    range->add_option("-a,--audio", range_audio, "stereo WAV")->required();
    auto* s_opt = range->add_option("--start", range_start, "span start, s (default: voiced span)");
    range->add_option("--end", range_end, "span end, s")->needs(s_opt);
    s_opt->needs(range->get_option("--end"));
    range->callback([&] { run = [&] { return cmd_range(range_common, range_audio, range_start, range_end); }; });

    // train
    Common train_common;
    fs::path train_dataset, train_out;
    std::optional<std::size_t> epochs1, epochs2;
    auto* train = app.add_subcommand("train", "two-stage training on the train split");
    train_common.attach(train, true);
    train->add_option("-d,--dataset", train_dataset, "manifest.jsonl")->required();
    train->add_option("-o,--out", train_out, "output directory")->required();
    train->add_option("--epochs-stage1", epochs1, "contrastive epochs");
    train->add_option("--epochs-stage2", epochs2, "classifier epochs");
    train->callback([&] { run = [&] { return cmd_train(train_common, train_dataset, train_out, epochs1, epochs2); }; });

    // eval
    Common eval_common;
    fs::path eval_dataset, eval_ckpt, eval_out;
    std::string eval_split = "test";
    auto* ev = app.add_subcommand("eval", "score a split and write report, ROC and PCA exports");
    eval_common.attach(ev, true);
    ev->add_option("-d,--dataset", eval_dataset, "manifest.jsonl")->required();
    ev->add_option("-m,--checkpoint", eval_ckpt, "model checkpoint")->required();
    ev->add_option("-o,--out", eval_out, "output directory")->required();
    ev->add_option("--split", eval_split, "split to evaluate, or 'all'");
    ev->callback([&] { run = [&] { return cmd_eval(eval_common, eval_dataset, eval_ckpt, eval_out, eval_split); }; });

    // detect
    Common det_common;
    fs::path det_trace, det_audio, det_ckpt;
    bool no_ranging = false;
    auto* det = app.add_subcommand("detect", "decide one recording: human, spoof or rejected");
    det_common.attach(det, false);
    det->add_option("-t,--trace", det_trace, "magnetometer CSV")->required();
    det->add_option("-a,--audio", det_audio, "WAV recording")->required();
    det->add_option("-m,--checkpoint", det_ckpt, "model checkpoint")->required();
    det->add_flag("--no-ranging", no_ranging, "skip the distance gate");
    det->callback([&] { run = [&] { return cmd_detect(det_common, det_trace, det_audio, det_ckpt, no_ranging); }; });

    // bench
    fs::path bench_ckpt;
    std::size_t trials = 10;
    std::uint64_t bench_seed = 7;
    auto* bench = app.add_subcommand("bench", "time preprocessing + inference of one segment");
    bench->add_option("-m,--checkpoint", bench_ckpt, "model checkpoint")->required();
    bench->add_option("-n,--trials", trials, "number of trials")->check(CLI::PositiveNumber);
    bench->add_option("--seed", bench_seed, "scene seed");
    bench->callback([&] { run = [&] { return cmd_bench(bench_ckpt, trials, bench_seed); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        return run();
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
}
