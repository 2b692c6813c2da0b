#include "maglive/dsp.hpp"
#include "maglive/error.hpp"
#include "maglive/synth.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace maglive::synth {
namespace {

SceneConfig loudspeaker_scene(std::uint64_t seed) {
    SceneConfig cfg;
    cfg.source = SourceKind::loudspeaker;
    cfg.device = default_devices().front();
    cfg.distance = 0.04;
    cfg.mag_noise_sigma = 0.05;
    cfg.audio_rate = 16000.0;
    cfg.stereo = false;
    cfg.seed = seed;
    return cfg;
}

double energy(const std::vector<double>& x) {
    return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

TEST(GenPair, LoudspeakerEnvelopeCorrelation) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto scene = gen_pair(loudspeaker_scene(seed));
        EXPECT_GE(magnetic_envelope_correlation(scene), 0.5) << "seed " << seed;
        EXPECT_GT(scene.truth.coupling_amplitude, 0.0);
    }
}

TEST(GenPair, HumanCorrelationAveragesOut) {
    // Single short scenes fluctuate; the bound applies to the Monte-Carlo mean.
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto cfg = loudspeaker_scene(seed);
        cfg.source = SourceKind::human;
        const auto scene = gen_pair(cfg);
        EXPECT_EQ(scene.truth.coupling_amplitude, 0.0);
        sum += magnetic_envelope_correlation(scene);
    }
    EXPECT_LE(std::abs(sum / 100.0), 0.1);
}

// Per-scene summary of the net high-passed magnetometer signal.
std::vector<double> trace_features(const Scene& scene) {
    const auto net = dsp::preprocess_trace(scene.pair.trace);
    double rms = 0.0, peak = 0.0;
    for (double v : net.values) rms += v * v, peak = std::max(peak, std::abs(v));
    rms = std::sqrt(rms / static_cast<double>(net.size()));
    return {rms, peak, magnetic_envelope_correlation(scene)};
}

double energy_distance(const std::vector<std::vector<double>>& pts, const std::vector<int>& group) {
    auto d = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        return std::sqrt(s);
    };
    double xy = 0, xx = 0, yy = 0, nxy = 0, nxx = 0, nyy = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts.size(); ++j) {
            const double v = d(pts[i], pts[j]);
            if (group[i] != group[j]) xy += v, nxy += 1;
            else if (group[i] == 0) xx += v, nxx += 1;
            else yy += v, nyy += 1;
        }
    return 2 * xy / nxy - xx / nxx - yy / nyy;
}

TEST(GenPair, ZeroGainLoudspeakerMatchesHumanDistribution) {
    std::vector<std::vector<double>> pts;
    std::vector<int> group;
    for (std::uint64_t i = 0; i < 30; ++i) {
        auto h = loudspeaker_scene(100 + i);
        h.source = SourceKind::human;
        pts.push_back(trace_features(gen_pair(h)));
        group.push_back(0);
        auto l = loudspeaker_scene(500 + i);
        l.device.coil_gain = 0.0;
        const auto scene = gen_pair(l);
        EXPECT_EQ(scene.truth.coupling_amplitude, 0.0);
        pts.push_back(trace_features(scene));
        group.push_back(1);
    }
    // Standardize each feature so no single scale dominates the distance.
    for (std::size_t k = 0; k < pts.front().size(); ++k) {
        double m = 0, s = 0;
        for (const auto& p : pts) m += p[k];
        m /= static_cast<double>(pts.size());
        for (const auto& p : pts) s += (p[k] - m) * (p[k] - m);
        s = std::sqrt(s / static_cast<double>(pts.size()));
        for (auto& p : pts) p[k] = s > 0 ? (p[k] - m) / s : 0.0;
    }
    const double observed = energy_distance(pts, group);
    std::mt19937_64 rng(3);
    int extreme = 0;
    const int permutations = 500;
    for (int p = 0; p < permutations; ++p) {
        std::shuffle(group.begin(), group.end(), rng);
        extreme += energy_distance(pts, group) >= observed;
    }
    const double p_value = (extreme + 1.0) / (permutations + 1.0);
    EXPECT_GT(p_value, 0.01);
}

TEST(GenPair, TraceHasTenSecondsAtHundredHertz) {
    auto cfg = loudspeaker_scene(4);
    cfg.lead_in = 1.0;
    cfg.words = {{2.0, 2.0}, {2.0, 2.0}};
    cfg.tail = 1.0;
    const auto scene = gen_pair(cfg);
    EXPECT_NEAR(static_cast<double>(scene.pair.trace.size()), 1000.0, 1.0);
    EXPECT_NO_THROW(validate(scene.pair.trace));
    EXPECT_NO_THROW(validate(scene.pair.audio));
}

TEST(GenPair, DeterministicPerSeed) {
    const auto a = gen_pair(loudspeaker_scene(9));
    const auto b = gen_pair(loudspeaker_scene(9));
    ASSERT_EQ(a.pair.trace.size(), b.pair.trace.size());
    for (std::size_t i = 0; i < a.pair.trace.size(); ++i) {
        EXPECT_EQ(a.pair.trace.timestamps[i], b.pair.trace.timestamps[i]);
        EXPECT_EQ(a.pair.trace.samples[i].x, b.pair.trace.samples[i].x);
    }
    EXPECT_EQ(a.pair.audio.channels, b.pair.audio.channels);
    const auto c = gen_pair(loudspeaker_scene(10));
    EXPECT_NE(a.pair.audio.channels, c.pair.audio.channels);
}

TEST(Stereo, GroundTruthGeometry) {
    SceneConfig cfg;
    cfg.distance = 0.04;
    cfg.mic_spacing = 0.15;
    const auto s = gen_stereo_audio(cfg);
    EXPECT_NEAR(s.truth.tdoa, 0.15 / 340.0, 1e-15);
    EXPECT_NEAR(s.truth.d_far, 0.19, 1e-15);
    EXPECT_NEAR(s.truth.energy_ratio, 22.5625, 1e-9);
    EXPECT_EQ(s.audio.num_channels(), 2u);
}

TEST(Stereo, InverseSquareEnergyHoldsEmpirically) {
    for (double d : {0.02, 0.04, 0.1, 0.3}) {
        SceneConfig cfg;
        cfg.distance = d;
        cfg.audio_snr_db = 90.0;
        cfg.source_amplitude = 0.1;
        cfg.seed = 5;
        const auto s = gen_stereo_audio(cfg);
        const double lhs = energy(s.audio.channels[0]) * s.truth.d_near * s.truth.d_near;
        const double rhs = energy(s.audio.channels[1]) * s.truth.d_far * s.truth.d_far;
        EXPECT_NEAR(lhs / rhs, 1.0, 0.02) << "distance " << d;
    }
}

TEST(Stereo, EqualDistancesGiveZeroDelayAndEqualEnergy) {
    SceneConfig cfg;
    cfg.mic_spacing = 0.0;
    cfg.audio_snr_db = 90.0;
    const auto s = gen_stereo_audio(cfg);
    EXPECT_EQ(s.truth.tdoa, 0.0);
    EXPECT_EQ(s.truth.energy_ratio, 1.0);
    EXPECT_NEAR(energy(s.audio.channels[0]) / energy(s.audio.channels[1]), 1.0, 1e-3);
}

TEST(Stereo, ZeroDistanceIsConfigError) {
    SceneConfig cfg;
    cfg.distance = 0.0;
    EXPECT_THROW(gen_stereo_audio(cfg), ParameterError);
    EXPECT_THROW(gen_pair(cfg), ParameterError);
}

TEST(Config, ValidationErrors) {
    SceneConfig cfg;
    cfg.words.clear();
    EXPECT_THROW(cfg.validate(), ParameterError);
    cfg = {};
    cfg.words = {{0.0, 0.2}};
    EXPECT_THROW(cfg.validate(), ParameterError);
    DeviceProfile dev;
    dev.coil_gain = -1.0;
    EXPECT_THROW(dev.validate(), ParameterError);
    dev = {};
    dev.falloff_exponent = 5.0;
    EXPECT_THROW(dev.validate(), ParameterError);
}

TEST(Timestamps, StrictlyIncreasingWithinJitter) {
    const auto t = jittered_timestamps(5000, 100.0, 0.004, 11);
    for (std::size_t k = 1; k < t.size(); ++k) {
        EXPECT_GT(t[k], t[k - 1]);
        EXPECT_LE(std::abs(t[k] - static_cast<double>(k) / 100.0), 0.004);
    }
}

CorpusSpec small_spec() {
    CorpusSpec spec;
    spec.users = {"u1", "u2", "u3", "u4"};
    spec.devices = {default_devices().front()};
    spec.commands = 5;
    spec.train_users = {"u1", "u2"};
    spec.test_users = {"u3", "u4"};
    return spec;
}

TEST(Corpus, CountsFollowTheSpec) {
    const auto plan = plan_corpus(small_spec(), 1);
    EXPECT_EQ(plan.size(), 40u);
    std::set<std::string> ids;
    for (const auto& e : plan) ids.insert(e.meta.command_id);
    EXPECT_EQ(ids.size(), 40u);
}

TEST(Corpus, SplitsHaveDisjointUsers) {
    const auto plan = plan_corpus(small_spec(), 1);
    std::set<std::string> train, test;
    for (const auto& e : plan) {
        ASSERT_TRUE(e.split.has_value());
        (*e.split == "train" ? train : test).insert(e.meta.user_id);
    }
    for (const auto& u : train) EXPECT_EQ(test.count(u), 0u);
    EXPECT_EQ(train.size(), 2u);
}

TEST(Corpus, HoldoutDeviceStaysOutOfTraining) {
    auto spec = small_spec();
    spec.devices = default_devices();
    spec.holdout_device = "dev-d";
    for (const auto& e : plan_corpus(spec, 1))
        if (e.meta.device_id == "dev-d") EXPECT_NE(e.split.value_or(""), "train");
}

TEST(Corpus, OverlappingSplitsRejected) {
    auto spec = small_spec();
    spec.test_users.push_back("u1");
    EXPECT_THROW(plan_corpus(spec, 1), ParameterError);
    spec = small_spec();
    spec.users.clear();
    EXPECT_THROW(plan_corpus(spec, 1), ParameterError);
}

TEST(Corpus, SameContentSharesWordCount) {
    for (const auto& a : plan_corpus(small_spec(), 3))
        for (const auto& b : plan_corpus(small_spec(), 4))
            if (a.meta.content_id == b.meta.content_id) EXPECT_EQ(a.config.words.size(), b.config.words.size());
}

TEST(Corpus, DatasetIsByteIdenticalAcrossRuns) {
    testing::TempDir dir;
    auto spec = small_spec();
    spec.users = {"u1", "u3"};
    spec.train_users = {"u1"};
    spec.test_users = {"u3"};
    spec.commands = 2;
    const auto m1 = gen_dataset(spec, 42, dir / "a");
    const auto m2 = gen_dataset(spec, 42, dir / "b");
    EXPECT_EQ(testing::read_bytes(m1), testing::read_bytes(m2));
    const auto manifest = load_manifest(m1);
    EXPECT_EQ(manifest.entries.size(), 8u);
    for (const auto& e : manifest.entries) {
        const auto rel_t = std::filesystem::relative(e.trace_path, dir / "a");
        const auto rel_a = std::filesystem::relative(e.audio_path, dir / "a");
        EXPECT_EQ(testing::read_bytes(dir / "a" / rel_t), testing::read_bytes(dir / "b" / rel_t));
        EXPECT_EQ(testing::read_bytes(dir / "a" / rel_a), testing::read_bytes(dir / "b" / rel_a));
    }
}

TEST(Corpus, SpecFileParses) {
    testing::TempDir dir;
    testing::write_text(dir / "spec.json",
                        R"({"num_users": 3, "num_devices": 2, "commands": 2, "train_users": ["user1"],
                            "test_users": ["user2", "user3"], "holdout_device": "dev-b"})");
    const auto spec = CorpusSpec::from_json_file(dir / "spec.json");
    EXPECT_EQ(spec.users.size(), 3u);
    EXPECT_EQ(spec.devices.size(), 2u);
    EXPECT_EQ(plan_corpus(spec, 1).size(), 2u * 3u * 2u * 2u);
    EXPECT_THROW(CorpusSpec::from_json_file(dir / "missing.json"), ResolutionError);
}

}  // namespace
}  // namespace maglive::synth
