#include "maglive/error.hpp"
#include "maglive/synth.hpp"
#include "maglive/trace.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <random>

namespace maglive {
namespace {

using testing::TempDir;
using testing::write_text;

// Minimal RIFF/WAVE writer so format errors can be provoked on purpose.
std::string wav_bytes(std::uint16_t channels, std::uint16_t bits, std::uint32_t rate,
                      const std::vector<std::int16_t>& samples) {
    auto u32 = [](std::string& s, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    auto u16 = [](std::string& s, std::uint16_t v) {
        s.push_back(static_cast<char>(v & 0xff));
        s.push_back(static_cast<char>(v >> 8));
    };
    const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
    std::string s = "RIFF";
    u32(s, 36 + data_len);
    s += "WAVEfmt ";
    u32(s, 16);
    u16(s, 1);
    u16(s, channels);
    u32(s, rate);
    u32(s, rate * channels * bits / 8);
    u16(s, static_cast<std::uint16_t>(channels * bits / 8));
    u16(s, bits);
    s += "data";
    u32(s, data_len);
    for (auto v : samples) u16(s, static_cast<std::uint16_t>(v));
    return s;
}

TEST(TraceLoad, ThreeRowsGiveLengthThreeAtHundredHertz) {
    TempDir dir;
    write_text(dir / "t.csv", "t,mx,my,mz\n0.00,1,2,3\n0.01,1,2,3\n0.02,1,2,3\n");
    const auto trace = load_trace(dir / "t.csv");
    EXPECT_EQ(trace.size(), 3u);
    EXPECT_DOUBLE_EQ(trace.nominal_rate, 100.0);
}

TEST(TraceLoad, DuplicateTimestampIsValidationError) {
    TempDir dir;
    write_text(dir / "t.csv", "t,mx,my,mz\n0.00,1,2,3\n0.01,1,2,3\n0.01,1,2,3\n");
    EXPECT_THROW(load_trace(dir / "t.csv"), ValidationError);
}

TEST(TraceLoad, MalformedRowReportsItsLine) {
    TempDir dir;
    write_text(dir / "t.csv", "t,mx,my,mz\n0.00,1,2,3\n0.01,1,x,3\n");
    try {
        load_trace(dir / "t.csv");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(TraceLoad, TimestampsAreRebasedToZero) {
    TempDir dir;
    write_text(dir / "t.csv", "t,mx,my,mz\n5.00,1,2,3\n5.01,1,2,3\n5.02,1,2,3\n");
    const auto trace = load_trace(dir / "t.csv");
    EXPECT_DOUBLE_EQ(trace.timestamps.front(), 0.0);
    EXPECT_NEAR(trace.timestamps.back(), 0.02, 1e-12);
}

TEST(TraceLoad, TenSecondGeneratorOutputHasThousandSamples) {
    TempDir dir;
    synth::SceneConfig cfg;
    cfg.words = {{0.5, 0.5}};
    cfg.lead_in = 4.5;
    cfg.tail = 4.5;  // 4.5 + 0.5 + 0.5 + 4.5 = 10 s
    cfg.audio_rate = 8000;
    cfg.stereo = false;
    const auto scene = synth::gen_pair(cfg);
    write_trace(dir / "g.csv", scene.pair.trace);
    const auto trace = load_trace(dir / "g.csv");
    // Samples at k / 100 for k = 0..1000 span exactly 10 s; length = duration x rate.
    EXPECT_NEAR(static_cast<double>(trace.size()), 10.0 * 100.0, 1.0);
    EXPECT_DOUBLE_EQ(trace.nominal_rate, 100.0);
}

TEST(TraceRoundTrip, WithinSixDecimals) {
    TempDir dir;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-60, 60);
    SensorTrace trace;
    for (int i = 0; i < 50; ++i) {
        trace.timestamps.push_back(i * 0.01 + 0.0001 * (i % 3));
        trace.samples.push_back({u(rng), u(rng), u(rng)});
    }
    write_trace(dir / "r.csv", trace);
    const auto back = load_trace(dir / "r.csv");
    ASSERT_EQ(back.size(), trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        EXPECT_NEAR(back.timestamps[i], trace.timestamps[i], 1e-6);
        EXPECT_NEAR(back.samples[i].x, trace.samples[i].x, 1e-6);
        EXPECT_NEAR(back.samples[i].y, trace.samples[i].y, 1e-6);
        EXPECT_NEAR(back.samples[i].z, trace.samples[i].z, 1e-6);
    }
}

TEST(AudioLoad, OneSecondMonoSilence) {
    TempDir dir;
    write_text(dir / "s.wav", wav_bytes(1, 16, 44100, std::vector<std::int16_t>(44100, 0)));
    const auto clip = load_audio(dir / "s.wav");
    ASSERT_EQ(clip.num_channels(), 1u);
    EXPECT_EQ(clip.num_frames(), 44100u);
    EXPECT_DOUBLE_EQ(clip.sample_rate, 44100.0);
    for (double v : clip.channels[0]) ASSERT_EQ(v, 0.0);
}

TEST(AudioLoad, StereoChannelsHaveEqualLength) {
    TempDir dir;
    write_text(dir / "s.wav", wav_bytes(2, 16, 16000, {1, 2, 3, 4, 5, 6}));
    const auto clip = load_audio(dir / "s.wav");
    ASSERT_EQ(clip.num_channels(), 2u);
    EXPECT_EQ(clip.channels[0].size(), 3u);
    EXPECT_EQ(clip.channels[1].size(), 3u);
    EXPECT_DOUBLE_EQ(clip.channels[1][0], 2.0 / 32768.0);
}

TEST(AudioLoad, MostNegativeSampleIsMinusOne) {
    TempDir dir;
    write_text(dir / "s.wav", wav_bytes(1, 16, 8000, {-32768, 32767}));
    const auto clip = load_audio(dir / "s.wav");
    EXPECT_EQ(clip.channels[0][0], -1.0);
}

TEST(AudioLoad, UnsupportedLayoutsAreFormatErrors) {
    TempDir dir;
    write_text(dir / "b8.wav", wav_bytes(1, 8, 8000, {0, 0}));
    EXPECT_THROW(load_audio(dir / "b8.wav"), FormatError);
    write_text(dir / "c3.wav", wav_bytes(3, 16, 8000, {0, 0, 0}));
    EXPECT_THROW(load_audio(dir / "c3.wav"), FormatError);
    write_text(dir / "junk.wav", "not a wave file at all");
    EXPECT_THROW(load_audio(dir / "junk.wav"), FormatError);
}

TEST(AudioRoundTrip, QuantizationErrorWithinOneLsb) {
    TempDir dir;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    AudioClip clip;
    clip.sample_rate = 22050;
    clip.channels.assign(2, std::vector<double>(1000));
    for (auto& ch : clip.channels)
        for (double& v : ch) v = u(rng);
    write_audio(dir / "a.wav", clip);
    const auto once = load_audio(dir / "a.wav");
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 1000; ++i) EXPECT_LE(std::abs(once.channels[c][i] - clip.channels[c][i]), 0x1.0p-15);
    // A second pass through the format changes nothing.
    write_audio(dir / "b.wav", once);
    const auto twice = load_audio(dir / "b.wav");
    EXPECT_EQ(twice.channels, once.channels);
}

class ManifestTest : public ::testing::Test {
protected:
    void SetUp() override {
        SensorTrace t;
        t.timestamps = {0.0, 0.01};
        t.samples = {{1, 2, 3}, {1, 2, 3}};
        write_trace(dir / "t1.csv", t);
        write_trace(dir / "t2.csv", t);
        AudioClip a;
        a.sample_rate = 8000;
        a.channels = {std::vector<double>(100, 0.0)};
        write_audio(dir / "a1.wav", a);
        write_audio(dir / "a2.wav", a);
    }
    TempDir dir;
};

TEST_F(ManifestTest, EmptyFileGivesEmptyManifest) {
    write_text(dir / "m.jsonl", "");
    const auto m = load_manifest(dir / "m.jsonl");
    EXPECT_TRUE(m.entries.empty());
    EXPECT_TRUE(m.summary.per_label.empty());
}

TEST_F(ManifestTest, CountsPerLabel) {
    std::string text;
    const char* rows[][3] = {{"t1.csv", "a1.wav", "human"},
                             {"t2.csv", "a2.wav", "human"},
                             {"t1.csv", "a2.wav", "loudspeaker"},
                             {"t2.csv", "a1.wav", "loudspeaker"}};
    for (const auto& r : rows)
        text += std::string(R"({"trace":")") + r[0] + R"(","audio":")" + r[1] + R"(","label":")" + r[2] +
                R"(","user":"u1","device":"d1","content":"c1","command":"x"})" + "\n";
    write_text(dir / "m.jsonl", text);
    const auto m = load_manifest(dir / "m.jsonl");
    EXPECT_EQ(m.entries.size(), 4u);
    EXPECT_EQ(m.summary.per_label.at("human"), 2u);
    EXPECT_EQ(m.summary.per_label.at("loudspeaker"), 2u);
    EXPECT_EQ(m.summary.per_user.at("u1"), 4u);
}

TEST_F(ManifestTest, MissingFilesAreAllNamed) {
    write_text(dir / "m.jsonl",
               R"({"trace":"absent1.csv","audio":"a1.wav","label":"human","user":"u","device":"d","content":"c","command":"1"})"
               "\n"
               R"({"trace":"absent2.csv","audio":"a2.wav","label":"human","user":"u","device":"d","content":"c","command":"2"})"
               "\n");
    try {
        load_manifest(dir / "m.jsonl");
        FAIL() << "expected a resolution error";
    } catch (const ResolutionError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("absent1.csv"), std::string::npos);
        EXPECT_NE(what.find("absent2.csv"), std::string::npos);
    }
}

TEST_F(ManifestTest, DuplicatePairIsRejected) {
    const std::string row =
        R"({"trace":"t1.csv","audio":"a1.wav","label":"human","user":"u","device":"d","content":"c","command":"1"})";
    write_text(dir / "m.jsonl", row + "\n" + row + "\n");
    EXPECT_THROW(load_manifest(dir / "m.jsonl"), ValidationError);
}

TEST_F(ManifestTest, WriteThenLoadKeepsMetadataAndSplit) {
    ManifestEntry e;
    e.trace_path = "t1.csv";
    e.audio_path = "a1.wav";
    e.meta = {Label::loudspeaker, "u7", "dev-x", "cmd03", "id-1"};
    e.split = "test";
    write_manifest(dir / "m.jsonl", {e});
    const auto m = load_manifest(dir / "m.jsonl");
    ASSERT_EQ(m.entries.size(), 1u);
    EXPECT_EQ(m.entries[0].meta.label, Label::loudspeaker);
    EXPECT_EQ(m.entries[0].meta.device_id, "dev-x");
    EXPECT_EQ(m.entries[0].split, std::optional<std::string>("test"));
    EXPECT_NO_THROW(load_pair(m.entries[0]));
}

}  // namespace
}  // namespace maglive
