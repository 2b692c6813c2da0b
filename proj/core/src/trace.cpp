#include "maglive/trace.hpp"

#include "maglive/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace maglive {

namespace fs = std::filesystem;

std::string to_string(Label label) {
    return label == Label::human ? "human" : "loudspeaker";
}

Label parse_label(const std::string& text) {
    if (text == "human") return Label::human;
    if (text == "loudspeaker" || text == "spoof") return Label::loudspeaker;
    throw ValidationError("unknown label '" + text + "'");
}

void validate(const SensorTrace& trace) {
    if (trace.timestamps.size() != trace.samples.size())
        throw ValidationError("trace timestamps and samples differ in length");
    if (trace.size() < 2) throw ValidationError("trace needs at least 2 samples");
    if (!(trace.nominal_rate > 0)) throw ValidationError("trace nominal rate must be positive");
    for (std::size_t i = 1; i < trace.size(); ++i) {
        if (!(trace.timestamps[i] > trace.timestamps[i - 1])) {
            throw ValidationError("non-increasing timestamp at sample " + std::to_string(i) + " (t = " +
                                  std::to_string(trace.timestamps[i]) + ")");
        }
    }
}

std::vector<double> AudioClip::downmix() const {
    if (channels.empty()) return {};
    if (channels.size() == 1) return channels.front();
    std::vector<double> mono(num_frames(), 0.0);
    for (const auto& ch : channels)
        for (std::size_t i = 0; i < mono.size(); ++i) mono[i] += ch[i];
    const double scale = 1.0 / static_cast<double>(channels.size());
    for (double& v : mono) v *= scale;
    return mono;
}

void validate(const AudioClip& clip) {
    if (!(clip.sample_rate > 0)) throw FormatError("audio sample rate must be positive");
    if (clip.channels.empty() || clip.channels.size() > 2)
        throw FormatError("audio must have 1 or 2 channels, got " + std::to_string(clip.channels.size()));
    for (const auto& ch : clip.channels)
        if (ch.size() != clip.channels.front().size()) throw FormatError("audio channels differ in length");
}

// ---------------------------------------------------------------------------
// Trace CSV

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, std::size_t line) {
    const std::string t = trim(text);
    if (t.empty()) throw ParseError("empty field", line);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v))
        throw ParseError("malformed number '" + t + "'", line);
    return v;
}

}  // namespace

SensorTrace load_trace(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ResolutionError("cannot open trace file " + path.string());

    SensorTrace trace;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_csv(line);
        if (!header_seen) {
            header_seen = true;
            if (fields.size() != 4 || trim(fields[0]) != "t" || trim(fields[1]) != "mx" || trim(fields[2]) != "my" ||
                trim(fields[3]) != "mz")
                throw ParseError("expected header 't,mx,my,mz'", line_no);
            continue;
        }
        if (fields.size() != 4)
            throw ParseError("expected 4 fields, got " + std::to_string(fields.size()), line_no);
        trace.timestamps.push_back(parse_double(fields[0], line_no));
        trace.samples.push_back(
            {parse_double(fields[1], line_no), parse_double(fields[2], line_no), parse_double(fields[3], line_no)});
    }
    if (!header_seen) throw ParseError("missing header", 1);

    validate(trace);
    const double t0 = trace.timestamps.front();
    for (double& t : trace.timestamps) t -= t0;
    trace.nominal_rate = std::round(static_cast<double>(trace.size() - 1) / trace.duration());
    return trace;
}

void write_trace(const fs::path& path, const SensorTrace& trace) {
    validate(trace);
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw ResolutionError("cannot write trace file " + path.string());
    std::fputs("t,mx,my,mz\n", f);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& s = trace.samples[i];
        std::fprintf(f, "%.6f,%.6f,%.6f,%.6f\n", trace.timestamps[i], s.x, s.y, s.z);
    }
    if (std::fclose(f) != 0) throw ResolutionError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// WAV

namespace {

std::uint32_t read_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

AudioClip load_audio(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ResolutionError("cannot open audio file " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
        std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE")
        throw FormatError(path.string() + ": not a RIFF/WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::string id(bytes.begin() + pos, bytes.begin() + pos + 4);
        const std::uint32_t len = read_u32(&bytes[pos + 4]);
        const std::size_t body = pos + 8;
        if (body + len > bytes.size()) throw FormatError(path.string() + ": truncated chunk '" + id + "'");
        if (id == "fmt ") {
            if (len < 16) throw FormatError(path.string() + ": short fmt chunk");
            format = read_u16(&bytes[body]);
            channels = read_u16(&bytes[body + 2]);
            rate = read_u32(&bytes[body + 4]);
            bits = read_u16(&bytes[body + 14]);
        } else if (id == "data") {
            data = &bytes[body];
            data_len = len;
        }
        pos = body + len + (len & 1u);
    }
    if (format != 1) throw FormatError(path.string() + ": only PCM WAV is supported");
    if (bits != 16) throw FormatError(path.string() + ": unsupported bit depth " + std::to_string(bits));
    if (channels != 1 && channels != 2)
        throw FormatError(path.string() + ": unsupported channel count " + std::to_string(channels));
    if (rate == 0) throw FormatError(path.string() + ": zero sample rate");
    if (!data) throw FormatError(path.string() + ": missing data chunk");

    AudioClip clip;
    clip.sample_rate = rate;
    const std::size_t frames = data_len / (2u * channels);
    clip.channels.assign(channels, std::vector<double>(frames));
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * (i * channels + c)));
            clip.channels[c][i] = static_cast<double>(raw) / 32768.0;
        }
    }
    return clip;
}

void write_audio(const fs::path& path, const AudioClip& clip) {
    validate(clip);
    const auto channels = static_cast<std::uint16_t>(clip.num_channels());
    const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
    const std::size_t frames = clip.num_frames();
    const auto data_len = static_cast<std::uint32_t>(frames * channels * 2);

    std::string out;
    out.reserve(44 + data_len);
    out += "RIFF";
    put_u32(out, 36 + data_len);
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, 1);
    put_u16(out, channels);
    put_u32(out, rate);
    put_u32(out, rate * channels * 2);
    put_u16(out, static_cast<std::uint16_t>(channels * 2));
    put_u16(out, 16);
    out += "data";
    put_u32(out, data_len);
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double v = std::clamp(clip.channels[c][i], -1.0, 1.0);
            const long q = std::clamp(std::lround(v * 32768.0), -32768L, 32767L);
            put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ResolutionError("cannot write audio file " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ResolutionError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ResolutionError("cannot open manifest " + path.string());
    const fs::path base = path.parent_path();

    DatasetManifest manifest;
    std::vector<std::string> missing;
    std::set<std::pair<std::string, std::string>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("malformed manifest line: ") + e.what(), line_no);
        }
        ManifestEntry entry;
        try {
            entry.trace_path = j.at("trace").get<std::string>();
            entry.audio_path = j.at("audio").get<std::string>();
            entry.meta.label = parse_label(j.at("label").get<std::string>());
            entry.meta.user_id = j.at("user").get<std::string>();
            entry.meta.device_id = j.at("device").get<std::string>();
            entry.meta.content_id = j.at("content").get<std::string>();
            entry.meta.command_id = j.at("command").get<std::string>();
            if (j.contains("split")) entry.split = j.at("split").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("manifest entry missing or mistyped key: ") + e.what(), line_no);
        }
        if (entry.trace_path.is_relative()) entry.trace_path = base / entry.trace_path;
        if (entry.audio_path.is_relative()) entry.audio_path = base / entry.audio_path;
        if (!seen.emplace(entry.trace_path.string(), entry.audio_path.string()).second)
            throw ValidationError("duplicate manifest entry at line " + std::to_string(line_no));
        for (const auto& p : {entry.trace_path, entry.audio_path})
            if (!fs::exists(p)) missing.push_back(p.string());

        ++manifest.summary.per_label[to_string(entry.meta.label)];
        ++manifest.summary.per_user[entry.meta.user_id];
        ++manifest.summary.per_device[entry.meta.device_id];
        manifest.entries.push_back(std::move(entry));
    }
    if (!missing.empty()) {
        std::string msg = "manifest references missing files:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw ResolutionError(msg);
    }
    return manifest;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw ResolutionError("cannot write manifest " + path.string());
    const fs::path base = path.parent_path();
    for (const auto& e : entries) {
        nlohmann::ordered_json j;
        j["trace"] = e.trace_path.is_absolute() ? fs::relative(e.trace_path, base).generic_string()
                                                : e.trace_path.generic_string();
        j["audio"] = e.audio_path.is_absolute() ? fs::relative(e.audio_path, base).generic_string()
                                                : e.audio_path.generic_string();
        j["label"] = to_string(e.meta.label);
        j["user"] = e.meta.user_id;
        j["device"] = e.meta.device_id;
        j["content"] = e.meta.content_id;
        j["command"] = e.meta.command_id;
        if (e.split) j["split"] = *e.split;
        out << j.dump() << '\n';
    }
    if (!out) throw ResolutionError("failed writing " + path.string());
}

RecordingPair load_pair(const ManifestEntry& entry) {
    RecordingPair pair;
    pair.trace = load_trace(entry.trace_path);
    pair.audio = load_audio(entry.audio_path);
    pair.meta = entry.meta;
    return pair;
}

}  // namespace maglive
