#include "maglive/nn/checkpoint.hpp"

#include "maglive/error.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace maglive::nn {

namespace {

template <typename T>
void put_le(std::string& out, T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
    std::string out = "MLCK";
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (element_count(t.shape) != t.values.size()) throw ShapeError("checkpoint tensor '" + t.name + "' shape");
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) put_le<std::uint64_t>(out, d);
        for (double v : t.values) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_le<std::uint64_t>(out, bits);
        }
    }
    return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.get_string(4) != "MLCK") throw FormatError("not a checkpoint (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>();
    std::vector<NamedTensor> tensors(count);
    for (auto& t : tensors) {
        t.name = r.get_string(r.get<std::uint32_t>());
        t.shape.resize(r.get<std::uint32_t>());
        for (auto& d : t.shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
        t.values.resize(element_count(t.shape));
        for (double& v : t.values) {
            const auto bits = r.get<std::uint64_t>();
            std::memcpy(&v, &bits, 8);
        }
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint");
    return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Parameter*>& params) {
    std::vector<NamedTensor> tensors;
    tensors.reserve(params.size());
    for (const auto* p : params)
        tensors.push_back({p->name, p->tensor.shape(), {p->tensor.values().begin(), p->tensor.values().end()}});
    const std::string bytes = encode_checkpoint(tensors);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ResolutionError("cannot write checkpoint " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ResolutionError("failed writing checkpoint " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ResolutionError("cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::map<std::string, NamedTensor> by_name;
    for (auto& t : decode_checkpoint(bytes)) by_name.emplace(t.name, std::move(t));
    for (auto* p : params) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw FormatError("checkpoint lacks parameter '" + p->name + "'");
        if (it->second.shape != p->tensor.shape())
            throw ShapeError("checkpoint parameter '" + p->name + "' has shape " + to_string(it->second.shape) +
                             ", model expects " + to_string(p->tensor.shape()));
        std::copy(it->second.values.begin(), it->second.values.end(), p->tensor.mutable_values().begin());
    }
}

}  // namespace maglive::nn
