#include "maglive/model.hpp"

#include "maglive/error.hpp"
#include "maglive/nn/checkpoint.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace maglive::model {

using namespace maglive::nn;

double Initializer::unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

std::vector<double> Initializer::uniform(std::size_t count, double limit) {
    std::vector<double> v(count);
    for (double& x : v) x = (2.0 * unit() - 1.0) * limit;
    return v;
}

DenseLayer::DenseLayer(const std::string& name, std::size_t in, std::size_t out, Initializer& init) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    weights = {name + ".weights", Tensor::from({in, out}, init.uniform(in * out, limit), true)};
    bias = {name + ".bias", Tensor::zeros({out}, true)};
}

BatchNormLayer::BatchNormLayer(const std::string& name, std::size_t channels) {
    gamma = {name + ".gamma", Tensor::from({channels}, std::vector<double>(channels, 1.0), true)};
    beta = {name + ".beta", Tensor::zeros({channels}, true)};
    running_mean = {name + ".running_mean", Tensor::zeros({channels}), false};
    running_var = {name + ".running_var", Tensor::from({channels}, std::vector<double>(channels, 1.0)), false};
}

ConvLayer::ConvLayer(const std::string& name, std::size_t k, std::size_t kernel_w, std::size_t cin,
                     std::size_t cout, Initializer& init) {
    const std::size_t area = kernel_w ? k * kernel_w : k;
    const double limit = std::sqrt(6.0 / static_cast<double>(area * (cin + cout)));
    Shape shape = kernel_w ? Shape{k, kernel_w, cin, cout} : Shape{k, cin, cout};
    kernels = {name + ".kernels", Tensor::from(shape, init.uniform(area * cin * cout, limit), true)};
    bias = {name + ".bias", Tensor::zeros({cout}, true)};
}

SafBlock::SafBlock(Initializer& init) : fc1("saf.fc1", 2, 8, init), fc2("saf.fc2", 8, 2, init) {}

SafOutput saf_fuse(const Tensor& branch1, const Tensor& branch2, const SafBlock& saf) {
    if (branch1.rank() != 2 || branch2.rank() != 2 || branch1.shape() != branch2.shape())
        throw ShapeError("saf_fuse: branches must share shape (N, D)");
    const Tensor squeeze = concat_features(mean_features(branch1), mean_features(branch2));
    const Tensor weights = sigmoid(saf.fc2.forward(relu(saf.fc1.forward(squeeze))));
    const Tensor fused = concat_features(scale_rows(branch1, select_column(weights, 0)),
                                         scale_rows(branch2, select_column(weights, 1)));
    return {weights, fused};
}

// ---------------------------------------------------------------------------

FeatureExtractor::FeatureExtractor(std::uint64_t seed) {
    Initializer init(seed);
    const std::size_t s1_channels[4] = {1, 16, 32, 16};
    for (std::size_t i = 0; i < 3; ++i) {
        const std::string name = "submodel1.conv" + std::to_string(i + 1);
        s1_conv[i] = ConvLayer(name, 3, 0, s1_channels[i], s1_channels[i + 1], init);
        s1_bn[i] = BatchNormLayer("submodel1.bn" + std::to_string(i + 1), s1_channels[i + 1]);
    }
    s1_fc = DenseLayer("submodel1.fc", 47 * 16, 64, init);

    const std::size_t s2_channels[3] = {2, 16, 32};
    for (std::size_t i = 0; i < 2; ++i) {
        s2_conv[i] = ConvLayer("submodel2.conv" + std::to_string(i + 1), 3, 3, s2_channels[i], s2_channels[i + 1], init);
        s2_bn[i] = BatchNormLayer("submodel2.bn" + std::to_string(i + 1), s2_channels[i + 1]);
    }
    s2_fc = DenseLayer("submodel2.fc", 2 * 15 * 32, 64, init);
    saf_ = SafBlock(init);
}

void FeatureExtractor::Trace::record(const Tensor& t) const {
    if (!shapes) return;
    shapes->emplace_back(t.shape().begin() + 1, t.shape().end());
}

Tensor FeatureExtractor::submodel1(const Tensor& x, bool training, const Trace& trace) {
    Tensor h = x;
    for (std::size_t i = 0; i < 3; ++i) {
        h = conv1d(h, s1_conv[i].kernels.tensor, s1_conv[i].bias.tensor);
        h = relu(s1_bn[i].forward(h, training));
        trace.record(h);
    }
    h = pool1d(h, PoolKind::avg, 2);
    trace.record(h);
    h = relu(s1_fc.forward(flatten(h)));
    trace.record(h);
    return h;
}

Tensor FeatureExtractor::submodel2(const Tensor& x, bool training, const Trace& trace) {
    Tensor h = x;
    for (std::size_t i = 0; i < 2; ++i) {
        h = relu(conv2d(h, s2_conv[i].kernels.tensor, s2_conv[i].bias.tensor));
        trace.record(h);
        h = s2_bn[i].forward(pool2d(h, PoolKind::max, 2), training);
        trace.record(h);
    }
    h = relu(s2_fc.forward(flatten(h)));
    trace.record(h);
    return h;
}

BranchOutputs FeatureExtractor::forward(const Tensor& envelope, const Tensor& spectrogram, bool training) {
    if (envelope.rank() != 3 || envelope.dim(1) != dsp::kSegmentLength || envelope.dim(2) != 1)
        throw ShapeError("extractor: envelope must be (N, 100, 1), got " + to_string(envelope.shape()));
    if (spectrogram.rank() != 4 || spectrogram.dim(1) != dsp::kStftBins || spectrogram.dim(2) != dsp::kStftFrames ||
        spectrogram.dim(3) != 2)
        throw ShapeError("extractor: spectrogram must be (N, 17, 69, 2), got " + to_string(spectrogram.shape()));
    if (envelope.dim(0) != spectrogram.dim(0)) throw ShapeError("extractor: batch sizes differ");

    BranchOutputs out;
    out.branch1 = submodel1(envelope, training, {});
    out.branch2 = submodel2(spectrogram, training, {});
    auto fused = saf_fuse(out.branch1, out.branch2, saf_);
    out.saf_weights = fused.weights;
    out.features = fused.fused;
    return out;
}

std::vector<LayerReport> FeatureExtractor::param_report() {
    std::vector<Shape> s1, s2;
    submodel1(Tensor::zeros({1, dsp::kSegmentLength, 1}), false, {&s1});
    submodel2(Tensor::zeros({1, dsp::kStftBins, dsp::kStftFrames, 2}), false, {&s2});

    std::vector<LayerReport> rows;
    for (int i = 0; i < 3; ++i)
        rows.push_back({"Submodel1", i + 1, "Conv1D + BN + ReLU", s1[i], s1_conv[i].count() + s1_bn[i].count()});
    rows.push_back({"Submodel1", 4, "Pooling", s1[3], 0});
    rows.push_back({"Submodel1", 5, "Flatten + FC + ReLU", s1[4], s1_fc.count()});
    rows.push_back({"Submodel2", 1, "Conv2D + ReLU", s2[0], s2_conv[0].count()});
    rows.push_back({"Submodel2", 2, "Pooling + BN", s2[1], s2_bn[0].count()});
    rows.push_back({"Submodel2", 3, "Conv2D + ReLU", s2[2], s2_conv[1].count()});
    rows.push_back({"Submodel2", 4, "Pooling + BN", s2[3], s2_bn[1].count()});
    rows.push_back({"Submodel2", 5, "Flatten + FC + ReLU", s2[4], s2_fc.count()});
    return rows;
}

std::vector<Parameter*> FeatureExtractor::parameters() {
    std::vector<Parameter*> out;
    for (std::size_t i = 0; i < 3; ++i) {
        out.insert(out.end(), {&s1_conv[i].kernels, &s1_conv[i].bias, &s1_bn[i].gamma, &s1_bn[i].beta,
                               &s1_bn[i].running_mean, &s1_bn[i].running_var});
    }
    out.insert(out.end(), {&s1_fc.weights, &s1_fc.bias});
    for (std::size_t i = 0; i < 2; ++i) {
        out.insert(out.end(), {&s2_conv[i].kernels, &s2_conv[i].bias, &s2_bn[i].gamma, &s2_bn[i].beta,
                               &s2_bn[i].running_mean, &s2_bn[i].running_var});
    }
    out.insert(out.end(), {&s2_fc.weights, &s2_fc.bias, &saf_.fc1.weights, &saf_.fc1.bias, &saf_.fc2.weights,
                           &saf_.fc2.bias});
    return out;
}

std::vector<Parameter*> FeatureExtractor::trainable() {
    auto all = parameters();
    std::erase_if(all, [](const Parameter* p) { return !p->trainable; });
    return all;
}

// ---------------------------------------------------------------------------

ProjectionHead::ProjectionHead(Initializer& init) : fc("projection.fc", 128, 64, init) {}

ProjectionOutput project(const Tensor& h, const ProjectionHead& head) {
    ProjectionOutput out;
    out.z = l2_normalize_rows(relu(head.fc.forward(h)), &out.degenerate_rows);
    return out;
}

ClassifierHead::ClassifierHead(Initializer& init)
    : fc1("classifier.fc1", 128, 32, init), fc2("classifier.fc2", 32, 1, init) {}

Tensor classify(const Tensor& h, const ClassifierHead& head) {
    return sigmoid(head.fc2.forward(relu(head.fc1.forward(h))));
}

// ---------------------------------------------------------------------------

namespace {

// Sub-seeds keep the extractor's initial weights independent of whether the
// heads exist.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

MagLiveModel::MagLiveModel(std::uint64_t seed) : extractor(sub_seed(seed, 0)) {
    Initializer proj_init(sub_seed(seed, 1));
    projection = ProjectionHead(proj_init);
    Initializer cls_init(sub_seed(seed, 2));
    classifier = ClassifierHead(cls_init);
}

std::vector<Parameter*> MagLiveModel::parameters() {
    auto out = extractor.parameters();
    out.insert(out.end(), {&projection.fc.weights, &projection.fc.bias, &classifier.fc1.weights,
                           &classifier.fc1.bias, &classifier.fc2.weights, &classifier.fc2.bias});
    return out;
}

std::vector<const Parameter*> MagLiveModel::parameters() const {
    auto mut = const_cast<MagLiveModel*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::vector<Parameter*> MagLiveModel::extractor_trainable() {
    auto out = extractor.trainable();
    out.insert(out.end(), {&projection.fc.weights, &projection.fc.bias});
    return out;
}

std::vector<Parameter*> MagLiveModel::classifier_trainable() {
    return {&classifier.fc1.weights, &classifier.fc1.bias, &classifier.fc2.weights, &classifier.fc2.bias};
}

void MagLiveModel::save(const std::filesystem::path& path) const { save_checkpoint(path, parameters()); }

void MagLiveModel::load(const std::filesystem::path& path) { load_checkpoint(path, parameters()); }

std::vector<std::vector<double>> MagLiveModel::features(std::span<const dsp::FeatureTensor> inputs) {
    if (inputs.empty()) return {};
    const auto out = extractor.forward(envelope_batch(inputs), spectrogram_batch(inputs), false);
    std::vector<std::vector<double>> rows(inputs.size());
    const std::size_t d = out.features.dim(1);
    for (std::size_t r = 0; r < rows.size(); ++r)
        rows[r].assign(out.features.values().begin() + static_cast<std::ptrdiff_t>(r * d),
                       out.features.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
    return rows;
}

std::vector<double> MagLiveModel::scores(std::span<const dsp::FeatureTensor> inputs) {
    if (inputs.empty()) return {};
    const auto out = extractor.forward(envelope_batch(inputs), spectrogram_batch(inputs), false);
    const auto p = classify(out.features, classifier);
    return {p.values().begin(), p.values().end()};
}

// ---------------------------------------------------------------------------

Tensor envelope_batch(std::span<const dsp::FeatureTensor> inputs) {
    std::vector<double> v;
    v.reserve(inputs.size() * dsp::kSegmentLength);
    for (const auto& x : inputs) {
        if (x.envelope.size() != dsp::kSegmentLength) throw ShapeError("envelope must have 100 samples");
        v.insert(v.end(), x.envelope.begin(), x.envelope.end());
    }
    return Tensor::from({inputs.size(), dsp::kSegmentLength, 1}, std::move(v));
}

Tensor spectrogram_batch(std::span<const dsp::FeatureTensor> inputs) {
    std::vector<double> v;
    v.reserve(inputs.size() * dsp::kSpectrogramSize);
    for (const auto& x : inputs) {
        if (x.spectrogram.size() != dsp::kSpectrogramSize) throw ShapeError("spectrogram must be (17, 69, 2)");
        v.insert(v.end(), x.spectrogram.begin(), x.spectrogram.end());
    }
    return Tensor::from({inputs.size(), dsp::kStftBins, dsp::kStftFrames, 2}, std::move(v));
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ShapeError("empty row set");
    const std::size_t d = rows.front().size();
    std::vector<double> v;
    v.reserve(rows.size() * d);
    for (const auto& r : rows) {
        if (r.size() != d) throw ShapeError("ragged rows");
        v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor::from({rows.size(), d}, std::move(v));
}

std::vector<double> extract_features(const dsp::FeatureTensor& x, FeatureExtractor& model) {
    std::span<const dsp::FeatureTensor> one(&x, 1);
    const auto out = model.forward(envelope_batch(one), spectrogram_batch(one), false);
    return {out.features.values().begin(), out.features.values().end()};
}

void verify_assembly(const std::vector<LayerReport>& report) {
    if (report.size() != std::size(kExpectedParams))
        throw AssemblyError("expected 10 layer rows, got " + std::to_string(report.size()));
    for (std::size_t i = 0; i < report.size(); ++i) {
        if (report[i].params != kExpectedParams[i])
            throw AssemblyError(report[i].model + " layer " + std::to_string(report[i].layer) + " has " +
                                std::to_string(report[i].params) + " parameters, expected " +
                                std::to_string(kExpectedParams[i]));
    }
}

std::string format_report(const std::vector<LayerReport>& report) {
    std::ostringstream os;
    os << std::left << std::setw(11) << "Model" << std::setw(7) << "Layer" << std::setw(22) << "Layer type"
       << std::setw(14) << "Output shape" << std::right << std::setw(9) << "# Param" << '\n';
    for (const auto& r : report) {
        std::string count = std::to_string(r.params);
        if (count.size() > 3) count.insert(count.size() - 3, ",");
        os << std::left << std::setw(11) << r.model << std::setw(7) << r.layer << std::setw(22) << r.type
           << std::setw(14) << to_string(r.output_shape) << std::right << std::setw(9) << count << '\n';
    }
    return os.str();
}

}  // namespace maglive::model
