#pragma once

#include "maglive/dsp.hpp"
#include "maglive/nn/ops.hpp"
#include "maglive/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace maglive::model {

using nn::Parameter;
using nn::Tensor;

// Xavier-uniform initializer with a portable bit-to-double mapping.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}
    std::vector<double> uniform(std::size_t count, double limit);
    double unit();  // [0, 1)

private:
    std::mt19937_64 rng_;
};

struct DenseLayer {
    Parameter weights, bias;

    DenseLayer() = default;
    DenseLayer(const std::string& name, std::size_t in, std::size_t out, Initializer& init);
    Tensor forward(const Tensor& x) const { return nn::dense(x, weights.tensor, bias.tensor); }
    std::size_t count() const { return weights.count() + bias.count(); }
};

struct BatchNormLayer {
    Parameter gamma, beta, running_mean, running_var;

    BatchNormLayer() = default;
    BatchNormLayer(const std::string& name, std::size_t channels);
    Tensor forward(const Tensor& x, bool training) {
        return nn::batchnorm(x, gamma.tensor, beta.tensor, running_mean.tensor, running_var.tensor, training);
    }
    // gamma, beta and both running statistics.
    std::size_t count() const { return 4 * gamma.count(); }
};

struct ConvLayer {
    Parameter kernels, bias;

    ConvLayer() = default;
    // 1-D when `kernel_w` is zero: kernels (k, cin, cout); otherwise (k, kernel_w, cin, cout).
    ConvLayer(const std::string& name, std::size_t k, std::size_t kernel_w, std::size_t cin, std::size_t cout,
              Initializer& init);
    std::size_t count() const { return kernels.count() + bias.count(); }
};

struct LayerReport {
    std::string model;  // "Submodel1" / "Submodel2"
    int layer = 0;
    std::string type;
    nn::Shape output_shape;  // without the batch axis
    std::size_t params = 0;
};

struct BranchOutputs {
    Tensor features;     // (N, 128)
    Tensor branch1;      // (N, 64)
    Tensor branch2;      // (N, 64)
    Tensor saf_weights;  // (N, 2)
};

// Two-scalar squeeze-and-excitation over the branch outputs: squeeze each
// 64-vector to its mean, FC 2 -> 8 -> ReLU -> FC 8 -> 2 -> sigmoid, scale.
struct SafBlock {
    DenseLayer fc1, fc2;

    SafBlock() = default;
    explicit SafBlock(Initializer& init);
};

struct SafOutput {
    Tensor weights;  // (N, 2) in (0, 1)
    Tensor fused;    // (N, 128)
};

SafOutput saf_fuse(const Tensor& branch1, const Tensor& branch2, const SafBlock& saf);

// Dual-branch TF-CNN with SAF fusion. Ten reported rows, five per branch, each
// with a fixed parameter count (see kExpectedParams).
class FeatureExtractor {
public:
    explicit FeatureExtractor(std::uint64_t seed = 0);

    // envelope (N, 100, 1), spectrogram (N, 17, 69, 2).
    BranchOutputs forward(const Tensor& envelope, const Tensor& spectrogram, bool training);

    // Per-row structure with output shapes from a probe forward pass.
    std::vector<LayerReport> param_report();

    std::vector<Parameter*> parameters();  // includes batch-norm running statistics
    std::vector<Parameter*> trainable();

    SafBlock& saf() { return saf_; }

private:
    struct Trace {
        std::vector<nn::Shape>* shapes = nullptr;
        void record(const Tensor& t) const;
    };
    Tensor submodel1(const Tensor& x, bool training, const Trace& trace);
    Tensor submodel2(const Tensor& x, bool training, const Trace& trace);

    ConvLayer s1_conv[3];
    BatchNormLayer s1_bn[3];
    DenseLayer s1_fc;
    ConvLayer s2_conv[2];
    BatchNormLayer s2_bn[2];
    DenseLayer s2_fc;
    SafBlock saf_;
};

struct ProjectionHead {
    DenseLayer fc;  // 128 -> 64

    ProjectionHead() = default;
    explicit ProjectionHead(Initializer& init);
};

struct ProjectionOutput {
    Tensor z;  // (N, 64), unit rows
    std::vector<std::size_t> degenerate_rows;
};

// normalize(relu(fc(h))); an all-zero row maps to the first basis vector.
ProjectionOutput project(const Tensor& h, const ProjectionHead& head);

struct ClassifierHead {
    DenseLayer fc1;  // 128 -> 32
    DenseLayer fc2;  // 32 -> 1

    ClassifierHead() = default;
    explicit ClassifierHead(Initializer& init);
};

// sigmoid(fc2(relu(fc1(h)))) as (N, 1): probability that the sample is human.
Tensor classify(const Tensor& h, const ClassifierHead& head);

inline constexpr double kDecisionThreshold = 0.5;
inline bool is_human(double probability, double threshold = kDecisionThreshold) { return probability > threshold; }

// Full detector state: extractor, projection head (training only), classifier.
class MagLiveModel {
public:
    explicit MagLiveModel(std::uint64_t seed = 0);

    FeatureExtractor extractor;
    ProjectionHead projection;
    ClassifierHead classifier;

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    std::vector<Parameter*> extractor_trainable();  // extractor + projection head
    std::vector<Parameter*> classifier_trainable();

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

    // Inference-mode 128-d features for a batch of tensors.
    std::vector<std::vector<double>> features(std::span<const dsp::FeatureTensor> inputs);
    std::vector<double> scores(std::span<const dsp::FeatureTensor> inputs);
};

// Batch assembly from per-segment feature tensors.
Tensor envelope_batch(std::span<const dsp::FeatureTensor> inputs);
Tensor spectrogram_batch(std::span<const dsp::FeatureTensor> inputs);
Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows);

// 128-d inference features for one segment.
std::vector<double> extract_features(const dsp::FeatureTensor& x, FeatureExtractor& model);

// Parameter counts per table row, in order: submodel1 rows 1-5, submodel2 rows 1-5.
inline constexpr std::size_t kExpectedParams[10] = {128, 1696, 1616, 0, 48192, 304, 64, 4640, 128, 61504};

// Throws AssemblyError naming the first row whose count diverges.
void verify_assembly(const std::vector<LayerReport>& report);
std::string format_report(const std::vector<LayerReport>& report);

}  // namespace maglive::model
