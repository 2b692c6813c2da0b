#pragma once

#include "maglive/dsp.hpp"
#include "maglive/model.hpp"
#include "maglive/nn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace maglive::training {

using nn::Parameter;
using nn::Tensor;

// Supervised contrastive loss over unit rows z (N, D). Summed over anchors;
// every anchor needs at least one other sample with the same label.
Tensor supcon_loss(const Tensor& z, std::span<const int> labels, double tau);

// Mean binary cross-entropy with p clamped to [1e-7, 1 - 1e-7]. p is (N, 1).
Tensor bce_loss(const Tensor& p, std::span<const int> labels);

struct TrainConfig {
    double tau = 0.07;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t epochs_stage1 = 30;
    std::size_t epochs_stage2 = 60;
    std::uint64_t seed = 7;

    void validate() const;
};

class Adam {
public:
    Adam(std::vector<Parameter*> params, const TrainConfig& cfg);
    // One update from the gradients currently accumulated on the parameters.
    void step();
    void zero_grad();

private:
    std::vector<Parameter*> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

// Shuffled class-balanced index batches. Labels are 1 (human) / 0 (loudspeaker).
std::vector<std::vector<std::size_t>> make_batches(std::span<const int> labels, std::size_t batch_size,
                                                   std::uint64_t seed);

struct LogRecord {
    std::size_t step = 0;
    std::string stage;
    std::size_t epoch = 0;
    double loss = 0.0;
    double learning_rate = 0.0;
    double wall_clock_s = 0.0;
};

struct TrainHistory {
    std::vector<double> epoch_loss;
    std::vector<std::string> warnings;
    std::size_t steps = 0;
};

using LogSink = std::function<void(const LogRecord&)>;

// Stage 1: extractor + projection head under the contrastive loss.
TrainHistory train_extractor(model::MagLiveModel& model, std::span<const dsp::FeatureTensor> inputs,
                             std::span<const int> labels, const TrainConfig& cfg, const LogSink& log = {});

// Stage 2: classifier head on frozen inference-mode features. Throws
// TrainingError if any extractor parameter changes.
TrainHistory train_classifier(model::MagLiveModel& model, const std::vector<std::vector<double>>& features,
                              std::span<const int> labels, const TrainConfig& cfg, const LogSink& log = {});

// FNV-1a over the raw bytes of every parameter value.
std::uint64_t checksum(const std::vector<Parameter*>& params);

}  // namespace maglive::training
