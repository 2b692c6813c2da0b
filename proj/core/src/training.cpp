#include "maglive/training.hpp"

#include "maglive/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

namespace maglive::training {

using namespace maglive::nn;

Tensor supcon_loss(const Tensor& z, std::span<const int> labels, double tau) {
    if (z.rank() != 2) throw ShapeError("supcon_loss: z must be (N, D)");
    if (!(tau > 0)) throw ParameterError("temperature must be positive");
    const std::size_t n = z.dim(0), d = z.dim(1);
    if (labels.size() != n) throw ShapeError("supcon_loss: label count differs from batch size");

    std::vector<std::size_t> positives(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && labels[j] == labels[i]) ++positives[i];
    for (std::size_t i = 0; i < n; ++i)
        if (positives[i] == 0)
            throw DataError("batch composition: sample " + std::to_string(i) + " has no same-class partner");

    const auto zv = z.values();
    std::vector<double> logits(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += zv[i * d + k] * zv[j * d + k];
            logits[i * n + j] = dot / tau;
        }

    // softmax over A(i) = all j != i, stabilized by the per-anchor max.
    std::vector<double> softmax(n * n, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) mx = std::max(mx, logits[i * n + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) denom += std::exp(logits[i * n + j] - mx);
        const double lse = mx + std::log(denom);
        double pos_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            softmax[i * n + j] = std::exp(logits[i * n + j] - lse);
            if (labels[j] == labels[i]) pos_sum += logits[i * n + j] - lse;
        }
        loss -= pos_sum / static_cast<double>(positives[i]);
    }

    auto node = std::make_shared<Node>();
    node->shape = {1};
    node->value = {loss};
    if (z.requires_grad()) {
        node->requires_grad = true;
        node->parents = {z.node_ptr()};
        std::vector<int> lab(labels.begin(), labels.end());
        node->backward_fn = [z, n, d, tau, softmax = std::move(softmax), positives = std::move(positives),
                             lab = std::move(lab)](Node& self) {
            // dL/dlogit_ij = softmax_ij - [j in P(i)] / |P(i)|; logit_ij = z_i . z_j / tau.
            std::vector<double> g(n * n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i) continue;
                    double v = softmax[i * n + j];
                    if (lab[j] == lab[i]) v -= 1.0 / static_cast<double>(positives[i]);
                    g[i * n + j] = v * self.grad[0] / tau;
                }
            auto& dz = z.node().grad_buffer();
            const auto zv = z.values();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double w = g[i * n + j] + g[j * n + i];
                    if (w == 0.0) continue;
                    for (std::size_t k = 0; k < d; ++k) dz[i * d + k] += w * zv[j * d + k];
                }
        };
    }
    return Tensor(std::move(node));
}

Tensor bce_loss(const Tensor& p, std::span<const int> labels) {
    if (p.size() != labels.size()) throw ShapeError("bce_loss: label count differs from prediction count");
    constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
    const std::size_t n = p.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double q = std::clamp(p[i], lo, hi);
        loss -= labels[i] ? std::log(q) : std::log(1.0 - q);
    }
    loss /= static_cast<double>(n);

    auto node = std::make_shared<Node>();
    node->shape = {1};
    node->value = {loss};
    if (p.requires_grad()) {
        node->requires_grad = true;
        node->parents = {p.node_ptr()};
        std::vector<int> lab(labels.begin(), labels.end());
        node->backward_fn = [p, n, lab = std::move(lab)](Node& self) {
            auto& dp = p.node().grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                const double raw = p[i];
                if (raw < lo || raw > hi) continue;  // clamped region is flat
                const double g = lab[i] ? -1.0 / raw : 1.0 / (1.0 - raw);
                dp[i] += self.grad[0] * g / static_cast<double>(n);
            }
        };
    }
    return Tensor(std::move(node));
}

void TrainConfig::validate() const {
    if (!(tau > 0)) throw ParameterError("tau must be positive");
    if (batch_size < 4 || batch_size % 2 != 0) throw ParameterError("batch size must be even and at least 4");
    if (learning_rate < 0) throw ParameterError("learning rate must be non-negative");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ParameterError("adam betas must lie in [0, 1)");
}

Adam::Adam(std::vector<Parameter*> params, const TrainConfig& cfg)
    : params_(std::move(params)), lr_(cfg.learning_rate), beta1_(cfg.beta1), beta2_(cfg.beta2),
      eps_(cfg.adam_epsilon) {
    for (auto* p : params_) {
        m_.emplace_back(p->count(), 0.0);
        v_.emplace_back(p->count(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto* p : params_) p->tensor.zero_grad();
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto* p = params_[k];
        if (!p->trainable) continue;
        const auto g = p->tensor.grad();
        if (g.empty()) continue;
        auto w = p->tensor.mutable_values();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const int> labels, std::size_t batch_size,
                                                   std::uint64_t seed) {
    if (batch_size < 4 || batch_size % 2 != 0) throw ParameterError("batch size must be even and at least 4");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    if (pos.size() < 2 || neg.size() < 2)
        throw DataError("each class needs at least 2 samples (human " + std::to_string(pos.size()) +
                        ", loudspeaker " + std::to_string(neg.size()) + ")");

    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);

    const std::size_t half = batch_size / 2;
    const std::size_t usable = std::min(pos.size(), neg.size());
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < usable; start += half) {
        const std::size_t take = std::min(half, usable - start);
        if (take < 2) break;  // a class would have no positive partner
        std::vector<std::size_t> batch;
        batch.reserve(2 * take);
        for (std::size_t i = 0; i < take; ++i) {
            batch.push_back(pos[start + i]);
            batch.push_back(neg[start + i]);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

std::uint64_t checksum(const std::vector<Parameter*>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : params)
        for (double v : p->tensor.values()) {
            unsigned char bytes[8];
            std::memcpy(bytes, &v, 8);
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    return h;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void check_plateau(TrainHistory& history, const char* stage) {
    const auto& l = history.epoch_loss;
    if (l.size() < 5) return;
    const std::size_t e = l.size() - 1;
    if (l[e] > l[e - 4])
        history.warnings.push_back(std::string(stage) + ": loss rose over the 5 epochs ending at epoch " +
                                   std::to_string(e));
}

}  // namespace

TrainHistory train_extractor(model::MagLiveModel& model, std::span<const dsp::FeatureTensor> inputs,
                             std::span<const int> labels, const TrainConfig& cfg, const LogSink& log) {
    cfg.validate();
    if (inputs.size() != labels.size()) throw ShapeError("inputs and labels differ in count");
    // ReLU would quietly map NaN to zero, so the loss check alone misses bad inputs.
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto finite = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
        };
        if (!finite(inputs[i].envelope) || !finite(inputs[i].spectrogram))
            throw TrainingError("non-finite value in training input " + std::to_string(i));
    }
    const auto start = std::chrono::steady_clock::now();
    Adam optimizer(model.extractor_trainable(), cfg);
    TrainHistory history;

    for (std::size_t epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
        const auto batches = make_batches(labels, cfg.batch_size, cfg.seed + 1000003ULL * epoch);
        double total = 0.0;
        for (const auto& idx : batches) {
            std::vector<dsp::FeatureTensor> xs;
            std::vector<int> ys;
            xs.reserve(idx.size());
            for (auto i : idx) {
                xs.push_back(inputs[i]);
                ys.push_back(labels[i]);
            }
            optimizer.zero_grad();
            const auto out = model.extractor.forward(model::envelope_batch(xs), model::spectrogram_batch(xs), true);
            const auto proj = model::project(out.features, model.projection);
            const Tensor loss = supcon_loss(proj.z, ys, cfg.tau);
            if (!std::isfinite(loss.item()))
                throw TrainingError("stage 1 diverged at step " + std::to_string(history.steps));
            loss.backward();
            optimizer.step();
            total += loss.item();
            if (log) log({history.steps, "extractor", epoch, loss.item(), cfg.learning_rate, seconds_since(start)});
            ++history.steps;
        }
        history.epoch_loss.push_back(batches.empty() ? 0.0 : total / static_cast<double>(batches.size()));
        check_plateau(history, "extractor");
    }
    return history;
}

TrainHistory train_classifier(model::MagLiveModel& model, const std::vector<std::vector<double>>& features,
                              std::span<const int> labels, const TrainConfig& cfg, const LogSink& log) {
    cfg.validate();
    if (features.size() != labels.size()) throw ShapeError("features and labels differ in count");
    const auto frozen = model.extractor.parameters();
    const std::uint64_t before = checksum(frozen);
    const auto start = std::chrono::steady_clock::now();
    Adam optimizer(model.classifier_trainable(), cfg);
    TrainHistory history;

    for (std::size_t epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
        const auto batches = make_batches(labels, cfg.batch_size, cfg.seed + 7919ULL * (epoch + 1));
        double total = 0.0;
        for (const auto& idx : batches) {
            std::vector<std::vector<double>> rows;
            std::vector<int> ys;
            for (auto i : idx) {
                rows.push_back(features[i]);
                ys.push_back(labels[i]);
            }
            optimizer.zero_grad();
            const Tensor p = model::classify(model::rows_to_tensor(rows), model.classifier);
            const Tensor loss = bce_loss(p, ys);
            if (!std::isfinite(loss.item()))
                throw TrainingError("stage 2 diverged at step " + std::to_string(history.steps));
            loss.backward();
            optimizer.step();
            total += loss.item();
            if (log) log({history.steps, "classifier", epoch, loss.item(), cfg.learning_rate, seconds_since(start)});
            ++history.steps;
        }
        history.epoch_loss.push_back(batches.empty() ? 0.0 : total / static_cast<double>(batches.size()));
        check_plateau(history, "classifier");
    }
    if (checksum(frozen) != before) throw TrainingError("extractor parameters changed during classifier training");
    return history;
}

}  // namespace maglive::training
