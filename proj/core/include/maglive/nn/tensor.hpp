#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace maglive::nn {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

// Graph node. Values are row-major doubles; `grad` is allocated on first use
// for nodes that require gradients.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& grad_buffer() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

// Shared handle onto a graph node. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<const double> values() const { return node_->value; }
    std::span<double> mutable_values() { return node_->value; }
    double item() const;
    double operator[](std::size_t i) const { return node_->value[i]; }

    // Empty span when no gradient has been accumulated.
    std::span<const double> grad() const { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    // Reverse-mode sweep from this scalar; gradients accumulate into leaves.
    void backward() const;

    // Same values, no history.
    Tensor detach() const;

    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Named, layer-qualified tensor. Non-trainable parameters (batch-norm running
// statistics) are part of the model state and its parameter count but are
// never touched by the optimizer.
struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;

    std::size_t count() const { return tensor.size(); }
};

}  // namespace maglive::nn
