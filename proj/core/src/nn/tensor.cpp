#include "maglive/nn/tensor.hpp"

#include "maglive/error.hpp"

#include <functional>
#include <numeric>
#include <unordered_set>

namespace maglive::nn {

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value.assign(element_count(shape), 0.0);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != element_count(shape))
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + to_string(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void Tensor::backward() const {
    if (size() != 1) throw UsageError("backward() needs a scalar output, got shape " + to_string(shape()));
    if (!requires_grad()) return;

    // Post-order DFS gives a topological order; walk it backwards.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

}  // namespace maglive::nn
