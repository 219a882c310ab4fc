#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace spat {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    bool consumed = false;
    // Parents kept alive for the lifetime of the recorded graph.
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

}  // namespace detail

// Thread-confined switch that disables graph recording (inference paths).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool recording();

private:
    bool previous_;
};

// Dense row-major tensor with reverse-mode autodiff.
//
// Copies are shallow: they share the underlying node. Use clone() or
// detach() for an independent value.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor();
    explicit BasicTensor(Shape shape, T fill = T(0), bool requires_grad = false);
    BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static BasicTensor scalar(T value, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return node_->data.size(); }
    bool defined() const { return node_ != nullptr; }

    std::span<T> data() { return node_->data; }
    std::span<const T> data() const { return node_->data; }
    T item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad();
    void zero_grad();

    // Runs reverse-mode differentiation from this scalar. The recorded graph
    // is single use: a second call throws.
    void backward();

    // Same values, no graph, no grad.
    BasicTensor detach() const;
    BasicTensor clone() const { return detach(); }

    // Internal: graph construction for ops.
    const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
    static BasicTensor from_node(std::shared_ptr<detail::Node<T>> node);

private:
    std::shared_ptr<detail::Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace spat
