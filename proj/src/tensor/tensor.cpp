#include "spat/tensor/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "spat/errors.hpp"

namespace spat {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {
thread_local bool g_recording = true;
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool NoGradGuard::recording() { return g_recording; }

template <typename T>
BasicTensor<T>::BasicTensor() : node_(std::make_shared<detail::Node<T>>()) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
    return BasicTensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
    if (axis >= rank()) throw ShapeError("axis out of range for shape " + shape_string(shape()));
    return node_->shape[axis];
}

template <typename T>
T BasicTensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return node_->data[0];
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
void BasicTensor<T>::backward() {
    if (numel() != 1) {
        throw ShapeError("backward() requires a scalar, got shape " + shape_string(shape()));
    }
    if (node_->consumed) throw InvariantError("backward() called twice on the same graph");
    if (!node_->requires_grad) throw InvariantError("backward() on a tensor that does not require grad");

    // Post-order DFS gives a topological order; reversed, it is the tape.
    // Owning pointers: releasing a node's inputs must not free nodes still
    // waiting on the tape.
    using NodePtr = std::shared_ptr<detail::Node<T>>;
    std::vector<NodePtr> order;
    std::unordered_set<detail::Node<T>*> visited;
    std::vector<std::pair<NodePtr, std::size_t>> stack{{node_, 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        NodePtr n = stack.back().first;
        const std::size_t next = stack.back().second;
        if (next < n->inputs.size()) {
            stack.back().second += 1;
            const NodePtr& child = n->inputs[next];
            if (child->requires_grad && child->backward_fn && !visited.contains(child.get())) {
                visited.insert(child.get());
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(std::move(n));
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node<T>* n = it->get();
        n->ensure_grad();
        for (auto& in : n->inputs) {
            if (in->requires_grad) in->ensure_grad();
        }
        n->backward_fn(*n);
        n->backward_fn = nullptr;
        n->inputs.clear();
        n->consumed = true;
        it->reset();
    }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return BasicTensor(node_->shape, node_->data, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
    BasicTensor t;
    t.node_ = std::move(node);
    return t;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace spat
