#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "radiomamba/errors.hpp"

namespace radiomamba {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace detail {

// One record of the backward graph. Holds the forward value, the (lazy)
// gradient buffer and a closure that pushes this node's gradient into its
// parents. Nodes are shared so a tensor handle is cheap to copy.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> values;
    bool requires_grad = false;  // leaf flag; interior nodes rely on backward_fn
    std::vector<T> grad;
    std::string op;  // producing operation, empty for leaves
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    bool backward_run = false;

    bool tracked() const { return requires_grad || static_cast<bool>(backward_fn); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }
};

// When set, ops skip building backward closures (used by finite-difference
// evaluation loops where only the forward value matters).
inline thread_local bool no_grad_mode = false;

}  // namespace detail

struct NoGradGuard {
    bool previous;
    NoGradGuard() : previous(detail::no_grad_mode) { detail::no_grad_mode = true; }
    ~NoGradGuard() { detail::no_grad_mode = previous; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return !detail::no_grad_mode; }

template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from_data(std::move(shape), {}, requires_grad, /*fill*/ T(0), true);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        return from_data(std::move(shape), {}, requires_grad, value, true);
    }

    static Tensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false) {
        return from_data(std::move(shape), std::move(values), requires_grad, T(0), false);
    }

    static Tensor scalar(T value) { return from_data({1}, {value}); }

    // Interior graph node; only the ops layer calls this.
    static Tensor make_node(Shape shape, std::vector<T> values, std::string op,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node<T>&)> backward) {
        Tensor t = from_data(std::move(shape), std::move(values));
        t.node_->op = std::move(op);
        t.node_->parents.reserve(parents.size());
        for (auto& p : parents) t.node_->parents.push_back(p.node_);
        t.node_->backward_fn = std::move(backward);
        return t;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->values.size(); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

    std::span<const T> values() const { return node_->values; }
    std::span<T> values_mut() { return node_->values; }

    T item() const {
        if (size() != 1)
            throw DimensionError("item() requires a size-1 tensor, got shape " +
                                 shape_str(shape()));
        return node_->values[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    bool tracked() const { return node_->tracked(); }

    std::span<const T> grad() const { return node_->grad; }
    std::span<T> grad_mut() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
        node_->backward_run = false;
    }

    const std::string& op_name() const { return node_->op; }
    detail::Node<T>& node() const { return *node_; }
    const std::shared_ptr<detail::Node<T>>& node_ptr() const { return node_; }

    // Reverse-mode sweep from a scalar root. Topologically orders the graph
    // so every node's backward closure runs exactly once; a node that has
    // already been consumed by a previous sweep is an error (reset by
    // building a fresh forward graph / zero_grad on leaves).
    void backward() {
        if (size() != 1)
            throw DimensionError("backward() requires a scalar root, got shape " +
                                 shape_str(shape()));
        std::vector<detail::Node<T>*> order = topo_order();
        for (detail::Node<T>* n : order) {
            if (n->backward_run)
                throw GraphError("backward already run on this graph (node '" +
                                 (n->op.empty() ? std::string("leaf") : n->op) +
                                 "'); rebuild the forward pass before calling again");
        }
        for (detail::Node<T>* n : order) n->ensure_grad();
        node_->grad[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::Node<T>* n = *it;
            if (n->backward_fn) n->backward_fn(*n);
            n->backward_run = true;
        }
    }

private:
    static Tensor from_data(Shape shape, std::vector<T> values, bool requires_grad, T fill,
                            bool use_fill) {
        const std::size_t n = shape_size(shape);
        Tensor t;
        t.node_ = std::make_shared<detail::Node<T>>();
        t.node_->shape = std::move(shape);
        if (use_fill) {
            t.node_->values.assign(n, fill);
        } else {
            if (values.size() != n)
                throw DimensionError("data size " + std::to_string(values.size()) +
                                     " does not match shape " + shape_str(t.node_->shape));
            t.node_->values = std::move(values);
        }
        t.node_->requires_grad = requires_grad;
        return t;
    }

    // Iterative post-order DFS over tracked nodes.
    std::vector<detail::Node<T>*> topo_order() const {
        std::vector<detail::Node<T>*> order;
        std::unordered_set<detail::Node<T>*> seen;
        std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                detail::Node<T>* p = n->parents[next++].get();
                if (p->tracked() && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        return order;
    }

    std::shared_ptr<detail::Node<T>> node_;
};

// A named leaf tensor with requires_grad set; the unit the optimizer and
// checkpoints work with. Names form a path-like tree, unique per model.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> tensor;
};

}  // namespace radiomamba
