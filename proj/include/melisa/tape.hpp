#pragma once

#include <functional>
#include <vector>

#include "melisa/tensor.hpp"

namespace melisa {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& val() const;
};

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so a
/// single backward sweep in reverse id order is a valid topological traversal.
/// A tape is confined to one thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf node (parameter or input). Gradients accumulate here.
    Var leaf(Tensor v);
    /// Alias of leaf for values whose gradient is never read.
    Var constant(Tensor v);

    /// Internal: append an op node; the closure receives the node's own id.
    Var node(Tensor value, std::function<void(Tape&, int)> back);

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }

    /// Gradient buffer, allocated as zeros on first access.
    Tensor& grad_buf(int id);
    bool grad_allocated(int id) const { return nodes_[static_cast<size_t>(id)].grad_alloc; }

    /// Run reverse accumulation from a scalar loss node.
    void backward(Var loss);

    /// Gradient of the last backward() w.r.t. node v; zeros if unreached.
    const Tensor& grad(Var v);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool grad_alloc = false;
        std::function<void(Tape&, int)> back;
    };
    std::vector<Node> nodes_;
};

}  // namespace melisa
