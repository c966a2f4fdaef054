#pragma once

#include "rganet/engine/tensor.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace rganet {

/// Reverse-mode gradient tape. Ops append one record per forward call;
/// backward() replays the records once, in reverse order. Gradient buffers
/// are allocated lazily and accumulate additively, so a tensor feeding
/// several consumers collects every contribution.
template <typename Scalar>
class Tape {
public:
    using Storage = typename Tensor<Scalar>::Storage;

    /// Register an existing tensor (parameter or input) as a leaf.
    int watch(Tensor<Scalar>& t) {
        if (t.tape == this && t.node >= 0) return t.node;
        t.tape = this;
        t.node = alloc_node(t.numel());
        return t.node;
    }

    /// Reserve a gradient slot for an op output.
    int alloc_node(Index numel) {
        node_numel_.push_back(numel);
        grads_.emplace_back();
        return static_cast<int>(node_numel_.size()) - 1;
    }

    /// Append a backward rule. Rules run once each, newest first.
    void record(std::function<void(Tape&)> backward) {
        ops_.push_back(std::move(backward));
    }

    /// Gradient buffer for accumulation (zero-initialized on first touch).
    Storage& grad_buf(int node) {
        Storage& g = grads_[static_cast<size_t>(node)];
        if (g.size() == 0) g = Storage::Zero(node_numel_[static_cast<size_t>(node)]);
        return g;
    }

    /// Gradient of a node if anything has flowed into it, else nullptr.
    const Storage* maybe_grad(int node) const {
        const Storage& g = grads_[static_cast<size_t>(node)];
        return g.size() == 0 ? nullptr : &g;
    }

    /// Gradient of a watched tensor; zeros when the loss never reached it.
    Storage grad(const Tensor<Scalar>& t) const {
        check(t.tape == this && t.node >= 0, "tensor is not tracked by this tape");
        const Storage* g = maybe_grad(t.node);
        return g ? *g : Storage::Zero(t.numel());
    }

    /// Seed d(loss)/d(loss)=1 and replay all recorded ops in reverse.
    void backward(const Tensor<Scalar>& loss) {
        check(loss.numel() == 1, "backward requires a scalar loss, got shape " + loss.shape().str());
        check(loss.tape == this && loss.node >= 0, "loss tensor is not recorded on this tape");
        grad_buf(loss.node).setConstant(Scalar(1));
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(*this);
        ops_.clear();
    }

    size_t recorded_ops() const { return ops_.size(); }

private:
    std::vector<std::function<void(Tape&)>> ops_;
    std::vector<Index> node_numel_;
    std::vector<Storage> grads_;
};

} // namespace rganet
