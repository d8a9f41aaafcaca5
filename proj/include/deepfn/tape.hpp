#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "deepfn/tensor.hpp"

namespace deepfn {

template <typename T>
class GradientTape;

namespace detail {
template <typename T>
GradientTape<T>*& active_tape_slot() {
    thread_local GradientTape<T>* slot = nullptr;
    return slot;
}
}  // namespace detail

/// Gradient of a scalar loss with respect to every requires_grad tensor seen on a tape.
template <typename T>
class Gradients {
public:
    bool contains(const Tensor<T>& t) const { return grads_.count(t.id()) != 0; }

    const Tensor<T>& at(const Tensor<T>& t) const {
        auto it = grads_.find(t.id());
        require(it != grads_.end(), "no gradient recorded for tensor of shape " + to_string(t.shape()));
        return it->second;
    }

    std::size_t size() const { return grads_.size(); }

    void insert(const void* id, Tensor<T> grad) { grads_.insert_or_assign(id, std::move(grad)); }

private:
    std::unordered_map<const void*, Tensor<T>> grads_;
};

/**
 * Ordered record of primitive operations for reverse-mode differentiation.
 *
 * Constructing a tape makes it the active tape of the calling thread until it is
 * destroyed; operations executed meanwhile record themselves when any input
 * requires a gradient. Tapes nest: the innermost one records.
 */
template <typename T>
class GradientTape {
public:
    /// Accumulates d(loss)/d(input_i) into gin[i]. gin[i] is empty when input i needs no gradient.
    using Vjp = std::function<void(std::span<const T> gout, std::vector<std::vector<T>>& gin)>;

    GradientTape() : previous_(detail::active_tape_slot<T>()) { detail::active_tape_slot<T>() = this; }
    ~GradientTape() { detail::active_tape_slot<T>() = previous_; }
    GradientTape(const GradientTape&) = delete;
    GradientTape& operator=(const GradientTape&) = delete;

    static GradientTape* active() { return detail::active_tape_slot<T>(); }

    void record(std::vector<Tensor<T>> inputs, const Tensor<T>& output, Vjp vjp) {
        outputs_.insert(output.id());
        records_.push_back(Record{std::move(inputs), output, std::move(vjp)});
    }

    std::size_t size() const { return records_.size(); }

    /// Replays the tape backward from a scalar loss. The tape is consumed.
    Gradients<T> gradient(const Tensor<T>& loss) {
        require(loss.defined() && loss.size() == 1, "backward requires a scalar loss");
        require(outputs_.count(loss.id()) != 0, "backward called on a tensor not produced under this tape");

        std::unordered_map<const void*, std::vector<T>> acc;
        acc[loss.id()] = {T(1)};

        std::vector<Tensor<T>> leaves;
        std::unordered_set<const void*> seen_leaves;

        for (auto rec = records_.rbegin(); rec != records_.rend(); ++rec) {
            for (const auto& in : rec->inputs) {
                if (in.requires_grad() && outputs_.count(in.id()) == 0 && seen_leaves.insert(in.id()).second)
                    leaves.push_back(in);
            }
            auto found = acc.find(rec->output.id());
            if (found == acc.end()) continue;
            const std::vector<T> gout = std::move(found->second);
            acc.erase(found);

            std::vector<std::vector<T>> gin(rec->inputs.size());
            for (std::size_t i = 0; i < rec->inputs.size(); ++i)
                if (rec->inputs[i].requires_grad()) gin[i].assign(rec->inputs[i].size(), T(0));
            rec->vjp(gout, gin);

            for (std::size_t i = 0; i < rec->inputs.size(); ++i) {
                if (gin[i].empty()) continue;
                auto& slot = acc[rec->inputs[i].id()];
                if (slot.empty()) {
                    slot = std::move(gin[i]);
                } else {
                    for (std::size_t k = 0; k < slot.size(); ++k) slot[k] += gin[i][k];
                }
            }
        }

        Gradients<T> result;
        for (const auto& leaf : leaves) {
            auto it = acc.find(leaf.id());
            if (it == acc.end())
                result.insert(leaf.id(), Tensor<T>::zeros(leaf.shape()));
            else
                result.insert(leaf.id(), Tensor<T>(leaf.shape(), std::move(it->second)));
        }
        records_.clear();
        outputs_.clear();
        return result;
    }

private:
    struct Record {
        std::vector<Tensor<T>> inputs;
        Tensor<T> output;
        Vjp vjp;
    };

    GradientTape* previous_;
    std::vector<Record> records_;
    std::unordered_set<const void*> outputs_;
};

template <typename T>
Gradients<T> backward(GradientTape<T>& tape, const Tensor<T>& loss) {
    return tape.gradient(loss);
}

namespace detail {

/// Records `output` on the active tape if any input requires a gradient.
template <typename T>
Tensor<T> finish(std::vector<Tensor<T>> inputs, Tensor<T> output, typename GradientTape<T>::Vjp vjp) {
    auto* tape = GradientTape<T>::active();
    if (!tape) return output;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return output;
    output.set_requires_grad(true);
    tape->record(std::move(inputs), output, std::move(vjp));
    return output;
}

}  // namespace detail

}  // namespace deepfn
