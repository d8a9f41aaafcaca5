#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "deepfn/tape.hpp"
#include "deepfn/tensor.hpp"

namespace deepfn {

struct AdamSettings {
    double learning_rate = 0.00005;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/**
 * Adam moments and step counter.
 *
 * Moment buffers live in a store that several states may share: two states
 * that update the same parameter then see the same m and v, while each keeps
 * its own step counter for bias correction.
 */
template <typename T>
class AdamState {
public:
    struct Moments {
        std::vector<T> m;
        std::vector<T> v;
    };
    using MomentStore = std::unordered_map<const void*, Moments>;

    explicit AdamState(AdamSettings settings = {})
        : settings_(settings), store_(std::make_shared<MomentStore>()) {}

    /// A state with its own step counter that shares this state's moment buffers.
    AdamState sharing_moments(AdamSettings settings) const {
        AdamState other(settings);
        other.store_ = store_;
        return other;
    }

    const AdamSettings& settings() const { return settings_; }
    long long step_count() const { return t_; }
    void set_step_count(long long t) { t_ = t; }

    const Moments* moments(const Tensor<T>& param) const {
        auto it = store_->find(param.id());
        return it == store_->end() ? nullptr : &it->second;
    }

    Moments& moments_for(const Tensor<T>& param) {
        auto& mo = (*store_)[param.id()];
        if (mo.m.empty()) {
            mo.m.assign(param.size(), T(0));
            mo.v.assign(param.size(), T(0));
        }
        require(mo.m.size() == param.size(), "adam: moment shape does not match parameter");
        return mo;
    }

    void advance() { ++t_; }

private:
    AdamSettings settings_;
    std::shared_ptr<MomentStore> store_;
    long long t_ = 0;
};

/// One bias-corrected Adam update of every parameter in `params`, in place.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const Gradients<T>& grads, AdamState<T>& state) {
    for (const auto& p : params)
        require(grads.contains(p), "adam_step: missing gradient for parameter of shape " + to_string(p.shape()));
    state.advance();
    const auto& s = state.settings();
    const double t = double(state.step_count());
    const T lr = T(s.learning_rate);
    const T b1 = T(s.beta1), b2 = T(s.beta2), eps = T(s.epsilon);
    const T c1 = T(1.0 - std::pow(s.beta1, t));
    const T c2 = T(1.0 - std::pow(s.beta2, t));
    for (auto& p : params) {
        const auto g = grads.at(p).data();
        auto& mo = state.moments_for(p);
        auto w = p.mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            mo.m[i] = b1 * mo.m[i] + (T(1) - b1) * g[i];
            mo.v[i] = b2 * mo.v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = mo.m[i] / c1;
            const T vhat = mo.v[i] / c2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace deepfn
