#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "deepfn/ops.hpp"
#include "deepfn/rng.hpp"
#include "deepfn/tensor.hpp"

namespace deepfn {

enum class Activation { none, leaky_relu, relu, sigmoid };

enum class LayerKind { conv2d, dense, flatten, reshape, pixel_shuffle, avg_pool };

/// One row of an architecture table. Shapes exclude the batch axis.
struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::conv2d;
    std::size_t units = 0;  // conv filters or dense outputs
    std::size_t kernel = 0;
    std::size_t stride = 1;
    Padding padding = Padding::same;
    Activation activation = Activation::none;
    std::size_t factor = 0;  // pixel-shuffle upscale
    Shape target;            // reshape target

    static LayerSpec conv(std::string name, std::size_t filters, std::size_t kernel, std::size_t stride, Padding pad,
                          Activation act) {
        LayerSpec s;
        s.name = std::move(name);
        s.kind = LayerKind::conv2d;
        s.units = filters;
        s.kernel = kernel;
        s.stride = stride;
        s.padding = pad;
        s.activation = act;
        return s;
    }
    static LayerSpec fully_connected(std::string name, std::size_t units, Activation act = Activation::none) {
        LayerSpec s;
        s.name = std::move(name);
        s.kind = LayerKind::dense;
        s.units = units;
        s.activation = act;
        return s;
    }
    static LayerSpec flat(std::string name) {
        LayerSpec s;
        s.name = std::move(name);
        s.kind = LayerKind::flatten;
        return s;
    }
    static LayerSpec reshape_to(std::string name, Shape target) {
        LayerSpec s;
        s.name = std::move(name);
        s.kind = LayerKind::reshape;
        s.target = std::move(target);
        return s;
    }
    static LayerSpec shuffle(std::string name, std::size_t factor) {
        LayerSpec s;
        s.name = std::move(name);
        s.kind = LayerKind::pixel_shuffle;
        s.factor = factor;
        return s;
    }
    static LayerSpec pool(std::string name) {
        LayerSpec s;
        s.name = std::move(name);
        s.kind = LayerKind::avg_pool;
        return s;
    }
};

/// Output shape of one layer for an unbatched input shape.
inline Shape infer_shape(const LayerSpec& layer, const Shape& in) {
    switch (layer.kind) {
        case LayerKind::conv2d: {
            require(in.size() == 3, layer.name + ": conv expects (H,W,C) input, got " + to_string(in));
            const ConvAxis y = conv_axis(in[0], layer.kernel, layer.stride, layer.padding);
            const ConvAxis x = conv_axis(in[1], layer.kernel, layer.stride, layer.padding);
            return {y.out, x.out, layer.units};
        }
        case LayerKind::dense:
            require(in.size() == 1, layer.name + ": dense expects a flat input, got " + to_string(in));
            return {layer.units};
        case LayerKind::flatten:
            return {numel(in)};
        case LayerKind::reshape:
            require(numel(layer.target) == numel(in), layer.name + ": reshape size mismatch");
            return layer.target;
        case LayerKind::pixel_shuffle:
            require(in.size() == 3 && in[2] % (layer.factor * layer.factor) == 0,
                    layer.name + ": channels not divisible by factor^2");
            return {in[0] * layer.factor, in[1] * layer.factor, in[2] / (layer.factor * layer.factor)};
        case LayerKind::avg_pool:
            require(in.size() == 3 && in[0] >= 2 && in[1] >= 2, layer.name + ": pool window larger than input");
            return {in[0] / 2, in[1] / 2, in[2]};
    }
    return in;
}

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

/**
 * A feed-forward stack of LayerSpecs with its parameters.
 *
 * Float-only: the double-precision path is exercised through the free ops in
 * gradient checks, not through whole models.
 */
class Sequential {
public:
    Sequential() = default;

    Sequential(std::string prefix, Shape input_shape, std::vector<LayerSpec> layers, float leaky_alpha = 0.1f)
        : prefix_(std::move(prefix)), input_shape_(std::move(input_shape)), layers_(std::move(layers)),
          leaky_alpha_(leaky_alpha) {
        Shape s = input_shape_;
        for (const auto& layer : layers_) {
            const Shape out = infer_shape(layer, s);
            if (layer.kind == LayerKind::conv2d) {
                params_.push_back({prefix_ + "." + layer.name + ".kernel",
                                   Tensor<float>::zeros({layer.kernel, layer.kernel, s[2], layer.units}, true)});
                params_.push_back({prefix_ + "." + layer.name + ".bias", Tensor<float>::zeros({layer.units}, true)});
            } else if (layer.kind == LayerKind::dense) {
                params_.push_back(
                    {prefix_ + "." + layer.name + ".weight", Tensor<float>::zeros({s[0], layer.units}, true)});
                params_.push_back({prefix_ + "." + layer.name + ".bias", Tensor<float>::zeros({layer.units}, true)});
            }
            s = out;
        }
    }

    const std::string& prefix() const { return prefix_; }
    const Shape& input_shape() const { return input_shape_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    float leaky_alpha() const { return leaky_alpha_; }

    std::vector<NamedTensor>& named_parameters() { return params_; }
    const std::vector<NamedTensor>& named_parameters() const { return params_; }

    std::vector<Tensor<float>> parameters() const {
        std::vector<Tensor<float>> out;
        for (const auto& p : params_) out.push_back(p.value);
        return out;
    }

    /// Deep copy: the clone owns fresh parameter storage.
    Sequential clone() const {
        Sequential c = *this;
        for (auto& p : c.params_) p.value = p.value.clone();
        return c;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    /// Layer-by-layer output shapes, computed without touching weights.
    std::vector<Shape> shape_trace() const {
        std::vector<Shape> trace;
        Shape s = input_shape_;
        for (const auto& layer : layers_) {
            s = infer_shape(layer, s);
            trace.push_back(s);
        }
        return trace;
    }

    Shape output_shape() const { return shape_trace().back(); }

    /// Glorot-uniform kernels/weights, zero biases.
    void initialize(SeededRng& rng) {
        for (auto& p : params_) {
            auto w = p.value.mutable_data();
            if (p.value.rank() == 1) {
                std::fill(w.begin(), w.end(), 0.0f);
                continue;
            }
            const Shape& sh = p.value.shape();
            std::size_t fan_in, fan_out;
            if (sh.size() == 4) {
                fan_in = sh[0] * sh[1] * sh[2];
                fan_out = sh[0] * sh[1] * sh[3];
            } else {
                fan_in = sh[0];
                fan_out = sh[1];
            }
            const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
            for (auto& v : w) v = float(rng.uniform(-limit, limit));
        }
    }

    /// Runs the stack on a batched input. `trace`, when given, receives per-layer output shapes (unbatched).
    Tensor<float> forward(const Tensor<float>& input, std::vector<Shape>* trace = nullptr) const {
        Shape expected = input_shape_;
        expected.insert(expected.begin(), input.dim(0));
        require(input.shape() == expected,
                prefix_ + ": input shape " + to_string(input.shape()) + " does not match " + to_string(expected));
        Tensor<float> x = input;
        std::size_t p = 0;
        for (const auto& layer : layers_) {
            const std::size_t batch = x.dim(0);
            switch (layer.kind) {
                case LayerKind::conv2d:
                    x = conv2d(x, params_[p].value, params_[p + 1].value, layer.stride, layer.padding);
                    p += 2;
                    break;
                case LayerKind::dense:
                    x = dense(x, params_[p].value, params_[p + 1].value);
                    p += 2;
                    break;
                case LayerKind::flatten:
                    x = flatten(x);
                    break;
                case LayerKind::reshape: {
                    Shape target = layer.target;
                    target.insert(target.begin(), batch);
                    x = reshape(x, target);
                    break;
                }
                case LayerKind::pixel_shuffle:
                    x = pixel_shuffle(x, layer.factor);
                    break;
                case LayerKind::avg_pool:
                    x = avg_pool2d(x);
                    break;
            }
            x = activate(x, layer.activation);
            if (trace) trace->push_back(Shape(x.shape().begin() + 1, x.shape().end()));
        }
        return x;
    }

private:
    Tensor<float> activate(const Tensor<float>& x, Activation act) const {
        switch (act) {
            case Activation::leaky_relu:
                return leaky_relu(x, leaky_alpha_);
            case Activation::relu:
                return relu(x);
            case Activation::sigmoid:
                return sigmoid(x);
            case Activation::none:
                break;
        }
        return x;
    }

    std::string prefix_;
    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<NamedTensor> params_;
    float leaky_alpha_ = 0.1f;
};

/// Copies parameter values (not handles) from `src` into `dst`; names and shapes must agree.
inline void copy_parameters(const Sequential& src, Sequential& dst) {
    auto& d = dst.named_parameters();
    const auto& s = src.named_parameters();
    require(d.size() == s.size(), "copy_parameters: parameter count mismatch");
    for (std::size_t i = 0; i < d.size(); ++i) {
        require(d[i].value.shape() == s[i].value.shape(), "copy_parameters: shape mismatch at " + d[i].name);
        std::copy(s[i].value.data().begin(), s[i].value.data().end(), d[i].value.mutable_data().begin());
    }
}

}  // namespace deepfn
