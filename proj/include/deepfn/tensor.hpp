#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace deepfn {

/// Raised when a caller breaks a documented precondition (shape, range, size).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractViolation(message);
}

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ')';
    return out.str();
}

/**
 * Dense row-major n-dimensional array.
 *
 * Tensor is a handle: copies share storage. Values are treated as immutable once
 * produced by an operation; only the optimizer and initializers write through
 * mutable_data(). Image batches use (batch, height, width, channels) order.
 */
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
        : impl_(std::make_shared<Impl>()) {
        require(!shape.empty(), "tensor shape must have at least one axis");
        for (std::size_t i = 0; i < shape.size(); ++i)
            require(shape[i] >= 1, "tensor axis " + std::to_string(i) + " has size 0");
        require(numel(shape) == data.size(),
                "tensor data length " + std::to_string(data.size()) + " does not match shape " +
                    to_string(shape));
        impl_->shape = std::move(shape);
        impl_->data = std::move(data);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    static Tensor filled(Shape shape, T value, bool requires_grad = false) {
        const std::size_t n = numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return Tensor({1}, {value}, requires_grad);
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->data.size(); }
    std::span<const T> data() const { return impl_->data; }
    const std::vector<T>& values() const { return impl_->data; }
    T operator[](std::size_t i) const { return impl_->data[i]; }

    T item() const {
        require(size() == 1, "item() requires a single-element tensor, got " + to_string(shape()));
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

    /// Write access for optimizers and initializers only.
    std::span<T> mutable_data() { return impl_->data; }

    /// Stable identity of the underlying storage, used to key gradients.
    const void* id() const { return impl_.get(); }

    Tensor clone() const { return Tensor(shape(), impl_->data, requires_grad()); }
    Tensor detach() const { return Tensor(shape(), impl_->data, false); }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape(), std::vector<U>(impl_->data.begin(), impl_->data.end()),
                         requires_grad());
    }

private:
    struct Impl {
        Shape shape;
        std::vector<T> data;
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;
};

}  // namespace deepfn
