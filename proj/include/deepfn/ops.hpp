#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "deepfn/tape.hpp"
#include "deepfn/tensor.hpp"

namespace deepfn {

enum class Padding { same, valid };

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// colwise().sum() on a Map peels by the pointer's runtime alignment, so its
// summation order (and rounding) can change between allocations. Adding rows
// one at a time is element-wise and therefore reproducible.
template <typename T>
void accumulate_rows(Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>& acc, const ConstMatMap<T>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) acc += m.row(r);
}

inline std::string axis_mismatch(const char* op, const char* axis, std::size_t got, std::size_t want) {
    return std::string(op) + ": axis '" + axis + "' mismatch (got " + std::to_string(got) + ", expected " +
           std::to_string(want) + ")";
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(),
            std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

}  // namespace detail

/// Output extent and leading pad for one spatial axis of a convolution.
struct ConvAxis {
    std::size_t out = 0;
    std::size_t pad_before = 0;
};

/// `same` pads asymmetrically: any odd remainder goes after (bottom/right).
inline ConvAxis conv_axis(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
    require(stride >= 1, "conv2d: stride must be >= 1");
    if (padding == Padding::valid) {
        require(in >= kernel, "conv2d: kernel larger than input for valid padding");
        return {(in - kernel) / stride + 1, 0};
    }
    const std::size_t out = (in + stride - 1) / stride;
    const std::size_t needed = (out - 1) * stride + kernel;
    const std::size_t total = needed > in ? needed - in : 0;
    return {out, total / 2};
}

/**
 * 2-D cross-correlation over (B,H,W,Cin) input with a (kh,kw,Cin,Cout) kernel.
 *
 * Lowered to a single GEMM per call: patches are gathered into a
 * (B*H'*W', kh*kw*Cin) matrix.
 */
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t stride,
                 Padding padding) {
    require(input.rank() == 4, "conv2d: input must be rank 4 (B,H,W,C), got " + to_string(input.shape()));
    require(kernel.rank() == 4, "conv2d: kernel must be rank 4 (kh,kw,Cin,Cout), got " + to_string(kernel.shape()));
    const std::size_t B = input.dim(0), H = input.dim(1), W = input.dim(2), C = input.dim(3);
    const std::size_t KH = kernel.dim(0), KW = kernel.dim(1), CO = kernel.dim(3);
    require(kernel.dim(2) == C, detail::axis_mismatch("conv2d", "Cin", kernel.dim(2), C));
    require(bias.size() == CO, detail::axis_mismatch("conv2d", "Cout", bias.size(), CO));
    const ConvAxis ya = conv_axis(H, KH, stride, padding);
    const ConvAxis xa = conv_axis(W, KW, stride, padding);
    const std::size_t OH = ya.out, OW = xa.out;
    const std::size_t rows = B * OH * OW, depth = KH * KW * C;

    auto cols = std::make_shared<std::vector<T>>(rows * depth, T(0));
    const auto in = input.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t oy = 0; oy < OH; ++oy)
            for (std::size_t ox = 0; ox < OW; ++ox) {
                T* row = cols->data() + ((b * OH + oy) * OW + ox) * depth;
                for (std::size_t ky = 0; ky < KH; ++ky) {
                    const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(ya.pad_before);
                    if (iy < 0 || iy >= std::ptrdiff_t(H)) continue;
                    for (std::size_t kx = 0; kx < KW; ++kx) {
                        const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(xa.pad_before);
                        if (ix < 0 || ix >= std::ptrdiff_t(W)) continue;
                        const T* src = in.data() + ((b * H + std::size_t(iy)) * W + std::size_t(ix)) * C;
                        std::copy(src, src + C, row + (ky * KW + kx) * C);
                    }
                }
            }

    std::vector<T> out(rows * CO);
    detail::MatMap<T> Y(out.data(), Eigen::Index(rows), Eigen::Index(CO));
    detail::ConstMatMap<T> X(cols->data(), Eigen::Index(rows), Eigen::Index(depth));
    detail::ConstMatMap<T> K(kernel.data().data(), Eigen::Index(depth), Eigen::Index(CO));
    Y.noalias() = X * K;
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bvec(bias.data().data(), Eigen::Index(CO));
    Y.rowwise() += bvec;

    Tensor<T> result({B, OH, OW, CO}, std::move(out));
    return detail::finish<T>(
        {input, kernel, bias}, result,
        [=](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
            detail::ConstMatMap<T> dY(gout.data(), Eigen::Index(rows), Eigen::Index(CO));
            detail::ConstMatMap<T> Xc(cols->data(), Eigen::Index(rows), Eigen::Index(depth));
            detail::ConstMatMap<T> Kc(kernel.data().data(), Eigen::Index(depth), Eigen::Index(CO));
            if (!gin[1].empty()) {
                detail::MatMap<T> dK(gin[1].data(), Eigen::Index(depth), Eigen::Index(CO));
                dK.noalias() += Xc.transpose() * dY;
            }
            if (!gin[2].empty()) {
                Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(gin[2].data(), Eigen::Index(CO));
                detail::accumulate_rows(db, dY);
            }
            if (!gin[0].empty()) {
                std::vector<T> dcols(rows * depth);
                detail::MatMap<T> dX(dcols.data(), Eigen::Index(rows), Eigen::Index(depth));
                dX.noalias() = dY * Kc.transpose();
                auto& gx = gin[0];
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t oy = 0; oy < OH; ++oy)
                        for (std::size_t ox = 0; ox < OW; ++ox) {
                            const T* row = dcols.data() + ((b * OH + oy) * OW + ox) * depth;
                            for (std::size_t ky = 0; ky < KH; ++ky) {
                                const std::ptrdiff_t iy =
                                    std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(ya.pad_before);
                                if (iy < 0 || iy >= std::ptrdiff_t(H)) continue;
                                for (std::size_t kx = 0; kx < KW; ++kx) {
                                    const std::ptrdiff_t ix =
                                        std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(xa.pad_before);
                                    if (ix < 0 || ix >= std::ptrdiff_t(W)) continue;
                                    T* dst = gx.data() + ((b * H + std::size_t(iy)) * W + std::size_t(ix)) * C;
                                    const T* src = row + (ky * KW + kx) * C;
                                    for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
                                }
                            }
                        }
            }
        });
}

/// Mean over non-overlapping 2x2 windows; a trailing odd row/column is dropped.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input) {
    require(input.rank() == 4, "avg_pool2d: input must be rank 4 (B,H,W,C)");
    const std::size_t B = input.dim(0), H = input.dim(1), W = input.dim(2), C = input.dim(3);
    require(H >= 2 && W >= 2, "avg_pool2d: 2x2 window larger than input " + to_string(input.shape()));
    const std::size_t OH = H / 2, OW = W / 2;
    const auto in = input.data();
    std::vector<T> out(B * OH * OW * C);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < OH; ++y)
            for (std::size_t x = 0; x < OW; ++x)
                for (std::size_t c = 0; c < C; ++c) {
                    auto at = [&](std::size_t yy, std::size_t xx) { return in[((b * H + yy) * W + xx) * C + c]; };
                    out[((b * OH + y) * OW + x) * C + c] =
                        (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1)) *
                        T(0.25);
                }
    Tensor<T> result({B, OH, OW, C}, std::move(out));
    return detail::finish<T>({input}, result, [=](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
        auto& g = gin[0];
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t y = 0; y < OH; ++y)
                for (std::size_t x = 0; x < OW; ++x)
                    for (std::size_t c = 0; c < C; ++c) {
                        const T v = gout[((b * OH + y) * OW + x) * C + c] * T(0.25);
                        for (std::size_t dy = 0; dy < 2; ++dy)
                            for (std::size_t dx = 0; dx < 2; ++dx)
                                g[((b * H + 2 * y + dy) * W + 2 * x + dx) * C + c] += v;
                    }
    });
}

/// Affine map (B,N) x (N,M) + (M).
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    require(input.rank() == 2, "dense: input must be rank 2 (B,N), got " + to_string(input.shape()));
    require(weight.rank() == 2, "dense: weight must be rank 2 (N,M)");
    const std::size_t B = input.dim(0), N = input.dim(1), M = weight.dim(1);
    require(weight.dim(0) == N, detail::axis_mismatch("dense", "N", weight.dim(0), N));
    require(bias.size() == M, detail::axis_mismatch("dense", "M", bias.size(), M));
    std::vector<T> out(B * M);
    detail::MatMap<T> Y(out.data(), Eigen::Index(B), Eigen::Index(M));
    detail::ConstMatMap<T> X(input.data().data(), Eigen::Index(B), Eigen::Index(N));
    detail::ConstMatMap<T> Wm(weight.data().data(), Eigen::Index(N), Eigen::Index(M));
    Y.noalias() = X * Wm;
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bvec(bias.data().data(), Eigen::Index(M));
    Y.rowwise() += bvec;
    Tensor<T> result({B, M}, std::move(out));
    return detail::finish<T>(
        {input, weight, bias}, result, [=](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
            detail::ConstMatMap<T> dY(gout.data(), Eigen::Index(B), Eigen::Index(M));
            detail::ConstMatMap<T> Xc(input.data().data(), Eigen::Index(B), Eigen::Index(N));
            detail::ConstMatMap<T> Wc(weight.data().data(), Eigen::Index(N), Eigen::Index(M));
            if (!gin[0].empty()) {
                detail::MatMap<T> dX(gin[0].data(), Eigen::Index(B), Eigen::Index(N));
                dX.noalias() += dY * Wc.transpose();
            }
            if (!gin[1].empty()) {
                detail::MatMap<T> dW(gin[1].data(), Eigen::Index(N), Eigen::Index(M));
                dW.noalias() += Xc.transpose() * dY;
            }
            if (!gin[2].empty()) {
                Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(gin[2].data(), Eigen::Index(M));
                detail::accumulate_rows(db, dY);
            }
        });
}

namespace detail {

// Shared index map of depth-to-space: out[b, y*r+dy, x*r+dx, c] = in[b, y, x, (dy*r+dx)*C + c].
template <typename F>
void for_each_shuffle_index(std::size_t B, std::size_t H, std::size_t W, std::size_t C, std::size_t r, F&& f) {
    const std::size_t OW = W * r, CI = C * r * r;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t dy = 0; dy < r; ++dy)
                    for (std::size_t dx = 0; dx < r; ++dx)
                        for (std::size_t c = 0; c < C; ++c) {
                            const std::size_t src = ((b * H + y) * W + x) * CI + (dy * r + dx) * C + c;
                            const std::size_t dst = ((b * H * r + y * r + dy) * OW + x * r + dx) * C + c;
                            f(src, dst);
                        }
}

}  // namespace detail

/// Depth-to-space: (B,H,W,C*r*r) -> (B,H*r,W*r,C).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, std::size_t r) {
    require(input.rank() == 4, "pixel_shuffle: input must be rank 4");
    require(r >= 1, "pixel_shuffle: factor must be >= 1");
    const std::size_t B = input.dim(0), H = input.dim(1), W = input.dim(2), CI = input.dim(3);
    require(CI % (r * r) == 0, "pixel_shuffle: channels " + std::to_string(CI) + " not divisible by r^2=" +
                                   std::to_string(r * r));
    const std::size_t C = CI / (r * r);
    const auto in = input.data();
    std::vector<T> out(in.size());
    detail::for_each_shuffle_index(B, H, W, C, r, [&](std::size_t s, std::size_t d) { out[d] = in[s]; });
    Tensor<T> result({B, H * r, W * r, C}, std::move(out));
    return detail::finish<T>({input}, result, [=](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
        auto& g = gin[0];
        detail::for_each_shuffle_index(B, H, W, C, r, [&](std::size_t s, std::size_t d) { g[s] += gout[d]; });
    });
}

/// Space-to-depth: exact inverse of pixel_shuffle.
template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& input, std::size_t r) {
    require(input.rank() == 4, "space_to_depth: input must be rank 4");
    require(r >= 1, "space_to_depth: factor must be >= 1");
    const std::size_t B = input.dim(0), OH = input.dim(1), OW = input.dim(2), C = input.dim(3);
    require(OH % r == 0 && OW % r == 0, "space_to_depth: spatial dims not divisible by factor");
    const std::size_t H = OH / r, W = OW / r;
    const auto in = input.data();
    std::vector<T> out(in.size());
    detail::for_each_shuffle_index(B, H, W, C, r, [&](std::size_t s, std::size_t d) { out[s] = in[d]; });
    Tensor<T> result({B, H, W, C * r * r}, std::move(out));
    return detail::finish<T>({input}, result, [=](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
        auto& g = gin[0];
        detail::for_each_shuffle_index(B, H, W, C, r, [&](std::size_t s, std::size_t d) { g[d] += gout[s]; });
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape) {
    require(numel(shape) == input.size(),
            "reshape: " + to_string(input.shape()) + " cannot become " + to_string(shape));
    Tensor<T> result(std::move(shape), input.values());
    return detail::finish<T>({input}, result, [](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
        for (std::size_t i = 0; i < gout.size(); ++i) gin[0][i] += gout[i];
    });
}

/// (B, ...) -> (B, prod(...)).
template <typename T>
Tensor<T> flatten(const Tensor<T>& input) {
    return reshape(input, {input.dim(0), input.size() / input.dim(0)});
}

namespace detail {

template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& input, F f, D df) {
    const auto in = input.data();
    std::vector<T> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    Tensor<T> result(input.shape(), std::move(out));
    return finish<T>({input}, result, [=](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
        const auto x = input.data();
        const auto y = result.data();
        for (std::size_t i = 0; i < gout.size(); ++i) gin[0][i] += gout[i] * df(x[i], y[i]);
    });
}

}  // namespace detail

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T alpha = T(0.1)) {
    return detail::unary(
        input, [alpha](T x) { return x >= T(0) ? x : alpha * x; },
        [alpha](T x, T) { return x >= T(0) ? T(1) : alpha; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    return detail::unary(
        input, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
    return detail::unary(
        input,
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& input) {
    return detail::unary(input, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("add", a, b);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return detail::finish<T>({a, b}, Tensor<T>(a.shape(), std::move(out)),
                             [](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
                                 for (auto& g : gin)
                                     if (!g.empty())
                                         for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
                             });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("sub", a, b);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return detail::finish<T>({a, b}, Tensor<T>(a.shape(), std::move(out)),
                             [](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
                                 if (!gin[0].empty())
                                     for (std::size_t i = 0; i < gout.size(); ++i) gin[0][i] += gout[i];
                                 if (!gin[1].empty())
                                     for (std::size_t i = 0; i < gout.size(); ++i) gin[1][i] -= gout[i];
                             });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("mul", a, b);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return detail::finish<T>({a, b}, Tensor<T>(a.shape(), std::move(out)),
                             [=](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
                                 if (!gin[0].empty())
                                     for (std::size_t i = 0; i < gout.size(); ++i) gin[0][i] += gout[i] * b[i];
                                 if (!gin[1].empty())
                                     for (std::size_t i = 0; i < gout.size(); ++i) gin[1][i] += gout[i] * a[i];
                             });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
    T total = T(0);
    for (T v : input.data()) total += v;
    return detail::finish<T>({input}, Tensor<T>::scalar(total),
                             [](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
                                 for (auto& g : gin[0]) g += gout[0];
                             });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& input) {
    T total = T(0);
    for (T v : input.data()) total += v;
    const T n = T(input.size());
    return detail::finish<T>({input}, Tensor<T>::scalar(total / n),
                             [n](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
                                 for (auto& g : gin[0]) g += gout[0] / n;
                             });
}

/// Mean absolute error. The subgradient at zero difference is taken as 0.
template <typename T>
Tensor<T> loss_mae(const Tensor<T>& pred, const Tensor<T>& target) {
    detail::require_same_shape("loss_mae", pred, target);
    const std::size_t n = pred.size();
    T total = T(0);
    for (std::size_t i = 0; i < n; ++i) total += std::abs(pred[i] - target[i]);
    return detail::finish<T>(
        {pred, target}, Tensor<T>::scalar(total / T(n)),
        [=](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
            const T scale = gout[0] / T(n);
            for (std::size_t i = 0; i < n; ++i) {
                const T d = pred[i] - target[i];
                const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                if (!gin[0].empty()) gin[0][i] += scale * s;
                if (!gin[1].empty()) gin[1][i] -= scale * s;
            }
        });
}

template <typename T>
Tensor<T> loss_mse(const Tensor<T>& pred, const Tensor<T>& target) {
    detail::require_same_shape("loss_mse", pred, target);
    return mean(square(sub(pred, target)));
}

/// Root of the mean squared error.
template <typename T>
Tensor<T> loss_rmse(const Tensor<T>& pred, const Tensor<T>& target) {
    const Tensor<T> mse = loss_mse(pred, target);
    const T root = std::sqrt(mse.item());
    return detail::finish<T>({mse}, Tensor<T>::scalar(root),
                             [root](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
                                 gin[0][0] += root > T(0) ? gout[0] / (T(2) * root) : T(0);
                             });
}

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross-entropy with probabilities clamped to [eps, 1-eps].
template <typename T>
Tensor<T> loss_bce(const Tensor<T>& probs, const Tensor<T>& labels) {
    detail::require_same_shape("loss_bce", probs, labels);
    const std::size_t n = probs.size();
    const T eps = T(kBceEpsilon);
    T total = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T y = labels[i];
        require(y == T(0) || y == T(1), "loss_bce: label " + std::to_string(double(y)) + " outside {0,1}");
        const T p = std::clamp(probs[i], eps, T(1) - eps);
        total -= y * std::log(p) + (T(1) - y) * std::log(T(1) - p);
    }
    return detail::finish<T>(
        {probs, labels}, Tensor<T>::scalar(total / T(n)),
        [=](std::span<const T> gout, std::vector<std::vector<T>>& gin) {
            if (gin[0].empty()) return;
            const T scale = gout[0] / T(n);
            for (std::size_t i = 0; i < n; ++i) {
                const T raw = probs[i];
                if (raw < eps || raw > T(1) - eps) continue;  // clamped region is flat
                const T y = labels[i];
                gin[0][i] += scale * (-y / raw + (T(1) - y) / (T(1) - raw));
            }
        });
}

}  // namespace deepfn
