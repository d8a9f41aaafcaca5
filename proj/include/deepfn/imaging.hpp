#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "deepfn/rng.hpp"
#include "deepfn/tensor.hpp"

namespace deepfn {

/// 8-bit single-channel image, row-major.
struct GrayImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w, fill) {}
    GrayImage(std::size_t h, std::size_t w, std::vector<std::uint8_t> px) : height(h), width(w), pixels(std::move(px)) {
        require(pixels.size() == h * w, "GrayImage: pixel count does not match dimensions");
    }

    std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
    std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
    bool empty() const { return pixels.empty(); }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// 8-bit interleaved RGB image.
struct RgbImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 3;
    std::vector<std::uint8_t> pixels;
};

/// Geometric and warp augmentation magnitudes. Warp sigma is in pixels at a 256-pixel reference side.
struct AugmentationParams {
    double rotation_range = 10.0;  // degrees, +/-
    double zoom_range = 0.05;      // scale drawn from [1 - z, 1 + z]
    double shift_range = 0.05;     // fraction of side, +/-
    double flip_probability = 0.4;
    std::size_t warp_grid = 5;
    double warp_sigma = 5.0;

    static AugmentationParams none() { return {0.0, 0.0, 0.0, 0.0, 5, 0.0}; }

    void validate() const {
        require(rotation_range >= 0 && zoom_range >= 0 && shift_range >= 0 && warp_sigma >= 0,
                "augmentation ranges must be non-negative");
        require(zoom_range < 1.0, "zoom_range must be < 1");
        require(flip_probability >= 0 && flip_probability <= 1, "flip_probability must lie in [0,1]");
        require(warp_grid >= 2, "warp_grid must be >= 2");
    }
};

inline std::uint8_t to_u8(double v) { return std::uint8_t(std::clamp(std::round(v), 0.0, 255.0)); }

inline GrayImage to_grayscale(const RgbImage& rgb) {
    require(rgb.channels == 3, "to_grayscale: expected 3 channels, got " + std::to_string(rgb.channels));
    require(rgb.pixels.size() == rgb.height * rgb.width * 3, "to_grayscale: pixel buffer size mismatch");
    GrayImage out(rgb.height, rgb.width);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const double r = rgb.pixels[3 * i], g = rgb.pixels[3 * i + 1], b = rgb.pixels[3 * i + 2];
        out.pixels[i] = to_u8(0.299 * r + 0.587 * g + 0.114 * b);
    }
    return out;
}

/// Classic CDF remap. Constant images are returned unchanged.
inline GrayImage equalize_histogram(const GrayImage& img) {
    require(!img.empty(), "equalize_histogram: empty image");
    std::array<std::size_t, 256> hist{};
    for (auto v : img.pixels) ++hist[v];
    std::array<std::size_t, 256> cdf{};
    std::size_t running = 0, cdf_min = 0;
    for (std::size_t v = 0; v < 256; ++v) {
        running += hist[v];
        cdf[v] = running;
        if (cdf_min == 0 && running > 0) cdf_min = running;
    }
    const std::size_t n = img.pixels.size();
    if (n == cdf_min) return img;
    std::array<std::uint8_t, 256> lut{};
    for (std::size_t v = 0; v < 256; ++v) {
        const double num = cdf[v] >= cdf_min ? double(cdf[v] - cdf_min) : 0.0;
        lut[v] = to_u8(num / double(n - cdf_min) * 255.0);
    }
    GrayImage out = img;
    for (auto& v : out.pixels) v = lut[v];
    return out;
}

namespace detail {

/// Bilinear read with clamp-to-edge at fractional coordinates.
inline double sample_clamped(const GrayImage& img, double y, double x) {
    const double maxy = double(img.height - 1), maxx = double(img.width - 1);
    y = std::clamp(y, 0.0, maxy);
    x = std::clamp(x, 0.0, maxx);
    const std::size_t y0 = std::size_t(std::floor(y)), x0 = std::size_t(std::floor(x));
    const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
    const double fy = y - double(y0), fx = x - double(x0);
    const double top = (1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
    const double bottom = (1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
    return (1 - fy) * top + fy * bottom;
}

}  // namespace detail

/// Bilinear resize with half-pixel-centred sampling.
inline GrayImage resize_bilinear(const GrayImage& img, std::size_t out_h, std::size_t out_w) {
    require(out_h >= 1 && out_w >= 1, "resize_bilinear: output dimensions must be >= 1");
    require(!img.empty(), "resize_bilinear: empty input");
    if (out_h == img.height && out_w == img.width) return img;
    GrayImage out(out_h, out_w);
    const double sy = double(img.height) / double(out_h), sx = double(img.width) / double(out_w);
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x)
            out.at(y, x) = to_u8(detail::sample_clamped(img, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5));
    return out;
}

/// Grayscale face crop -> histogram-equalized at native size -> resized to side x side.
inline GrayImage preprocess_face(const GrayImage& img, std::size_t side) {
    return resize_bilinear(equalize_histogram(img), side, side);
}

/// Rotation, isotropic zoom and shift about the centre, then an optional horizontal mirror.
inline GrayImage random_affine(const GrayImage& img, const AugmentationParams& params, SeededRng& rng) {
    params.validate();
    const double angle = rng.uniform(-params.rotation_range, params.rotation_range) * std::numbers::pi / 180.0;
    const double scale = rng.uniform(1.0 - params.zoom_range, 1.0 + params.zoom_range);
    const double ty = rng.uniform(-params.shift_range, params.shift_range) * double(img.height);
    const double tx = rng.uniform(-params.shift_range, params.shift_range) * double(img.width);
    const bool flip = rng.bernoulli(params.flip_probability);

    const double cy = (double(img.height) - 1) / 2, cx = (double(img.width) - 1) / 2;
    const double c = std::cos(angle), s = std::sin(angle);
    GrayImage out(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const double xf = flip ? double(img.width - 1 - x) : double(x);
            const double py = double(y) - cy - ty, px = xf - cx - tx;
            // inverse rotation, then inverse zoom
            const double sy = (-s * px + c * py) / scale + cy;
            const double sx = (c * px + s * py) / scale + cx;
            out.at(y, x) = to_u8(detail::sample_clamped(img, sy, sx));
        }
    return out;
}

/// Per-pixel (dy, dx) displacement, row-major.
struct FlowField {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> dy;
    std::vector<double> dx;
};

/**
 * Dense displacement field from a lattice of i.i.d. Gaussian control offsets.
 *
 * Offsets are blended bilinearly and divided by the root of the summed squared
 * blend weights, so every pixel's displacement keeps the control-point standard
 * deviation instead of shrinking between control points.
 */
inline FlowField gaussian_flow(std::size_t height, std::size_t width, const AugmentationParams& params,
                               SeededRng& rng) {
    params.validate();
    const std::size_t g = params.warp_grid;
    const double sigma = params.warp_sigma * double(std::max(height, width)) / 256.0;
    std::vector<double> cy(g * g), cx(g * g);
    for (std::size_t i = 0; i < g * g; ++i) {
        cy[i] = rng.normal() * sigma;
        cx[i] = rng.normal() * sigma;
    }
    FlowField flow{height, width, std::vector<double>(height * width), std::vector<double>(height * width)};
    auto lattice = [g](std::size_t p, std::size_t extent, std::size_t& i0, double& f) {
        const double pos = extent > 1 ? double(p) * double(g - 1) / double(extent - 1) : 0.0;
        i0 = std::min(std::size_t(std::floor(pos)), g - 2);
        f = pos - double(i0);
    };
    for (std::size_t y = 0; y < height; ++y) {
        std::size_t gy;
        double fy;
        lattice(y, height, gy, fy);
        for (std::size_t x = 0; x < width; ++x) {
            std::size_t gx;
            double fx;
            lattice(x, width, gx, fx);
            const double w[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
            const std::size_t idx[4] = {gy * g + gx, gy * g + gx + 1, (gy + 1) * g + gx, (gy + 1) * g + gx + 1};
            double sy = 0, sx = 0, norm = 0;
            for (int k = 0; k < 4; ++k) {
                sy += w[k] * cy[idx[k]];
                sx += w[k] * cx[idx[k]];
                norm += w[k] * w[k];
            }
            norm = std::sqrt(norm);
            flow.dy[y * width + x] = sy / norm;
            flow.dx[y * width + x] = sx / norm;
        }
    }
    return flow;
}

inline GrayImage gaussian_warp(const GrayImage& img, const AugmentationParams& params, SeededRng& rng) {
    const FlowField flow = gaussian_flow(img.height, img.width, params, rng);
    if (params.warp_sigma == 0.0) return img;
    GrayImage out(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const std::size_t i = y * img.width + x;
            out.pixels[i] = to_u8(detail::sample_clamped(img, double(y) + flow.dy[i], double(x) + flow.dx[i]));
        }
    return out;
}

inline GrayImage augment(const GrayImage& img, const AugmentationParams& params, SeededRng& rng) {
    return gaussian_warp(random_affine(img, params, rng), params, rng);
}

/// Stack equally sized images into a (B,H,W,1) tensor with values in [0,1].
inline Tensor<float> images_to_tensor(const std::vector<GrayImage>& images) {
    require(!images.empty(), "images_to_tensor: no images");
    const std::size_t h = images[0].height, w = images[0].width;
    std::vector<float> data;
    data.reserve(images.size() * h * w);
    for (const auto& img : images) {
        require(img.height == h && img.width == w, "images_to_tensor: images differ in size");
        for (auto v : img.pixels) data.push_back(float(v) / 255.0f);
    }
    return Tensor<float>({images.size(), h, w, 1}, std::move(data));
}

/// Inverse of images_to_tensor for single-channel batches; values are rounded to 8 bits.
inline std::vector<GrayImage> tensor_to_images(const Tensor<float>& batch) {
    require(batch.rank() == 4 && batch.dim(3) == 1, "tensor_to_images: expected (B,H,W,1)");
    const std::size_t n = batch.dim(0), h = batch.dim(1), w = batch.dim(2);
    std::vector<GrayImage> out;
    const auto d = batch.data();
    for (std::size_t b = 0; b < n; ++b) {
        GrayImage img(h, w);
        for (std::size_t i = 0; i < h * w; ++i) img.pixels[i] = to_u8(double(d[b * h * w + i]) * 255.0);
        out.push_back(std::move(img));
    }
    return out;
}

// ---------------------------------------------------------------------------
// PNG I/O

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

/// Reads an 8-bit PNG. Colour images are converted with to_grayscale; alpha is dropped.
inline GrayImage read_png(const std::filesystem::path& path) {
    detail::FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw ImageIoError("cannot open image " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("libpng initialisation failed");
    }
    std::vector<std::uint8_t> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("malformed PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const std::size_t channels = png_get_channels(png, info);
    buffer.resize(std::size_t(w) * h * channels);
    rows.resize(h);
    for (std::size_t y = 0; y < h; ++y) rows[y] = buffer.data() + y * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (channels == 1) return GrayImage(h, w, std::move(buffer));
    if (channels == 3) return to_grayscale(RgbImage{h, w, 3, std::move(buffer)});
    throw ImageIoError("unsupported channel count in " + path.string());
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
    require(!img.empty(), "write_png: empty image");
    detail::FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw ImageIoError("cannot create image " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(img.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("failed writing PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.width);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace deepfn
