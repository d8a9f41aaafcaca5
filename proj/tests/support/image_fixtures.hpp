#pragma once

// Image fixtures shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <array>
#include <cmath>

#include "deepfn/imaging.hpp"

namespace deepfn::testing {

/// Kolmogorov-Smirnov distance between an image's intensity distribution and
/// the discrete uniform distribution on 0..255.
inline double ks_to_uniform(const GrayImage& img) {
    std::array<std::size_t, 256> hist{};
    for (auto v : img.pixels) ++hist[v];
    double running = 0, worst = 0;
    for (std::size_t v = 0; v < 256; ++v) {
        running += double(hist[v]);
        worst = std::max(worst, std::abs(running / double(img.pixels.size()) - double(v + 1) / 256.0));
    }
    return worst;
}

/// Low-contrast image with a skewed intensity distribution: u^gamma squeezed into [lo, lo + span].
inline GrayImage skewed_random_image(std::uint64_t seed, std::size_t h = 24, std::size_t w = 24) {
    SeededRng rng(seed);
    const double gamma = rng.uniform(0.3, 3.0);
    const double lo = rng.uniform(0, 120), span = rng.uniform(20, 120);
    GrayImage img(h, w);
    for (auto& p : img.pixels) p = to_u8(lo + span * std::pow(rng.uniform(0, 1), gamma));
    return img;
}

}  // namespace deepfn::testing
