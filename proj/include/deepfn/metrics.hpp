#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "deepfn/classifier.hpp"
#include "deepfn/imaging.hpp"
#include "deepfn/tensor.hpp"

namespace deepfn {

struct AuMetric {
    double f1 = 0;
    double accuracy = 0;

    friend bool operator==(const AuMetric&, const AuMetric&) = default;
};

/// F1 and accuracy of one binary prediction vector; F1 is 0 when no positives exist anywhere.
inline AuMetric f1_and_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    require(preds.size() == labels.size(), "f1_and_accuracy: length mismatch (" + std::to_string(preds.size()) +
                                               " predictions, " + std::to_string(labels.size()) + " labels)");
    require(!preds.empty(), "f1_and_accuracy: empty input");
    long tp = 0, fp = 0, fn = 0, match = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] != 0, y = labels[i] != 0;
        tp += p && y;
        fp += p && !y;
        fn += !p && y;
        match += p == y;
    }
    return {f1_score(tp, fp, fn), double(match) / double(preds.size())};
}

/// Per-AU metrics for a matrix of binary rows (images x AUs).
inline std::vector<AuMetric> per_au_metrics(const std::vector<std::vector<int>>& preds,
                                            const std::vector<std::vector<int>>& labels) {
    require(preds.size() == labels.size() && !labels.empty(), "per_au_metrics: row counts differ or are zero");
    const std::size_t width = labels[0].size();
    std::vector<AuMetric> out;
    for (std::size_t a = 0; a < width; ++a) {
        std::vector<int> p, y;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            require(preds[i].size() == width && labels[i].size() == width, "per_au_metrics: ragged rows");
            p.push_back(preds[i][a]);
            y.push_back(labels[i][a]);
        }
        out.push_back(f1_and_accuracy(p, y));
    }
    return out;
}

/// Mean over AUs of (F1 + accuracy) / 2, as a percentage.
inline double participant_score(const std::vector<AuMetric>& per_au) {
    require(!per_au.empty(), "participant_score: no AUs");
    double s = 0;
    for (const auto& m : per_au) s += (m.f1 + m.accuracy) / 2;
    return 100.0 * s / double(per_au.size());
}

inline double sample_mean(const std::vector<double>& x) {
    require(!x.empty(), "mean of an empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
}

/// Unbiased (n - 1) variance; 0 for a single value.
inline double sample_variance(const std::vector<double>& x) {
    const double m = sample_mean(x);
    if (x.size() < 2) return 0.0;
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return s / double(x.size() - 1);
}

struct TTestResult {
    double t = 0;
    double df = 0;
    double p = 1;
    bool significant = false;
};

/**
 * Two-sided two-sample t-test, Welch by default; `pooled` selects the
 * equal-variance form. If both samples have zero variance, p is 1 when the
 * means coincide and 0 otherwise.
 */
inline TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b, bool pooled = false) {
    require(a.size() >= 2 && b.size() >= 2, "t-test needs at least 2 values per sample, got " +
                                                std::to_string(a.size()) + " and " + std::to_string(b.size()));
    const double na = double(a.size()), nb = double(b.size());
    const double ma = sample_mean(a), mb = sample_mean(b);
    const double va = sample_variance(a), vb = sample_variance(b);
    TTestResult r;
    if (va == 0 && vb == 0) {
        r.df = na + nb - 2;
        if (ma == mb) {
            r.t = 0;
            r.p = 1;
        } else {
            r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            r.p = 0;
        }
        r.significant = r.p < 0.05;
        return r;
    }
    double se2;
    if (pooled) {
        r.df = na + nb - 2;
        const double sp2 = ((na - 1) * va + (nb - 1) * vb) / r.df;
        se2 = sp2 * (1 / na + 1 / nb);
    } else {
        const double qa = va / na, qb = vb / nb;
        se2 = qa + qb;
        r.df = se2 * se2 / (qa * qa / (na - 1) + qb * qb / (nb - 1));
    }
    r.t = (ma - mb) / std::sqrt(se2);
    const boost::math::students_t dist(r.df);
    r.p = std::clamp(2 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t))), 0.0, 1.0);
    r.significant = r.p < 0.05;
    return r;
}

struct AverageFace {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> mean;  // row-major, 8-bit scale
    std::array<std::size_t, 256> histogram{};

    GrayImage mean_image() const {
        GrayImage img(height, width);
        for (std::size_t i = 0; i < mean.size(); ++i) img.pixels[i] = to_u8(mean[i]);
        return img;
    }
};

inline AverageFace average_face_diagnostic(const std::vector<GrayImage>& images) {
    require(!images.empty(), "average_face_diagnostic: no images");
    AverageFace f;
    f.height = images[0].height;
    f.width = images[0].width;
    f.mean.assign(f.height * f.width, 0.0);
    for (const auto& img : images) {
        require(img.height == f.height && img.width == f.width, "average_face_diagnostic: images differ in size");
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            f.mean[i] += img.pixels[i];
            ++f.histogram[img.pixels[i]];
        }
    }
    for (auto& v : f.mean) v /= double(images.size());
    return f;
}

/// Mean pixel MSE (on [0,1] intensities) between two equally sized images.
inline double pixel_mse(const GrayImage& a, const GrayImage& b) {
    require(a.height == b.height && a.width == b.width, "pixel_mse: size mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = (double(a.pixels[i]) - double(b.pixels[i])) / 255.0;
        s += d * d;
    }
    return s / double(a.pixels.size());
}

}  // namespace deepfn
