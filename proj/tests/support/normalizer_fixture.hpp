#pragma once

// The overfit fixture: tiny profile, 8 clean images per branch, no augmentation.

#include <map>
#include <string>
#include <vector>

#include "deepfn/normalizer.hpp"
#include "deepfn/synthetic.hpp"

namespace deepfn::testing {

struct OverfitFixture {
    std::vector<GrayImage> subject, tmpl;
    NormalizerTrainResult result;
};

/// Preprocessed images of each synthetic participant, keyed by id.
inline std::map<std::string, std::vector<GrayImage>> synthetic_images_by_participant(const SyntheticCorpus& c,
                                                                                     std::size_t side) {
    std::map<std::string, std::vector<GrayImage>> out;
    for (std::size_t i = 0; i < c.manifest.samples.size(); ++i)
        out[c.manifest.samples[i].participant_id].push_back(preprocess_face(c.images[i], side));
    return out;
}

inline NormalizerTrainConfig overfit_config(std::size_t iterations = 2000) {
    NormalizerTrainConfig cfg;
    cfg.iterations = iterations;
    cfg.batch_size = 8;
    cfg.augment = false;
    cfg.checkpoint_every = 0;
    cfg.seed = 21;
    return cfg;
}

inline std::pair<std::vector<GrayImage>, std::vector<GrayImage>> overfit_images() {
    SyntheticFaceSpec spec;
    spec.n_identities = 2;
    spec.n_expressions = 2;
    spec.images_per_cell = 2;
    spec.seed = 13;
    auto by_id = synthetic_images_by_participant(render_synthetic_corpus(spec), 32);
    return {by_id.at(synthetic_participant_id(1, 2)), by_id.at(synthetic_participant_id(0, 2))};
}

inline OverfitFixture run_overfit_fixture(std::size_t iterations = 2000) {
    auto [subject, tmpl] = overfit_images();
    auto result = train_normalizer(subject, tmpl, ArchitectureProfile::tiny(), overfit_config(iterations));
    return {std::move(subject), std::move(tmpl), std::move(result)};
}

/// Mean of the last `window` loss entries of one branch.
inline double trailing_loss(const LossHistory& h, Branch branch, std::size_t window) {
    double sum = 0;
    std::size_t n = 0;
    for (auto it = h.rbegin(); it != h.rend() && n < window; ++it)
        if (it->branch == branch) {
            sum += it->loss;
            ++n;
        }
    return n ? sum / double(n) : 0.0;
}

inline double leading_loss(const LossHistory& h, Branch branch, std::size_t window) {
    double sum = 0;
    std::size_t n = 0;
    for (auto it = h.begin(); it != h.end() && n < window; ++it)
        if (it->branch == branch) {
            sum += it->loss;
            ++n;
        }
    return n ? sum / double(n) : 0.0;
}

/// Mean absolute per-pixel error on the [0,1] scale.
inline double mean_abs_error(const std::vector<GrayImage>& a, const std::vector<GrayImage>& b) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t p = 0; p < a[i].pixels.size(); ++p, ++n)
            sum += std::abs(double(a[i].pixels[p]) - double(b[i].pixels[p])) / 255.0;
    return sum / double(n);
}

}  // namespace deepfn::testing
