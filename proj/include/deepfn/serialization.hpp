#pragma once

// JSON forms of the training configurations. Readers reject unknown keys and
// leave absent keys at their defaults.

#include <json.hpp>

#include "deepfn/classifier.hpp"
#include "deepfn/json_util.hpp"
#include "deepfn/normalizer.hpp"

namespace deepfn {

inline nlohmann::json to_json(const AugmentationParams& a) {
    return {{"rotation_range", a.rotation_range}, {"zoom_range", a.zoom_range},
            {"shift_range", a.shift_range},       {"flip_probability", a.flip_probability},
            {"warp_grid", a.warp_grid},           {"warp_sigma", a.warp_sigma}};
}

inline AugmentationParams augmentation_from_json(const nlohmann::json& j, const std::string& where = "augmentation") {
    StrictObject o(j, where,
                   {"rotation_range", "zoom_range", "shift_range", "flip_probability", "warp_grid", "warp_sigma"});
    AugmentationParams a;
    o.get("rotation_range", a.rotation_range);
    o.get("zoom_range", a.zoom_range);
    o.get("shift_range", a.shift_range);
    o.get("flip_probability", a.flip_probability);
    o.get("warp_grid", a.warp_grid);
    o.get("warp_sigma", a.warp_sigma);
    return a;
}

inline nlohmann::json to_json(const AdamSettings& s) {
    return {{"learning_rate", s.learning_rate}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"epsilon", s.epsilon}};
}

inline AdamSettings adam_from_json(const nlohmann::json& j, const std::string& where = "optimizer") {
    StrictObject o(j, where, {"learning_rate", "beta1", "beta2", "epsilon"});
    AdamSettings s;
    o.get("learning_rate", s.learning_rate);
    o.get("beta1", s.beta1);
    o.get("beta2", s.beta2);
    o.get("epsilon", s.epsilon);
    return s;
}

inline nlohmann::json to_json(const ArchitectureProfile& p) {
    return {{"input_side", p.input_side}, {"base_filters", p.base_filters}, {"latent_dense", p.latent_dense},
            {"leaky_alpha", p.leaky_alpha}};
}

/// Accepts "full", "tiny", or an object with explicit sizes.
inline ArchitectureProfile profile_from_json(const nlohmann::json& j, const std::string& where = "profile") {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "full") return ArchitectureProfile::full();
        if (name == "tiny") return ArchitectureProfile::tiny();
        throw ConfigError(where + ": unknown profile '" + name + "' (expected full or tiny)");
    }
    StrictObject o(j, where, {"input_side", "base_filters", "latent_dense", "leaky_alpha"});
    ArchitectureProfile p = ArchitectureProfile::full();
    o.get("input_side", p.input_side);
    o.get("base_filters", p.base_filters);
    o.get("latent_dense", p.latent_dense);
    o.get("leaky_alpha", p.leaky_alpha);
    return p;
}

inline nlohmann::json to_json(const NormalizerTrainConfig& c) {
    return {{"iterations", c.iterations},
            {"batch_size", c.batch_size},
            {"loss", c.loss == ReconstructionLoss::mae ? "mae" : "rmse"},
            {"augment", c.augment},
            {"augmentation", to_json(c.augmentation)},
            {"optimizer", to_json(c.optimizer)},
            {"checkpoint_every", c.checkpoint_every},
            {"seed", c.seed}};
}

inline NormalizerTrainConfig normalizer_config_from_json(const nlohmann::json& j,
                                                         const std::string& where = "normalizer") {
    StrictObject o(j, where,
                   {"iterations", "batch_size", "loss", "augment", "augmentation", "optimizer", "checkpoint_every",
                    "seed"});
    NormalizerTrainConfig c;
    o.get("iterations", c.iterations);
    o.get("batch_size", c.batch_size);
    if (o.has("loss")) {
        std::string loss;
        o.get("loss", loss);
        if (loss == "mae")
            c.loss = ReconstructionLoss::mae;
        else if (loss == "rmse")
            c.loss = ReconstructionLoss::rmse;
        else
            throw ConfigError(o.path("loss") + ": expected mae or rmse");
    }
    o.get("augment", c.augment);
    if (o.has("augmentation")) c.augmentation = augmentation_from_json(o.raw("augmentation"), o.path("augmentation"));
    if (o.has("optimizer")) c.optimizer = adam_from_json(o.raw("optimizer"), o.path("optimizer"));
    o.get("checkpoint_every", c.checkpoint_every);
    o.get("seed", c.seed);
    return c;
}

inline nlohmann::json to_json(const ClassifierTrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"optimizer", to_json(c.optimizer)},
            {"threshold", c.threshold},
            {"augment", c.augment},
            {"augmentation", to_json(c.augmentation)},
            {"seed", c.seed}};
}

inline ClassifierTrainConfig classifier_config_from_json(const nlohmann::json& j,
                                                         const std::string& where = "classifier") {
    StrictObject o(j, where, {"epochs", "batch_size", "optimizer", "threshold", "augment", "augmentation", "seed"});
    ClassifierTrainConfig c;
    o.get("epochs", c.epochs);
    o.get("batch_size", c.batch_size);
    if (o.has("optimizer")) c.optimizer = adam_from_json(o.raw("optimizer"), o.path("optimizer"));
    o.get("threshold", c.threshold);
    o.get("augment", c.augment);
    if (o.has("augmentation")) c.augmentation = augmentation_from_json(o.raw("augmentation"), o.path("augmentation"));
    o.get("seed", c.seed);
    return c;
}

}  // namespace deepfn
