#pragma once

// Synthetic on-disk corpus and a cheap condition config for protocol checks.

#include <filesystem>
#include <set>
#include <string>

#include "deepfn/experiment.hpp"
#include "deepfn/synthetic.hpp"

namespace deepfn::testing {

/// Ten identities, two pseudo-AUs, 8 images each; written once per directory.
inline Manifest protocol_manifest(const std::filesystem::path& dir) {
    SyntheticFaceSpec spec;
    spec.n_identities = 10;
    spec.images_per_cell = 2;
    spec.seed = 19;
    if (std::filesystem::exists(dir / "manifest.jsonl")) return load_manifest(dir / "manifest.jsonl");
    generate_synthetic_dataset(spec, dir);
    return load_manifest(dir / "manifest.jsonl");
}

inline ExperimentConfig protocol_config(std::size_t workers) {
    ExperimentConfig c = condition_preset("person_independent", Normalization::original);
    c.repetitions = 2;
    c.seed = 77;
    c.classifier.epochs = 2;
    c.classifier.batch_size = 16;
    c.classifier.seed = 5;
    c.workers = workers;
    return c;
}

/// Every split of `r` has the requested train/val sizes, disjoint roles and no template.
inline bool splits_well_formed(const ConditionResult& r, std::size_t n_train, std::size_t n_val, std::string* why) {
    for (const auto& s : r.splits) {
        const std::string tag = "repetition " + std::to_string(s.repetition) + " " + s.direction;
        if (s.train.size() != n_train || s.val.size() != n_val || s.test.empty()) {
            *why = tag + ": sizes " + std::to_string(s.train.size()) + "/" + std::to_string(s.val.size()) + "/" +
                   std::to_string(s.test.size());
            return false;
        }
        std::set<std::string> seen;
        for (const auto* v : {&s.train, &s.val, &s.test})
            for (const auto& id : *v) {
                if (!seen.insert(id).second) {
                    *why = tag + ": " + id + " appears twice";
                    return false;
                }
                if (id == r.template_id) {
                    *why = tag + ": template " + id + " in split";
                    return false;
                }
            }
    }
    for (const auto& row : r.rows)
        if (row.participant_id == r.template_id) {
            *why = "template scored";
            return false;
        }
    return true;
}

}  // namespace deepfn::testing
