#pragma once

// Declarative run configuration. Precedence: built-in defaults, then the
// config file, then command-line flags. Every command writes the resolved
// document next to its outputs.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepfn/experiment.hpp"
#include "deepfn/json_util.hpp"
#include "deepfn/serialization.hpp"

namespace deepfn {

struct RunConfigFile {
    std::string manifest;
    std::string output_dir;
    std::string cache_dir;
    std::uint64_t seed = 0;
    ArchitectureProfile profile = ArchitectureProfile::full();
    NormalizerTrainConfig normalizer{};
    ClassifierTrainConfig classifier{};

    std::string condition = "person_independent";
    Normalization normalization = Normalization::original;
    std::vector<std::string> au_list;  // empty: the condition's default
    std::size_t repetitions = 20;
    std::size_t n_train = 4;
    std::size_t n_val = 2;
    TaskProportions task_proportions{};
    std::string template_id;
    std::vector<SplitDirection> directions;  // empty: the condition's preset directions
    std::vector<std::string> datasets = {"BP4D", "DISFA"};
    std::size_t workers = 1;
};

inline nlohmann::json to_json(const RunConfigFile& c) {
    nlohmann::json dirs = nlohmann::json::array();
    for (const auto& d : c.directions) dirs.push_back({{"train", d.train_group}, {"test", d.test_group}});
    return {{"manifest", c.manifest},
            {"output_dir", c.output_dir},
            {"cache_dir", c.cache_dir},
            {"seed", c.seed},
            {"profile", to_json(c.profile)},
            {"normalizer", to_json(c.normalizer)},
            {"classifier", to_json(c.classifier)},
            {"experiment",
             {{"condition", c.condition},
              {"normalization", to_string(c.normalization)},
              {"au_list", c.au_list},
              {"repetitions", c.repetitions},
              {"n_train", c.n_train},
              {"n_val", c.n_val},
              {"task_proportions", {c.task_proportions.train, c.task_proportions.val, c.task_proportions.test}},
              {"template_id", c.template_id},
              {"directions", dirs},
              {"datasets", c.datasets},
              {"workers", c.workers}}}};
}

inline RunConfigFile run_config_from_json(const nlohmann::json& j) {
    StrictObject o(j, "config",
                   {"manifest", "output_dir", "cache_dir", "seed", "profile", "augmentation", "normalizer", "classifier",
                    "experiment"});
    RunConfigFile c;
    o.get("manifest", c.manifest);
    o.get("output_dir", c.output_dir);
    o.get("cache_dir", c.cache_dir);
    o.get("seed", c.seed);
    if (o.has("profile")) c.profile = profile_from_json(o.raw("profile"), o.path("profile"));
    c.normalizer.seed = c.seed;
    c.classifier.seed = c.seed;
    if (o.has("normalizer")) {
        const std::uint64_t base = c.seed;
        c.normalizer = normalizer_config_from_json(o.raw("normalizer"), o.path("normalizer"));
        if (!o.raw("normalizer").contains("seed")) c.normalizer.seed = base;
    }
    if (o.has("augmentation")) c.normalizer.augmentation = augmentation_from_json(o.raw("augmentation"), o.path("augmentation"));
    if (o.has("classifier")) {
        c.classifier = classifier_config_from_json(o.raw("classifier"), o.path("classifier"));
        if (!o.raw("classifier").contains("seed")) c.classifier.seed = c.seed;
    }
    if (o.has("experiment")) {
        const auto& ej = o.raw("experiment");
        StrictObject e(ej, o.path("experiment"),
                       {"condition", "normalization", "au_list", "repetitions", "n_train", "n_val", "task_proportions",
                        "template_id", "directions", "datasets", "workers"});
        e.get("condition", c.condition);
        if (e.has("normalization")) {
            std::string n;
            e.get("normalization", n);
            const auto parsed = parse_normalization(n);
            if (!parsed) throw ConfigError(e.path("normalization") + ": expected original or deepfn");
            c.normalization = *parsed;
        }
        e.get("au_list", c.au_list);
        e.get("repetitions", c.repetitions);
        e.get("n_train", c.n_train);
        e.get("n_val", c.n_val);
        if (e.has("task_proportions")) {
            std::vector<double> p;
            e.get("task_proportions", p);
            if (p.size() != 3) throw ConfigError(e.path("task_proportions") + ": expected [train, val, test]");
            c.task_proportions = {p[0], p[1], p[2]};
        }
        e.get("template_id", c.template_id);
        if (e.has("directions")) {
            const auto& arr = e.raw("directions");
            if (!arr.is_array()) throw ConfigError(e.path("directions") + ": expected an array");
            for (const auto& d : arr) {
                StrictObject dobj(d, e.path("directions") + "[]", {"train", "test"});
                SplitDirection dir;
                dobj.get("train", dir.train_group);
                dobj.get("test", dir.test_group);
                c.directions.push_back(dir);
            }
        }
        e.get("datasets", c.datasets);
        if (c.datasets.size() != 2) throw ConfigError(e.path("datasets") + ": expected two dataset ids");
        e.get("workers", c.workers);
    }
    return c;
}

inline RunConfigFile load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

inline void save_resolved_config(const std::filesystem::path& dir, const RunConfigFile& c) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "resolved_config.json") << to_json(c).dump(2) << '\n';
}

inline ExperimentConfig experiment_config(const RunConfigFile& c) {
    ExperimentConfig e = condition_preset(c.condition, c.normalization, {c.datasets[0], c.datasets[1]});
    if (!c.au_list.empty()) e.au_list = c.au_list;
    if (!c.directions.empty()) e.directions = c.directions;
    e.repetitions = c.repetitions;
    e.n_train = c.n_train;
    e.n_val = c.n_val;
    e.task_proportions = c.task_proportions;
    e.seed = c.seed;
    e.template_id = c.template_id;
    e.classifier = c.classifier;
    e.normalizer = c.normalizer;
    e.profile = c.profile;
    e.cache_dir = c.cache_dir;
    e.workers = c.workers;
    return e;
}

}  // namespace deepfn
