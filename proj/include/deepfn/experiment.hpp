#pragma once

// Condition runner: repeated group splits, optional per-subject face
// normalization, classifier training and per-participant scoring.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "deepfn/classifier.hpp"
#include "deepfn/manifest.hpp"
#include "deepfn/metrics.hpp"
#include "deepfn/normalizer.hpp"
#include "deepfn/serialization.hpp"
#include "deepfn/splits.hpp"

namespace deepfn {

enum class Normalization { original, deepfn };

inline std::string to_string(Normalization n) { return n == Normalization::original ? "original" : "deepfn"; }

inline std::optional<Normalization> parse_normalization(const std::string& s) {
    if (s == "original") return Normalization::original;
    if (s == "deepfn") return Normalization::deepfn;
    return std::nullopt;
}

struct SplitDirection {
    std::string train_group = "all";
    std::string test_group = "all";

    std::string label() const { return train_group + "->" + test_group; }
    friend bool operator==(const SplitDirection&, const SplitDirection&) = default;
};

struct ExperimentConfig {
    std::string condition_name = "person_independent";
    bool person_dependent = false;
    GroupKind kind = GroupKind::person;
    std::vector<SplitDirection> directions{{"all", "all"}};
    Normalization normalization = Normalization::original;
    std::vector<std::string> au_list;  // empty: the manifest's list
    std::size_t repetitions = 20;
    std::size_t n_train = 4;
    std::size_t n_val = 2;
    TaskProportions task_proportions{};
    std::uint64_t seed = 0;
    std::string template_id;  // empty: select_template
    ClassifierTrainConfig classifier{};
    NormalizerTrainConfig normalizer{};
    ArchitectureProfile profile = ArchitectureProfile::full();
    std::filesystem::path cache_dir;  // DEEPFN_CACHE_DIR takes precedence; empty disables the disk cache
    std::size_t workers = 1;

    void validate() const {
        require(repetitions >= 1, "repetitions must be >= 1");
        require(workers >= 1, "workers must be >= 1");
        require(person_dependent || !directions.empty(), "a group condition needs at least one direction");
        classifier.validate();
        if (normalization == Normalization::deepfn) {
            profile.validate();
            normalizer.validate();
        }
    }
};

/// The eight named conditions; `datasets` names the two dataset pools for the dataset conditions.
inline const std::vector<std::string>& condition_names() {
    static const std::vector<std::string> names = {"person_dependent",  "person_independent", "gender_dependent",
                                                   "gender_independent", "skin_dependent",    "skin_independent",
                                                   "dataset_dependent", "dataset_independent"};
    return names;
}

inline const std::vector<std::string>& shared_dataset_aus() {
    static const std::vector<std::string> aus = {"AU01", "AU02", "AU04", "AU06", "AU12"};
    return aus;
}

inline ExperimentConfig condition_preset(const std::string& name, Normalization normalization,
                                         std::pair<std::string, std::string> datasets = {"BP4D", "DISFA"}) {
    ExperimentConfig c;
    c.condition_name = name;
    c.normalization = normalization;
    auto pair = [&](GroupKind kind, const std::string& a, const std::string& b, bool within) {
        c.kind = kind;
        c.directions = within ? std::vector<SplitDirection>{{a, a}, {b, b}} : std::vector<SplitDirection>{{a, b}, {b, a}};
    };
    if (name == "person_dependent") {
        c.person_dependent = true;
        c.directions.clear();
    } else if (name == "person_independent") {
        c.kind = GroupKind::person;
    } else if (name == "gender_dependent" || name == "gender_independent") {
        pair(GroupKind::gender, "male", "female", name == "gender_dependent");
    } else if (name == "skin_dependent" || name == "skin_independent") {
        pair(GroupKind::skin, "lighter", "darker", name == "skin_dependent");
    } else if (name == "dataset_dependent" || name == "dataset_independent") {
        pair(GroupKind::dataset, datasets.first, datasets.second, name == "dataset_dependent");
        c.au_list = shared_dataset_aus();
    } else {
        throw ContractViolation("unknown condition '" + name + "'");
    }
    return c;
}

struct ScoreRow {
    std::size_t repetition = 0;
    std::size_t direction = 0;  // index into the config's directions; 0 for person-dependent
    std::string participant_id;
    std::vector<AuMetric> per_au;
    double score = 0;

    friend bool operator==(const ScoreRow&, const ScoreRow&) = default;
};

struct SplitRecord {
    std::size_t repetition = 0;
    std::string direction;  // "train->test", or the participant id for person-dependent runs
    std::vector<std::string> train, val, test;

    friend bool operator==(const SplitRecord&, const SplitRecord&) = default;
};

struct ConditionSummary {
    std::string condition_name;
    Normalization normalization = Normalization::original;
    std::vector<std::string> au_list;
    std::size_t count = 0;
    double mean = 0;
    double std = 0;
    std::vector<double> per_au_mean;  // mean of (f1 + accuracy) / 2 per AU, as a percentage

    friend bool operator==(const ConditionSummary&, const ConditionSummary&) = default;
};

struct ConditionResult {
    ConditionSummary summary;
    std::vector<ScoreRow> rows;
    std::vector<SplitRecord> splits;
    std::string template_id;
    std::map<std::string, AverageFace> group_faces;  // classifier inputs averaged per group

    std::vector<double> scores() const {
        std::vector<double> s;
        for (const auto& r : rows) s.push_back(r.score);
        return s;
    }
};

inline ConditionSummary summarize(const std::string& name, Normalization normalization,
                                  const std::vector<std::string>& au_list, const std::vector<ScoreRow>& rows) {
    require(!rows.empty(), "summarize: no scores");
    ConditionSummary s{name, normalization, au_list, rows.size(), 0, 0, std::vector<double>(au_list.size(), 0.0)};
    std::vector<double> scores;
    for (const auto& r : rows) {
        require(r.per_au.size() == au_list.size(), "summarize: score row width differs from the AU list");
        scores.push_back(r.score);
        for (std::size_t a = 0; a < au_list.size(); ++a) s.per_au_mean[a] += 50.0 * (r.per_au[a].f1 + r.per_au[a].accuracy);
    }
    for (auto& v : s.per_au_mean) v /= double(rows.size());
    s.mean = sample_mean(scores);
    s.std = std::sqrt(sample_variance(scores));
    return s;
}

struct AuDelta {
    std::string au;
    double original = 0;
    double deepfn = 0;
    double delta = 0;
};

inline std::vector<AuDelta> per_au_breakdown(const ConditionSummary& original, const ConditionSummary& deepfn) {
    require(original.au_list == deepfn.au_list, "per_au_breakdown: the two conditions use different AU lists");
    std::vector<AuDelta> out;
    for (std::size_t a = 0; a < original.au_list.size(); ++a)
        out.push_back({original.au_list[a], original.per_au_mean[a], deepfn.per_au_mean[a],
                       deepfn.per_au_mean[a] - original.per_au_mean[a]});
    return out;
}

/// Test and replacement points. Unset members fall back to the real components.
struct RunHooks {
    /// Replaces classifier training/prediction: receives a test participant's images and labels, returns binary predictions.
    std::function<std::vector<std::vector<int>>(const std::vector<GrayImage>&, const std::vector<std::vector<int>>&)>
        predictor;
    /// Replaces normalizer training and mapping for one participant (inputs at the profile side).
    std::function<std::vector<GrayImage>(const std::string&, const std::vector<GrayImage>&)> normalizer;
    /// Progress messages.
    std::function<void(const std::string&)> log;
};

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

/// Effective cache directory: DEEPFN_CACHE_DIR, else the configured one (possibly empty).
inline std::filesystem::path resolve_cache_dir(const std::filesystem::path& configured) {
    if (const char* env = std::getenv("DEEPFN_CACHE_DIR"); env && *env) return env;
    return configured;
}

/// Seed of the normalizer for one subject: independent of repetition so cached models are reused.
inline std::uint64_t subject_normalizer_seed(const NormalizerTrainConfig& c, const std::string& subject) {
    return mix_seed(c.seed, fnv1a(subject));
}

inline std::string normalizer_cache_key(const std::string& subject, const std::string& template_id,
                                        const ArchitectureProfile& profile, const NormalizerTrainConfig& config,
                                        const std::vector<GrayImage>& subject_images,
                                        const std::vector<GrayImage>& template_images) {
    std::uint64_t h = fnv1a(subject + "\n" + template_id + "\n" + to_json(profile).dump() + "\n" + to_json(config).dump());
    for (const auto* set : {&subject_images, &template_images})
        for (const auto& img : *set) h = fnv1a(img.pixels.data(), img.pixels.size(), h);
    return hex64(h);
}

/**
 * Trains (or loads from `cache_dir`) the normalizer for one (subject, template)
 * pair. Images must be preprocessed to the profile side.
 */
inline NormalizerModel obtain_normalizer(const std::string& subject, const std::string& template_id,
                                         const std::vector<GrayImage>& subject_images,
                                         const std::vector<GrayImage>& template_images,
                                         const ArchitectureProfile& profile, NormalizerTrainConfig config,
                                         const std::filesystem::path& cache_dir) {
    config.seed = subject_normalizer_seed(config, subject);
    std::filesystem::path file;
    if (!cache_dir.empty()) {
        file = cache_dir / (normalizer_cache_key(subject, template_id, profile, config, subject_images, template_images) +
                            ".dfn");
        if (std::filesystem::exists(file)) {
            NormalizerModel m = load_normalizer(file);
            if (m.profile == profile) return m;
        }
    }
    NormalizerModel m = train_normalizer(subject_images, template_images, profile, config).model;
    if (!file.empty()) {
        std::filesystem::create_directories(cache_dir);
        auto tmp = file;
        tmp += ".tmp" + hex64(fnv1a(subject));
        save_normalizer(tmp, m);
        std::filesystem::rename(tmp, file);
    }
    return m;
}

/// Runs fn(0..n-1) on `workers` threads. The exception of the lowest failing index is rethrown.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t k = std::min(std::max<std::size_t>(workers, 1), std::max<std::size_t>(n, 1));
    if (k <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < k; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

namespace detail {

struct ParticipantData {
    std::vector<GrayImage> images;  // classifier inputs, 64x64
    std::vector<std::vector<int>> labels;
    std::vector<std::string> tasks;
};

inline std::vector<GrayImage> load_preprocessed(const Manifest& m, const std::vector<const SampleRecord*>& samples,
                                                std::size_t side) {
    std::vector<GrayImage> out;
    out.reserve(samples.size());
    for (const auto* s : samples) out.push_back(preprocess_face(read_png(m.resolve(*s)), side));
    return out;
}

template <typename F>
auto annotate(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const ContractViolation& e) {
        throw ContractViolation(where + ": " + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(where + ": " + e.what());
    }
}

inline LabeledImages gather(const std::map<std::string, ParticipantData>& data, const std::vector<std::string>& ids) {
    LabeledImages out;
    for (const auto& id : ids) {
        const auto& d = data.at(id);
        out.images.insert(out.images.end(), d.images.begin(), d.images.end());
        out.labels.insert(out.labels.end(), d.labels.begin(), d.labels.end());
    }
    return out;
}

}  // namespace detail

/**
 * Classifier inputs (64x64) and labels for the given participants: the
 * preprocessed originals, or their normalized versions mapped onto the template.
 */
inline std::map<std::string, detail::ParticipantData> prepare_participants(const Manifest& m,
                                                                           const ExperimentConfig& config,
                                                                           const std::vector<std::string>& needed,
                                                                           const std::string& template_id,
                                                                           const RunHooks& hooks = {}) {
    auto log = [&](const std::string& msg) {
        if (hooks.log) hooks.log(msg);
    };
    std::map<std::string, detail::ParticipantData> data;
    for (const auto& id : needed) {
        auto& d = data[id];
        for (const auto* s : m.samples_of(id)) {
            d.labels.push_back(s->au_occurrence);
            d.tasks.push_back(s->task_id);
        }
    }

    if (config.normalization == Normalization::original) {
        log("preprocessing " + std::to_string(needed.size()) + " participants");
        parallel_for(needed.size(), config.workers, [&](std::size_t i) {
            data.at(needed[i]).images = detail::load_preprocessed(m, m.samples_of(needed[i]), kClassifierSide);
        });
    } else {
        const std::size_t side = config.profile.input_side;
        const auto template_images = detail::load_preprocessed(m, m.samples_of(template_id), side);
        require(!template_images.empty(), "template participant '" + template_id + "' has no samples");
        const auto cache = resolve_cache_dir(config.cache_dir);
        parallel_for(needed.size(), config.workers, [&](std::size_t i) {
            const std::string& id = needed[i];
            detail::annotate("normalizing participant " + id, [&] {
                const auto imgs = detail::load_preprocessed(m, m.samples_of(id), side);
                std::vector<GrayImage> mapped;
                if (hooks.normalizer) {
                    mapped = hooks.normalizer(id, imgs);
                } else {
                    log("normalizer for " + id);
                    const NormalizerModel model =
                        obtain_normalizer(id, template_id, imgs, template_images, config.profile,
                                          config.normalizer, cache);
                    mapped = normalize(model, imgs);
                }
                auto& out = data.at(id).images;
                for (const auto& g : mapped) out.push_back(resize_bilinear(g, kClassifierSide, kClassifierSide));
                return 0;
            });
        });
    }

    return data;
}

/**
 * Runs one condition end to end. Scores are pooled over repetitions and
 * directions, sorted by (repetition, direction, participant).
 */
inline ConditionResult run_condition(const Manifest& manifest, const ExperimentConfig& config,
                                     const RunHooks& hooks = {}) {
    config.validate();
    auto log = [&](const std::string& msg) {
        if (hooks.log) hooks.log(msg);
    };
    Manifest m = config.au_list.empty() ? manifest : filter_au_set(manifest, config.au_list);
    ConditionResult result;
    if (config.template_id.empty()) {
        result.template_id = select_template(m);
    } else {
        auto* t = m.find(config.template_id);
        require(t != nullptr, "template participant '" + config.template_id + "' is not in the manifest");
        t->excluded = true;
        result.template_id = config.template_id;
    }

    // Participants that can appear in any split.
    std::vector<std::string> needed;
    if (config.person_dependent) {
        for (const auto& p : m.participants)
            if (!p.excluded) needed.push_back(p.participant_id);
    } else {
        std::set<std::string> ids;
        for (const auto& d : config.directions)
            for (const auto& g : {d.train_group, d.test_group})
                for (const auto& id : group_pool(m, config.kind, g)) ids.insert(id);
        needed.assign(ids.begin(), ids.end());
    }

    const auto data = prepare_participants(m, config, needed, result.template_id, hooks);

    if (config.person_dependent) {
        std::vector<GrayImage> all;
        for (const auto& id : needed) all.insert(all.end(), data.at(id).images.begin(), data.at(id).images.end());
        if (!all.empty()) result.group_faces["all"] = average_face_diagnostic(all);
    } else {
        for (const auto& d : config.directions)
            for (const auto& g : {d.train_group, d.test_group}) {
                if (result.group_faces.count(g)) continue;
                std::vector<GrayImage> imgs;
                for (const auto& id : group_pool(m, config.kind, g))
                    imgs.insert(imgs.end(), data.at(id).images.begin(), data.at(id).images.end());
                if (!imgs.empty()) result.group_faces[g] = average_face_diagnostic(imgs);
            }
    }

    struct Job {
        std::size_t repetition, direction;
        std::string participant;  // person-dependent only
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < config.repetitions; ++r) {
        if (config.person_dependent)
            for (const auto& id : needed) jobs.push_back({r, 0, id});
        else
            for (std::size_t d = 0; d < config.directions.size(); ++d) jobs.push_back({r, d, {}});
    }
    std::vector<std::vector<ScoreRow>> job_rows(jobs.size());
    std::vector<SplitRecord> job_splits(jobs.size());

    auto score_participant = [&](const ClassifierModel* model, const std::string& id, const LabeledImages& test) {
        std::vector<std::vector<int>> preds =
            hooks.predictor ? hooks.predictor(test.images, test.labels)
                            : binarize(predict(*model, test.images), config.classifier.threshold);
        ScoreRow row;
        row.participant_id = id;
        row.per_au = per_au_metrics(preds, test.labels);
        row.score = participant_score(row.per_au);
        return row;
    };

    parallel_for(jobs.size(), config.workers, [&](std::size_t j) {
        const Job& job = jobs[j];
        const std::uint64_t rep_seed = mix_seed(config.seed, job.repetition + 1);
        std::string where = "repetition " + std::to_string(job.repetition);
        if (!config.person_dependent) where += " (" + config.directions[job.direction].label() + ")";
        else where += " (participant " + job.participant + ")";
        detail::annotate(where, [&] {
            SplitRecord rec;
            rec.repetition = job.repetition;
            LabeledImages train, val;
            std::vector<std::pair<std::string, LabeledImages>> tests;
            if (config.person_dependent) {
                const TaskSplit ts =
                    make_person_dependent_split(m, job.participant, mix_seed(rep_seed, fnv1a(job.participant)),
                                                config.task_proportions);
                rec.direction = job.participant;
                rec.train = ts.train;
                rec.val = ts.val;
                rec.test = ts.test;
                const auto& d = data.at(job.participant);
                LabeledImages test;
                for (std::size_t i = 0; i < d.images.size(); ++i) {
                    LabeledImages* dst = nullptr;
                    if (std::count(ts.train.begin(), ts.train.end(), d.tasks[i])) dst = &train;
                    else if (std::count(ts.val.begin(), ts.val.end(), d.tasks[i])) dst = &val;
                    else dst = &test;
                    dst->images.push_back(d.images[i]);
                    dst->labels.push_back(d.labels[i]);
                }
                tests.emplace_back(job.participant, std::move(test));
            } else {
                const SplitDirection& dir = config.directions[job.direction];
                const GroupSplit split = make_group_split(
                    m, {config.kind, dir.train_group, dir.test_group, config.n_train, config.n_val, rep_seed});
                rec.direction = dir.label();
                rec.train = split.train;
                rec.val = split.val;
                rec.test = split.test;
                train = detail::gather(data, split.train);
                val = detail::gather(data, split.val);
                for (const auto& id : split.test) tests.emplace_back(id, detail::gather(data, {id}));
            }

            std::optional<ClassifierModel> model;
            if (!hooks.predictor) {
                ClassifierTrainConfig cc = config.classifier;
                cc.seed = mix_seed(config.classifier.seed ^ rep_seed, job.direction + 1 + fnv1a(job.participant));
                model = train_classifier(train, val, m.au_list.size(), cc).best.model;
            }
            for (const auto& [id, test] : tests) {
                if (test.size() == 0) continue;
                ScoreRow row = score_participant(model ? &*model : nullptr, id, test);
                row.repetition = job.repetition;
                row.direction = job.direction;
                job_rows[j].push_back(std::move(row));
            }
            job_splits[j] = std::move(rec);
            return 0;
        });
        log("finished " + where);
    });

    for (std::size_t j = 0; j < jobs.size(); ++j) {
        for (auto& r : job_rows[j]) result.rows.push_back(std::move(r));
        result.splits.push_back(std::move(job_splits[j]));
    }
    std::stable_sort(result.rows.begin(), result.rows.end(), [](const ScoreRow& a, const ScoreRow& b) {
        return std::tie(a.repetition, a.direction, a.participant_id) < std::tie(b.repetition, b.direction, b.participant_id);
    });
    result.summary = summarize(config.condition_name, config.normalization, m.au_list, result.rows);
    return result;
}

}  // namespace deepfn
