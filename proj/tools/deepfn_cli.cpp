// deepfn command-line tool. Exit codes: 0 success, 2 usage or contract error, 1 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepfn/classifier.hpp"
#include "deepfn/experiment.hpp"
#include "deepfn/manifest.hpp"
#include "deepfn/normalizer.hpp"
#include "deepfn/report.hpp"
#include "deepfn/run_config.hpp"
#include "deepfn/synthetic.hpp"

namespace fs = std::filesystem;
using namespace deepfn;

namespace {

/// Contract-level failure detected by the tool itself (exit code 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> profile;
    std::optional<std::size_t> iterations, batch_size, epochs, repetitions, workers;
    std::optional<double> learning_rate;
    std::optional<std::string> cache_dir;

    void add_to(CLI::App* cmd, bool classifier_flags, bool normalizer_flags) {
        cmd->add_option("--config", config, "JSON run configuration");
        cmd->add_option("--seed", seed, "base seed");
        if (normalizer_flags) {
            cmd->add_option("--profile", profile, "architecture profile: full or tiny");
            cmd->add_option("--iterations", iterations, "normalizer iterations");
            cmd->add_option("--batch-size", batch_size, "normalizer batch size");
            cmd->add_option("--learning-rate", learning_rate, "normalizer Adam learning rate");
            cmd->add_option("--cache-dir", cache_dir, "normalizer cache directory");
        }
        if (classifier_flags) cmd->add_option("--epochs", epochs, "classifier epochs");
    }

    RunConfigFile resolve() const {
        RunConfigFile c = config.empty() ? RunConfigFile{} : load_run_config(config);
        if (seed) {
            c.seed = *seed;
            c.normalizer.seed = *seed;
            c.classifier.seed = *seed;
        }
        if (profile) c.profile = profile_from_json(nlohmann::json(*profile), "--profile");
        if (iterations) c.normalizer.iterations = *iterations;
        if (batch_size) c.normalizer.batch_size = *batch_size;
        if (learning_rate) c.normalizer.optimizer.learning_rate = *learning_rate;
        if (cache_dir) c.cache_dir = *cache_dir;
        if (epochs) c.classifier.epochs = *epochs;
        if (repetitions) c.repetitions = *repetitions;
        if (workers) c.workers = *workers;
        return c;
    }
};

std::vector<GrayImage> load_participant(const Manifest& m, const std::string& id, std::size_t side,
                                        std::vector<const SampleRecord*>* samples = nullptr) {
    if (!m.find(id)) throw UsageError("participant '" + id + "' is not in the manifest");
    const auto recs = m.samples_of(id);
    if (recs.empty()) throw UsageError("participant '" + id + "' has no samples");
    std::vector<GrayImage> out;
    for (const auto* s : recs) out.push_back(preprocess_face(read_png(m.resolve(*s)), side));
    if (samples) *samples = recs;
    return out;
}

int cmd_synth_gen(const std::string& spec_path, const std::string& out_dir) {
    SyntheticFaceSpec spec;
    if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        if (!in) throw UsageError("cannot open spec file " + spec_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(spec_path + ": " + e.what());
        }
        spec = synthetic_spec_from_json(j);
    }
    const Manifest m = generate_synthetic_dataset(spec, out_dir);
    std::ofstream(fs::path(out_dir) / "resolved_spec.json") << to_json(spec).dump(2) << '\n';
    std::cout << "participants " << m.participants.size() << "\nsamples " << m.samples.size() << "\naus";
    for (const auto& a : m.au_list) std::cout << ' ' << a;
    std::cout << "\nmanifest " << (fs::path(out_dir) / "manifest.jsonl").string() << '\n';
    return 0;
}

int cmd_train_normalizer(const Overrides& ov, const std::string& manifest_path, const std::string& subject,
                         std::string template_id, const std::string& out) {
    RunConfigFile cfg = ov.resolve();
    cfg.manifest = manifest_path;
    Manifest m = load_manifest(manifest_path);
    if (template_id.empty() || template_id == "auto") template_id = select_template(m);
    if (subject == template_id) throw UsageError("subject and template must differ");
    const std::size_t side = cfg.profile.input_side;
    cfg.profile.validate();
    const auto subj = load_participant(m, subject, side);
    const auto tmpl = load_participant(m, template_id, side);
    NormalizerTrainConfig nc = cfg.normalizer;
    nc.seed = subject_normalizer_seed(cfg.normalizer, subject);
    std::cerr << "training normalizer " << subject << " -> " << template_id << " (" << nc.iterations
              << " iterations)\n";
    const fs::path out_path(out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    const auto result = train_normalizer(subj, tmpl, cfg.profile, nc, nullptr, [&](std::size_t it, const NormalizerModel& model) {
        save_normalizer(fs::path(out).concat(".ckpt" + std::to_string(it)), model);
    });
    save_normalizer(out_path, result.model);
    std::ofstream csv(fs::path(out).concat(".loss.csv"));
    csv << "iteration,branch,loss\n";
    for (const auto& r : result.history) csv << r.iteration << ',' << to_string(r.branch) << ',' << fmt_double(r.loss) << '\n';
    std::ofstream(fs::path(out).concat(".config.json")) << to_json(cfg).dump(2) << '\n';
    std::cout << "weights " << out << "\nloss_history " << out << ".loss.csv\nrows " << result.history.size() << '\n';
    return 0;
}

int cmd_normalize(const std::string& manifest_path, const std::string& weights, const std::string& subject,
                  const std::string& out_dir, const std::optional<std::string>& profile) {
    const Manifest m = load_manifest(manifest_path);
    const NormalizerModel model = load_normalizer(weights);
    if (profile && profile_from_json(nlohmann::json(*profile), "--profile") != model.profile)
        throw UsageError("weights profile (input_side " + std::to_string(model.profile.input_side) +
                         ") does not match --profile " + *profile);
    std::vector<const SampleRecord*> samples;
    const auto imgs = load_participant(m, subject, model.profile.input_side, &samples);
    const auto mapped = normalize(model, imgs);
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < mapped.size(); ++i)
        write_png(fs::path(out_dir) / fs::path(samples[i]->image_path).filename(), mapped[i]);
    std::cout << "normalized " << mapped.size() << " images into " << out_dir << '\n';
    return 0;
}

int cmd_train_classifier(const Overrides& ov, const std::string& manifest_path, const std::string& out_dir,
                         const std::optional<std::string>& condition, const std::optional<std::string>& normalization) {
    RunConfigFile cfg = ov.resolve();
    cfg.manifest = manifest_path;
    if (condition) cfg.condition = *condition;
    if (normalization) {
        const auto n = parse_normalization(*normalization);
        if (!n) throw UsageError("--normalization must be original or deepfn");
        cfg.normalization = *n;
    }
    ExperimentConfig ec = experiment_config(cfg);
    if (ec.person_dependent) throw UsageError("train-classifier supports group conditions only");
    ec.validate();
    Manifest m = load_manifest(manifest_path);
    if (!ec.au_list.empty()) m = filter_au_set(m, ec.au_list);
    std::string tmpl = ec.template_id;
    if (tmpl.empty()) tmpl = select_template(m);
    else if (auto* p = m.find(tmpl)) p->excluded = true;
    else throw UsageError("template participant '" + tmpl + "' is not in the manifest");

    const SplitDirection& dir = ec.directions.front();
    const GroupSplit split =
        make_group_split(m, {ec.kind, dir.train_group, dir.test_group, ec.n_train, ec.n_val, mix_seed(ec.seed, 1)});
    std::vector<std::string> ids = split.train;
    ids.insert(ids.end(), split.val.begin(), split.val.end());
    RunHooks hooks;
    hooks.log = [](const std::string& s) { std::cerr << s << '\n'; };
    const auto data = prepare_participants(m, ec, ids, tmpl, hooks);
    const auto gather = [&](const std::vector<std::string>& group) {
        LabeledImages li;
        for (const auto& id : group) {
            const auto& d = data.at(id);
            li.images.insert(li.images.end(), d.images.begin(), d.images.end());
            li.labels.insert(li.labels.end(), d.labels.begin(), d.labels.end());
        }
        return li;
    };
    const auto result = train_classifier(gather(split.train), gather(split.val), m.au_list.size(), ec.classifier);
    fs::create_directories(out_dir);
    save_classifier(fs::path(out_dir) / "classifier.dfc", result.best.model);
    std::ofstream h(fs::path(out_dir) / "history.csv");
    h << "epoch,train_loss,val_macro_f1\n";
    for (const auto& e : result.history) h << e.epoch << ',' << fmt_double(e.train_loss) << ',' << fmt_double(e.val_f1) << '\n';
    write_splits_csv(fs::path(out_dir) / "splits.csv", {{0, dir.label(), split.train, split.val, split.test}});
    save_resolved_config(out_dir, cfg);
    std::cout << "best_epoch " << result.best.epoch << "\nval_macro_f1 " << fmt_fixed(result.best.val_f1, 4) << '\n';
    return 0;
}

int cmd_evaluate(const Overrides& ov, const std::string& manifest_path, const std::string& out_dir,
                 const std::optional<std::string>& condition, const std::optional<std::string>& normalization) {
    RunConfigFile cfg = ov.resolve();
    cfg.manifest = manifest_path;
    cfg.output_dir = out_dir;
    if (condition) cfg.condition = *condition;
    if (normalization) {
        const auto n = parse_normalization(*normalization);
        if (!n) throw UsageError("--normalization must be original or deepfn");
        cfg.normalization = *n;
    }
    if (cfg.cache_dir.empty()) cfg.cache_dir = (fs::path(out_dir) / "normalizer_cache").string();
    const ExperimentConfig ec = experiment_config(cfg);
    const Manifest m = load_manifest(manifest_path);
    save_resolved_config(out_dir, cfg);
    RunHooks hooks;
    hooks.log = [](const std::string& s) { std::cerr << s << '\n'; };
    const ConditionResult r = run_condition(m, ec, hooks);
    write_condition_outputs(out_dir, r, ec);
    std::cout << r.summary.condition_name << ' ' << to_string(r.summary.normalization) << " n=" << r.summary.count
              << " mean=" << fmt_fixed(r.summary.mean, 2) << " std=" << fmt_fixed(r.summary.std, 2) << '\n';
    return 0;
}

struct RunDir {
    fs::path path;
    ScoresTable scores;
};

std::string dependent_partner(const std::string& condition) {
    const std::string dep = "_dependent", indep = "_independent";
    if (condition.size() > dep.size() && condition.ends_with(dep) && !condition.ends_with(indep))
        return condition.substr(0, condition.size() - dep.size()) + indep;
    return {};
}

int cmd_report(const std::string& results_dir, const std::string& out_dir) {
    std::vector<RunDir> runs;
    if (!fs::is_directory(results_dir)) throw UsageError("results directory " + results_dir + " does not exist");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(results_dir))
        if (e.is_directory() && fs::exists(e.path() / "scores.csv")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) runs.push_back({d, read_scores_csv(d / "scores.csv")});
    if (runs.empty()) throw UsageError("no run directories with scores.csv under " + results_dir);
    fs::create_directories(out_dir);

    std::map<std::pair<std::string, Normalization>, const RunDir*> by_key;
    std::vector<ConditionSummary> summaries;
    for (const auto& r : runs) {
        if (r.scores.rows.empty()) continue;
        by_key[{r.scores.condition, r.scores.normalization}] = &r;
        summaries.push_back(summarize(r.scores.condition, r.scores.normalization, r.scores.au_list, r.scores.rows));
    }
    write_summary_csv(fs::path(out_dir) / "summary.csv", summaries);

    auto scores_of = [](const RunDir& r) {
        std::vector<double> s;
        for (const auto& row : r.scores.rows) s.push_back(row.score);
        return s;
    };
    auto name = [](const RunDir& r) { return r.scores.condition + "/" + to_string(r.scores.normalization); };
    std::vector<TTestRow> tests;
    auto add_test = [&](const RunDir& a, const RunDir& b) {
        const auto sa = scores_of(a), sb = scores_of(b);
        if (sa.size() < 2 || sb.size() < 2) return;
        tests.push_back({name(a), name(b), sa.size(), sb.size(), sample_mean(sa), sample_mean(sb), welch_ttest(sa, sb)});
    };
    for (const auto& [key, run] : by_key) {
        if (key.second != Normalization::deepfn) continue;
        auto it = by_key.find({key.first, Normalization::original});
        if (it == by_key.end()) continue;
        add_test(*run, *it->second);
        const auto o = summarize(key.first, Normalization::original, it->second->scores.au_list, it->second->scores.rows);
        const auto d = summarize(key.first, Normalization::deepfn, run->scores.au_list, run->scores.rows);
        const auto rows = per_au_breakdown(o, d);
        write_breakdown_csv(fs::path(out_dir) / ("per_au_" + key.first + ".csv"), rows);
        write_per_au_svg(fs::path(out_dir) / ("per_au_" + key.first + ".svg"), rows, key.first + ": per-AU score");

        // Mean faces before/after, per group present in both runs.
        for (const auto& e : fs::directory_iterator(it->second->path)) {
            const std::string fname = e.path().filename().string();
            if (!fname.starts_with("mean_face_") || e.path().extension() != ".png") continue;
            const std::string group = fname.substr(10, fname.size() - 14);
            const fs::path after = run->path / fname;
            if (!fs::exists(after)) continue;
            const GrayImage before_img = read_png(e.path()), after_img = read_png(after);
            GrayImage pair(before_img.height, before_img.width + after_img.width + 4, 255);
            for (std::size_t y = 0; y < pair.height; ++y) {
                for (std::size_t x = 0; x < before_img.width; ++x) pair.at(y, x) = before_img.at(y, x);
                for (std::size_t x = 0; x < after_img.width; ++x) pair.at(y, before_img.width + 4 + x) = after_img.at(y, x);
            }
            write_png(fs::path(out_dir) / ("mean_face_" + key.first + "_" + group + "_before_after.png"), pair);
            const fs::path hb = it->second->path / ("histogram_" + group + ".csv"), ha = run->path / ("histogram_" + group + ".csv");
            if (fs::exists(hb) && fs::exists(ha))
                write_histogram_svg(fs::path(out_dir) / ("histogram_" + key.first + "_" + group + ".svg"),
                                    {{"original", read_histogram_csv(hb)}, {"deepfn", read_histogram_csv(ha)}},
                                    key.first + " / " + group + ": luminance");
        }
    }
    for (const auto& [key, run] : by_key) {
        const std::string partner = dependent_partner(key.first);
        if (partner.empty()) continue;
        auto it = by_key.find({partner, key.second});
        if (it != by_key.end()) add_test(*run, *it->second);
    }
    write_ttest_csv(fs::path(out_dir) / "ttests.csv", tests);
    std::cout << "runs " << runs.size() << "\nttests " << tests.size() << "\nreport " << out_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deepfn: face normalization and action-unit evaluation"};
    app.require_subcommand(1);

    std::string spec_path, out, manifest, subject, template_id = "auto", weights, results;
    std::optional<std::string> condition, normalization, profile_flag;
    Overrides ov;

    auto* synth = app.add_subcommand("synth-gen", "generate a synthetic face corpus and manifest");
    synth->add_option("--spec", spec_path, "synthetic spec JSON (defaults when omitted)");
    synth->add_option("--out", out, "output directory")->required();

    auto* trn = app.add_subcommand("train-normalizer", "train one subject/template normalizer");
    trn->add_option("--manifest", manifest)->required();
    trn->add_option("--subject", subject)->required();
    trn->add_option("--template", template_id, "template participant id, or auto");
    trn->add_option("--out", out, "weights file")->required();
    ov.add_to(trn, false, true);

    auto* nrm = app.add_subcommand("normalize", "map a subject's images onto the template");
    nrm->add_option("--manifest", manifest)->required();
    nrm->add_option("--weights", weights)->required();
    nrm->add_option("--subject", subject)->required();
    nrm->add_option("--out", out, "output directory")->required();
    nrm->add_option("--profile", profile_flag, "expected profile: full or tiny");

    auto* trc = app.add_subcommand("train-classifier", "train a classifier on one split");
    trc->add_option("--manifest", manifest)->required();
    trc->add_option("--out", out, "output directory")->required();
    trc->add_option("--condition", condition);
    trc->add_option("--normalization", normalization);
    ov.add_to(trc, true, true);

    auto* ev = app.add_subcommand("evaluate", "run one experimental condition");
    ev->add_option("--manifest", manifest)->required();
    ev->add_option("--out", out, "output directory")->required();
    ev->add_option("--condition", condition);
    ev->add_option("--normalization", normalization);
    ev->add_option("--repetitions", ov.repetitions);
    ev->add_option("--workers", ov.workers);
    ov.add_to(ev, true, true);

    auto* rep = app.add_subcommand("report", "t-tests, per-AU charts and mean faces from evaluate outputs");
    rep->add_option("--results", results)->required();
    rep->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) return cmd_synth_gen(spec_path, out);
        if (*trn) return cmd_train_normalizer(ov, manifest, subject, template_id, out);
        if (*nrm) return cmd_normalize(manifest, weights, subject, out, profile_flag);
        if (*trc) return cmd_train_classifier(ov, manifest, out, condition, normalization);
        if (*ev) return cmd_evaluate(ov, manifest, out, condition, normalization);
        if (*rep) return cmd_report(results, out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ManifestParseError& e) {
        std::cerr << "manifest error: " << e.what() << '\n';
        return 2;
    } catch (const ManifestIntegrityError& e) {
        std::cerr << "manifest error: " << e.what() << '\n';
        return 2;
    } catch (const WeightsFormatError& e) {
        std::cerr << "weights error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
