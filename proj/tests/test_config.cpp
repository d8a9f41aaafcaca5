#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "deepfn/report.hpp"
#include "deepfn/run_config.hpp"

using namespace deepfn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("deepfn_test_config_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

ConditionResult small_result() {
    ConditionResult r;
    r.template_id = "S00";
    r.rows = {{0, 0, "S03", {{0.5, 0.75}, {1.0, 1.0}}, 81.25}, {0, 1, "S04", {{0.0, 0.5}, {0.2, 0.6}}, 32.5},
              {1, 0, "S05", {{1.0 / 3.0, 0.7}, {0.9, 0.95}}, 72.0833333333333}};
    r.summary = summarize("gender_independent", Normalization::deepfn, {"AU12", "AU02"}, r.rows);
    r.splits = {{0, "male->female", {"S01", "S03"}, {"S05"}, {"S02", "S04"}}};
    return r;
}

}  // namespace

TEST(RunConfig, DefaultsFollowPublishedSetup) {
    const RunConfigFile c = run_config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.profile, ArchitectureProfile::full());
    EXPECT_EQ(c.normalizer.iterations, 50000u);
    EXPECT_EQ(c.normalizer.batch_size, 64u);
    EXPECT_DOUBLE_EQ(c.normalizer.optimizer.learning_rate, 5e-5);
    EXPECT_DOUBLE_EQ(c.normalizer.optimizer.beta1, 0.5);
    EXPECT_EQ(c.classifier.epochs, 50u);
    EXPECT_EQ(c.repetitions, 20u);
    EXPECT_EQ(c.n_train, 4u);
    EXPECT_EQ(c.n_val, 2u);
}

TEST(RunConfig, RoundTrip) {
    RunConfigFile c;
    c.manifest = "m.jsonl";
    c.seed = 99;
    c.profile = ArchitectureProfile::tiny();
    c.normalizer.iterations = 12;
    c.normalizer.loss = ReconstructionLoss::rmse;
    c.normalizer.augmentation.rotation_range = 3;
    c.classifier.epochs = 7;
    c.classifier.augment = true;
    c.condition = "skin_independent";
    c.normalization = Normalization::deepfn;
    c.directions = {{"lighter", "darker"}};
    c.task_proportions = {6, 1, 1};
    c.workers = 3;
    const RunConfigFile back = run_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(RunConfig, BaseSeedFillsComponentSeeds) {
    const auto c = run_config_from_json(nlohmann::json{{"seed", 17}, {"classifier", {{"seed", 3}}}});
    EXPECT_EQ(c.normalizer.seed, 17u);
    EXPECT_EQ(c.classifier.seed, 3u);
}

TEST(RunConfig, TopLevelAugmentationAppliesToNormalizer) {
    const auto c = run_config_from_json(nlohmann::json{{"augmentation", {{"warp_sigma", 2.5}}}});
    EXPECT_DOUBLE_EQ(c.normalizer.augmentation.warp_sigma, 2.5);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(run_config_from_json(nlohmann::json{{"seeed", 1}}), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json{{"normalizer", {{"iters", 1}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json{{"experiment", {{"normalization", "fancy"}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json{{"normalizer", {{"loss", "l2"}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json{{"profile", "medium"}}), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json{{"seed", "seven"}}), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json{{"experiment", {{"task_proportions", {1, 2}}}}}), ConfigError);
    try {
        run_config_from_json(nlohmann::json{{"classifier", {{"epoch", 3}}}});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("classifier"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST(RunConfig, LoadReportsFileProblems) {
    const fs::path d = scratch("load");
    EXPECT_THROW(load_run_config(d / "missing.json"), ConfigError);
    std::ofstream(d / "bad.json") << "{ not json";
    EXPECT_THROW(load_run_config(d / "bad.json"), ConfigError);
    std::ofstream(d / "ok.json") << R"({"seed": 4, "experiment": {"repetitions": 3}})";
    EXPECT_EQ(load_run_config(d / "ok.json").repetitions, 3u);
    fs::remove_all(d);
}

TEST(RunConfig, ExperimentConfigUsesPresetAndOverrides) {
    RunConfigFile c;
    c.condition = "dataset_independent";
    c.datasets = {"A", "B"};
    c.repetitions = 2;
    auto e = experiment_config(c);
    EXPECT_EQ(e.kind, GroupKind::dataset);
    EXPECT_EQ(e.directions.size(), 2u);
    EXPECT_EQ(e.directions[0].label(), "A->B");
    EXPECT_EQ(e.au_list, shared_dataset_aus());
    EXPECT_EQ(e.repetitions, 2u);
    c.au_list = {"AU12"};
    c.directions = {{"B", "A"}};
    e = experiment_config(c);
    EXPECT_EQ(e.au_list, (std::vector<std::string>{"AU12"}));
    ASSERT_EQ(e.directions.size(), 1u);
    EXPECT_EQ(e.directions[0].train_group, "B");
}

TEST(RunConfig, SavesResolvedDocument) {
    const fs::path d = scratch("resolved");
    RunConfigFile c;
    c.seed = 8;
    save_resolved_config(d, c);
    EXPECT_EQ(to_json(load_run_config(d / "resolved_config.json")), to_json(c));
    fs::remove_all(d);
}

TEST(Report, ScoresRoundTrip) {
    const fs::path d = scratch("scores");
    const auto r = small_result();
    write_scores_csv(d / "scores.csv", r, {{"male", "female"}, {"female", "male"}});
    const auto t = read_scores_csv(d / "scores.csv");
    EXPECT_EQ(t.condition, "gender_independent");
    EXPECT_EQ(t.normalization, Normalization::deepfn);
    EXPECT_EQ(t.au_list, r.summary.au_list);
    EXPECT_EQ(t.rows, r.rows);
    EXPECT_EQ(t.direction_labels[1], "female->male");
    EXPECT_EQ(summarize(t.condition, t.normalization, t.au_list, t.rows), r.summary);
    fs::remove_all(d);
}

TEST(Report, RejectsForeignCsv) {
    const fs::path d = scratch("foreign");
    std::ofstream(d / "x.csv") << "a,b,c\n1,2,3\n";
    EXPECT_THROW(read_scores_csv(d / "x.csv"), std::runtime_error);
    fs::remove_all(d);
}

TEST(Report, SummaryAndTtestTables) {
    const fs::path d = scratch("tables");
    const auto r = small_result();
    write_summary_csv(d / "summary.csv", {r.summary});
    const std::string s = slurp(d / "summary.csv");
    EXPECT_EQ(s.substr(0, s.find('\n')), "condition,normalization,count,mean,std");
    EXPECT_NE(s.find("gender_independent,deepfn,3,"), std::string::npos);

    const auto tt = welch_ttest({1, 2, 3}, {2, 3, 5});
    write_ttest_csv(d / "t.csv", {{"a/deepfn", "a/original", 3, 3, 2, 3.333, tt}});
    const std::string t = slurp(d / "t.csv");
    EXPECT_NE(t.find("a/deepfn,a/original,3,3,"), std::string::npos);
    fs::remove_all(d);
}

TEST(Report, HistogramRoundTripAndSvg) {
    const fs::path d = scratch("hist");
    const auto face = average_face_diagnostic({GrayImage(2, 2, 10), GrayImage(2, 2, 200)});
    write_histogram_csv(d / "h.csv", face);
    EXPECT_EQ(read_histogram_csv(d / "h.csv"), face.histogram);
    write_histogram_svg(d / "h.svg", {{"original", face.histogram}, {"deepfn <b>", face.histogram}}, "t & u");
    const std::string svg = slurp(d / "h.svg");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("t &amp; u"), std::string::npos);
    EXPECT_NE(svg.find("&lt;b&gt;"), std::string::npos);
    write_per_au_svg(d / "a.svg", {{"AU12", 50, 60, 10}, {"AU02", 70, 65, -5}}, "per AU");
    EXPECT_NE(slurp(d / "a.svg").find("AU02"), std::string::npos);
    fs::remove_all(d);
}

TEST(Report, ConditionOutputsDirectory) {
    const fs::path d = scratch("outputs");
    auto r = small_result();
    r.group_faces["male"] = average_face_diagnostic({GrayImage(4, 4, 90)});
    auto cfg = condition_preset("gender_independent", Normalization::deepfn);
    write_condition_outputs(d, r, cfg);
    for (const char* f : {"scores.csv", "summary.csv", "per_au.csv", "splits.csv", "mean_face_male.png",
                          "histogram_male.csv", "template.txt"})
        EXPECT_TRUE(fs::exists(d / f)) << f;
    EXPECT_EQ(read_png(d / "mean_face_male.png"), GrayImage(4, 4, 90));
    EXPECT_NE(slurp(d / "splits.csv").find("0,male->female,val,S05"), std::string::npos);
    fs::remove_all(d);
}

TEST(Report, CsvSplitting) {
    EXPECT_EQ(split_csv_line("a,b,,c"), (std::vector<std::string>{"a", "b", "", "c"}));
    EXPECT_EQ(split_csv_line("x\r"), (std::vector<std::string>{"x"}));
}
