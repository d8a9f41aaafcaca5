#include <cmath>
#include <filesystem>
#include <stdexcept>

#include <gtest/gtest.h>

#include "deepfn/experiment.hpp"
#include "deepfn/metrics.hpp"
#include "support/oracles.hpp"
#include "support/protocol_fixture.hpp"

using namespace deepfn;
namespace fx = deepfn::testing;
namespace fs = std::filesystem;

namespace {

const fs::path& corpus_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "deepfn_test_protocol";
        fs::remove_all(d);
        fx::protocol_manifest(d);
        return d;
    }();
    return dir;
}

Manifest corpus() { return fx::protocol_manifest(corpus_dir()); }

RunHooks truth_predictor() {
    RunHooks h;
    h.predictor = [](const std::vector<GrayImage>&, const std::vector<std::vector<int>>& labels) { return labels; };
    return h;
}

}  // namespace

TEST(F1Accuracy, Examples) {
    EXPECT_EQ(f1_and_accuracy({1, 0, 1}, {1, 0, 1}), (AuMetric{1.0, 1.0}));
    const auto m = f1_and_accuracy({1, 0, 0, 0}, {1, 1, 0, 0});
    EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
    EXPECT_EQ(f1_and_accuracy({0, 0}, {0, 0}), (AuMetric{0.0, 1.0}));
    EXPECT_THROW(f1_and_accuracy({1}, {1, 0}), ContractViolation);
}

TEST(F1Accuracy, MatchesPrecisionRecallOracle) {
    SeededRng rng(3);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.below(30);
        std::vector<int> p(n), y(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = int(rng.below(2)), y[i] = int(rng.below(2));
        const auto want = fx::f1_accuracy_oracle(p, y);
        const auto m = f1_and_accuracy(p, y);
        EXPECT_NEAR(m.f1, want.f1, 1e-12);
        EXPECT_DOUBLE_EQ(m.accuracy, want.accuracy);
    }
}

TEST(ParticipantScore, Examples) {
    EXPECT_NEAR(participant_score({{1.0, 1.0}, {0.5, 0.7}}), 80.0, 1e-12);
    EXPECT_DOUBLE_EQ(participant_score({{1.0, 1.0}}), 100.0);
    EXPECT_DOUBLE_EQ(participant_score({{0, 0}, {0, 0}}), 0.0);
    EXPECT_THROW(participant_score({}), ContractViolation);
}

TEST(Welch, ReferenceValues) {
    for (const auto& c : fx::ttest_references()) {
        const auto w = welch_ttest(c.a, c.b);
        EXPECT_NEAR(w.t, c.t, 1e-6);
        EXPECT_NEAR(w.p, c.p, 1e-6);
        EXPECT_NEAR(w.df, c.df, 1e-6);
        const auto s = welch_ttest(c.a, c.b, true);
        EXPECT_NEAR(s.t, c.t_pooled, 1e-6);
        EXPECT_NEAR(s.p, c.p_pooled, 1e-6);
    }
}

TEST(Welch, HandComputedStatistic) {
    // means 2.3 and 1.1, variances 0.04 and 0.01: t = 1.2 / sqrt(0.05/3)
    const auto r = welch_ttest({2.1, 2.5, 2.3}, {1.1, 1.0, 1.2});
    EXPECT_NEAR(r.t, 1.2 / std::sqrt(0.05 / 3), 1e-9);
    EXPECT_NEAR(r.df, std::pow(0.05 / 3, 2) / (std::pow(0.04 / 3, 2) / 2 + std::pow(0.01 / 3, 2) / 2), 1e-9);
    EXPECT_TRUE(r.significant);
}

TEST(Welch, SymmetryAndDegenerateCases) {
    const std::vector<double> a = {3, 5, 4, 6}, b = {1, 2, 2, 3, 1};
    const auto ab = welch_ttest(a, b), ba = welch_ttest(b, a);
    EXPECT_DOUBLE_EQ(ab.t, -ba.t);
    EXPECT_DOUBLE_EQ(ab.p, ba.p);
    const auto same = welch_ttest(a, a);
    EXPECT_EQ(same.t, 0.0);
    EXPECT_DOUBLE_EQ(same.p, 1.0);
    EXPECT_EQ(welch_ttest({2, 2}, {2, 2}).p, 1.0);
    EXPECT_EQ(welch_ttest({2, 2}, {3, 3}).p, 0.0);
    EXPECT_THROW(welch_ttest({1}, {1, 2}), ContractViolation);
}

TEST(SampleStats, UnbiasedVariance) {
    EXPECT_DOUBLE_EQ(sample_mean({1, 2, 3, 4}), 2.5);
    EXPECT_NEAR(sample_variance({1, 2, 3, 4}), 5.0 / 3.0, 1e-15);
}

TEST(AverageFace, TwoPixelFixture) {
    const auto f = average_face_diagnostic({GrayImage(1, 1, 0), GrayImage(1, 1, 255)});
    EXPECT_DOUBLE_EQ(f.mean[0], 127.5);
    EXPECT_EQ(f.histogram[0], 1u);
    EXPECT_EQ(f.histogram[255], 1u);
    std::size_t total = 0;
    for (auto c : f.histogram) total += c;
    EXPECT_EQ(total, 2u);
}

TEST(AverageFace, IdenticalImagesAndMismatch) {
    GrayImage img(3, 2);
    for (std::size_t i = 0; i < 6; ++i) img.pixels[i] = std::uint8_t(i * 40);
    const auto f = average_face_diagnostic({img, img, img});
    EXPECT_EQ(f.mean_image(), img);
    std::size_t total = 0;
    for (auto c : f.histogram) total += c;
    EXPECT_EQ(total, 18u);
    EXPECT_THROW(average_face_diagnostic({img, GrayImage(2, 3)}), ContractViolation);
}

TEST(Breakdown, DeltasByHand) {
    const ConditionSummary o{"c", Normalization::original, {"AU01", "AU02"}, 4, 0, 0, {50.0, 60.0}};
    const ConditionSummary d{"c", Normalization::deepfn, {"AU01", "AU02"}, 4, 0, 0, {55.5, 58.0}};
    const auto rows = per_au_breakdown(o, d);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_DOUBLE_EQ(rows[0].delta, 5.5);
    EXPECT_DOUBLE_EQ(rows[1].delta, -2.0);
    for (const auto& r : per_au_breakdown(o, o)) EXPECT_EQ(r.delta, 0.0);
    ConditionSummary other = d;
    other.au_list = {"AU01", "AU04"};
    EXPECT_THROW(per_au_breakdown(o, other), ContractViolation);
}

TEST(Summarize, PooledMeanAndStd) {
    std::vector<ScoreRow> rows;
    const std::vector<double> scores = {40, 55, 61, 70.5};
    for (double s : scores) rows.push_back({0, 0, "p", {{s / 100, s / 100}}, s});
    const auto sum = summarize("c", Normalization::original, {"AU01"}, rows);
    EXPECT_EQ(sum.count, 4u);
    EXPECT_NEAR(sum.mean, 56.625, 1e-12);
    EXPECT_NEAR(sum.std, std::sqrt(sample_variance(scores)), 1e-12);
    EXPECT_NEAR(sum.per_au_mean[0], 56.625, 1e-12);
}

TEST(Presets, EightConditionsExpressible) {
    for (const auto& name : condition_names()) {
        for (auto n : {Normalization::original, Normalization::deepfn}) {
            const auto c = condition_preset(name, n);
            EXPECT_NO_THROW(c.validate()) << name;
        }
    }
    EXPECT_EQ(condition_preset("gender_independent", Normalization::original).directions.size(), 2u);
    EXPECT_EQ(condition_preset("dataset_dependent", Normalization::original).au_list, shared_dataset_aus());
    EXPECT_TRUE(condition_preset("person_dependent", Normalization::original).person_dependent);
    EXPECT_THROW(condition_preset("nonsense", Normalization::original), ContractViolation);
}

TEST(ParallelFor, RethrowsLowestFailingIndex) {
    for (std::size_t workers : {1u, 4u}) {
        try {
            parallel_for(20, workers, [](std::size_t i) {
                if (i == 7 || i == 13) throw std::runtime_error("job " + std::to_string(i));
            });
            FAIL();
        } catch (const std::runtime_error& e) {
            EXPECT_STREQ(e.what(), "job 7");
        }
    }
}

TEST(RunCondition, TruthPredictorScoresHundred) {
    auto c = fx::protocol_config(1);
    const auto r = run_condition(corpus(), c, truth_predictor());
    EXPECT_DOUBLE_EQ(r.summary.mean, 100.0);
    // 9 usable participants: 4 train, 2 val, 3 test per repetition
    EXPECT_EQ(r.rows.size(), 2u * 3u);
}

TEST(RunCondition, ZeroPredictorMatchesHandComputation) {
    // Every participant has each AU active in exactly half its frames: F1 0, accuracy 0.5 -> score 25.
    RunHooks h;
    h.predictor = [](const std::vector<GrayImage>& imgs, const std::vector<std::vector<int>>& labels) {
        return std::vector<std::vector<int>>(imgs.size(), std::vector<int>(labels[0].size(), 0));
    };
    const auto r = run_condition(corpus(), fx::protocol_config(1), h);
    for (const auto& row : r.rows) EXPECT_DOUBLE_EQ(row.score, 25.0);
}

TEST(RunCondition, SplitsWellFormedAndTemplateExcluded) {
    const auto r = run_condition(corpus(), fx::protocol_config(1), truth_predictor());
    std::string why;
    EXPECT_TRUE(fx::splits_well_formed(r, 4, 2, &why)) << why;
    ASSERT_EQ(r.splits.size(), 2u);
    EXPECT_NE(r.splits[0].train, r.splits[1].train);  // resampled per repetition
}

TEST(RunCondition, PersonDependentUsesTasks) {
    auto c = fx::protocol_config(1);
    c = condition_preset("person_dependent", Normalization::original);
    c.repetitions = 1;
    const auto r = run_condition(corpus(), c, truth_predictor());
    EXPECT_EQ(r.rows.size(), 9u);
    for (const auto& s : r.splits) {
        EXPECT_EQ(s.train.size(), 5u);
        EXPECT_EQ(s.val.size(), 1u);
        EXPECT_EQ(s.test.size(), 2u);
    }
}

TEST(RunCondition, DeterministicAcrossRunsAndWorkers) {
    const Manifest m = corpus();
    const auto a = run_condition(m, fx::protocol_config(1));
    const auto b = run_condition(m, fx::protocol_config(1));
    const auto c = run_condition(m, fx::protocol_config(4));
    EXPECT_EQ(a.rows, b.rows);
    EXPECT_EQ(a.summary, b.summary);
    EXPECT_EQ(a.rows, c.rows);
    EXPECT_EQ(a.splits, c.splits);
    EXPECT_EQ(a.summary, c.summary);
}

TEST(RunCondition, ErrorsNameTheRepetition) {
    auto c = fx::protocol_config(1);
    c.n_train = 8;
    try {
        run_condition(corpus(), c, truth_predictor());
        FAIL();
    } catch (const ContractViolation& e) {
        EXPECT_NE(std::string(e.what()).find("repetition 0"), std::string::npos) << e.what();
    }
}

TEST(RunCondition, DeepfnUsesStubNormalizerAndCache) {
    auto c = fx::protocol_config(1);
    c.normalization = Normalization::deepfn;
    c.profile = ArchitectureProfile::tiny();
    std::set<std::string> mapped;
    std::mutex mu;
    RunHooks h = truth_predictor();
    h.normalizer = [&](const std::string& id, const std::vector<GrayImage>& imgs) {
        std::lock_guard lock(mu);
        mapped.insert(id);
        EXPECT_EQ(imgs.front().height, 32u);
        return imgs;
    };
    const auto r = run_condition(corpus(), c, h);
    EXPECT_EQ(mapped.size(), 9u);
    EXPECT_EQ(mapped.count(r.template_id), 0u);
}

TEST(NormalizerCache, SecondCallLoadsSameModel) {
    const fs::path cache = fs::temp_directory_path() / "deepfn_test_cache";
    fs::remove_all(cache);
    const Manifest m = corpus();
    const auto subj = detail::load_preprocessed(m, m.samples_of("S01"), 32);
    const auto tmpl = detail::load_preprocessed(m, m.samples_of("S00"), 32);
    NormalizerTrainConfig cfg;
    cfg.iterations = 2;
    cfg.batch_size = 2;
    const auto a = obtain_normalizer("S01", "S00", subj, tmpl, ArchitectureProfile::tiny(), cfg, cache);
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(cache)) ++files;
    EXPECT_EQ(files, 1u);
    const auto b = obtain_normalizer("S01", "S00", subj, tmpl, ArchitectureProfile::tiny(), cfg, cache);
    EXPECT_EQ(normalize(a, subj), normalize(b, subj));
    cfg.iterations = 3;  // a different config is a different key
    obtain_normalizer("S01", "S00", subj, tmpl, ArchitectureProfile::tiny(), cfg, cache);
    files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(cache)) ++files;
    EXPECT_EQ(files, 2u);
    fs::remove_all(cache);
}

TEST(NormalizerCache, SeedIndependentOfRepetition) {
    NormalizerTrainConfig cfg;
    cfg.seed = 4;
    EXPECT_EQ(subject_normalizer_seed(cfg, "S01"), subject_normalizer_seed(cfg, "S01"));
    EXPECT_NE(subject_normalizer_seed(cfg, "S01"), subject_normalizer_seed(cfg, "S02"));
}
