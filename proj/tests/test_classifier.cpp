#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "deepfn/classifier.hpp"
#include "support/classifier_fixture.hpp"

using namespace deepfn;
namespace fx = deepfn::testing;
namespace fs = std::filesystem;

namespace {

const ClassifierTrainResult& overfit() {
    static const ClassifierTrainResult r = [] {
        const auto d = fx::rectangle_fixture();
        return train_classifier(d, d, 2, fx::rectangle_fixture_config(4));
    }();
    return r;
}

}  // namespace

TEST(LeNet, ShapeTraceMatchesTable) {
    const auto m = build_lenet5(12, 0);
    const std::vector<Shape> expected = {{62, 62, 6}, {31, 31, 6}, {29, 29, 16}, {14, 14, 16}, {3136}, {120}, {84}, {12}};
    EXPECT_EQ(m.net.shape_trace(), expected);
    EXPECT_EQ(build_lenet5(5, 0).net.output_shape(), (Shape{5}));
}

TEST(LeNet, ParameterCount) {
    // conv 60 + conv 880 + 3136*120+120 + 120*84+84 + 84*12+12
    EXPECT_EQ(build_lenet5(12, 0).net.parameter_count(), 388564u);
    EXPECT_EQ(build_lenet5(5, 0).net.parameter_count(), 388564u - 7 * 85);
}

TEST(LeNet, RejectsZeroOutputs) { EXPECT_THROW(build_lenet5(0, 0), ContractViolation); }

TEST(Predict, ZeroWeightsGiveHalf) {
    const auto m = build_lenet5(12, 0, false);
    const auto p = predict(m, fx::rectangle_fixture(3).images);
    ASSERT_EQ(p.size(), 3u);
    for (const auto& row : p) {
        ASSERT_EQ(row.size(), 12u);
        for (double v : row) EXPECT_DOUBLE_EQ(v, 0.5);
    }
}

TEST(Predict, RangeDeterminismAndSizeCheck) {
    const auto m = build_lenet5(4, 17);
    const auto imgs = fx::rectangle_fixture(6, 20.0).images;
    const auto a = predict(m, imgs), b = predict(m, imgs);
    EXPECT_EQ(a, b);
    for (const auto& row : a)
        for (double v : row) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    EXPECT_THROW(predict(m, {GrayImage(32, 32, 0)}), ContractViolation);
}

TEST(Binarize, ThresholdConvention) {
    EXPECT_EQ(binarize({{0.49, 0.51}}), (std::vector<std::vector<int>>{{0, 1}}));
    EXPECT_EQ(binarize({{0.5}}), (std::vector<std::vector<int>>{{1}}));
    const std::vector<std::vector<double>> bits = {{0, 1, 1}, {1, 0, 0}};
    EXPECT_EQ(binarize(bits), (std::vector<std::vector<int>>{{0, 1, 1}, {1, 0, 0}}));
    EXPECT_EQ(binarize({{0.3, 0.7}}, 0.8), (std::vector<std::vector<int>>{{0, 0}}));
}

TEST(MacroF1, HandComputed) {
    // AU0: tp 1, fp 1, fn 1 -> 0.5. AU1: tp 2, fp 0, fn 0 -> 1.
    const std::vector<std::vector<int>> preds = {{1, 1}, {1, 0}, {0, 1}, {0, 0}};
    const std::vector<std::vector<int>> labels = {{1, 1}, {0, 0}, {1, 1}, {0, 0}};
    EXPECT_DOUBLE_EQ(macro_f1(preds, labels), 0.75);
    EXPECT_DOUBLE_EQ(f1_score(0, 0, 0), 0.0);
    EXPECT_THROW(macro_f1({}, {}), ContractViolation);
}

TEST(TrainClassifier, OneEpochOneCheckpoint) {
    const auto d = fx::rectangle_fixture(8);
    auto cfg = fx::rectangle_fixture_config(4);
    cfg.epochs = 1;
    const auto r = train_classifier(d, d, 2, cfg);
    EXPECT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.best.epoch, 1u);
}

TEST(TrainClassifier, Preconditions) {
    const auto d = fx::rectangle_fixture(4);
    const auto cfg = fx::rectangle_fixture_config(4);
    EXPECT_THROW(train_classifier({}, d, 2, cfg), ContractViolation);
    EXPECT_THROW(train_classifier(d, {}, 2, cfg), ContractViolation);
    EXPECT_THROW(train_classifier(d, d, 3, cfg), ContractViolation);  // label width
    auto bad = cfg;
    bad.epochs = 0;
    EXPECT_THROW(train_classifier(d, d, 2, bad), ContractViolation);
}

TEST(TrainClassifier, Deterministic) {
    const auto d = fx::rectangle_fixture(8, 10.0);
    auto cfg = fx::rectangle_fixture_config(4);
    cfg.epochs = 3;
    const auto a = train_classifier(d, d, 2, cfg), b = train_classifier(d, d, 2, cfg);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(predict(a.best.model, d.images), predict(b.best.model, d.images));
}

TEST(TrainClassifier, AugmentationFlagChangesTraining) {
    const auto d = fx::rectangle_fixture(8, 10.0);
    auto cfg = fx::rectangle_fixture_config(4);
    cfg.epochs = 2;
    const auto plain = train_classifier(d, d, 2, cfg);
    cfg.augment = true;
    const auto aug = train_classifier(d, d, 2, cfg);
    EXPECT_NE(plain.history[0].train_loss, aug.history[0].train_loss);
}

TEST(ClassifierOverfit, ReachesFullTrainAccuracy) {
    const auto& r = overfit();
    EXPECT_EQ(r.history.size(), 50u);
    EXPECT_GE(fx::label_accuracy(r.best.model, fx::rectangle_fixture()), 0.99);
}

TEST(ClassifierOverfit, LossFallsTenfold) {
    const auto& h = overfit().history;
    EXPECT_GE(h.front().train_loss / h.back().train_loss, 10.0);
}

TEST(ClassifierOverfit, CheckpointReproducesValidationF1) {
    const auto& r = overfit();
    EXPECT_EQ(evaluate_macro_f1(r.best.model, fx::rectangle_fixture()), r.best.val_f1);
    double best = 0;
    std::size_t first = 0;
    for (const auto& e : r.history)
        if (e.val_f1 > best) best = e.val_f1, first = e.epoch;
    EXPECT_EQ(r.best.epoch, first);  // earliest epoch among ties
}

TEST(ClassifierWeights, RoundTrip) {
    const fs::path dir = fs::temp_directory_path() / "deepfn_test_dfc";
    fs::create_directories(dir);
    const auto m = build_lenet5(3, 2);
    save_classifier(dir / "c.dfc", m);
    const auto back = load_classifier(dir / "c.dfc");
    EXPECT_EQ(back.num_aus, 3u);
    const auto imgs = fx::rectangle_fixture(4, 5.0).images;
    EXPECT_EQ(predict(back, imgs), predict(m, imgs));
    // a normalizer container is not a classifier
    std::ifstream in(dir / "c.dfc", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    bytes[3] = 'X';
    std::ofstream(dir / "bad.dfc", std::ios::binary) << bytes;
    EXPECT_THROW(load_classifier(dir / "bad.dfc"), WeightsFormatError);
    fs::remove_all(dir);
}
