#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "deepfn/adam.hpp"
#include "deepfn/imaging.hpp"
#include "deepfn/network.hpp"
#include "deepfn/rng.hpp"
#include "deepfn/weights_io.hpp"

namespace deepfn {

inline constexpr std::size_t kClassifierSide = 64;

/// LeNet-5 as tabulated: two valid 3x3 ReLU convolutions with average pooling, then 120, 84, sigmoid head.
inline std::vector<LayerSpec> lenet5_layers(std::size_t num_aus) {
    return {LayerSpec::conv("conv1", 6, 3, 1, Padding::valid, Activation::relu),
            LayerSpec::pool("pool1"),
            LayerSpec::conv("conv2", 16, 3, 1, Padding::valid, Activation::relu),
            LayerSpec::pool("pool2"),
            LayerSpec::flat("flatten"),
            LayerSpec::fully_connected("fc1", 120),
            LayerSpec::fully_connected("fc2", 84),
            LayerSpec::fully_connected("head", num_aus, Activation::sigmoid)};
}

struct ClassifierModel {
    std::size_t num_aus = 0;
    Sequential net;

    ClassifierModel clone() const { return {num_aus, net.clone()}; }
};

inline ClassifierModel build_lenet5(std::size_t num_aus, std::uint64_t seed, bool initialize = true) {
    require(num_aus >= 1, "build_lenet5: num_aus must be >= 1");
    ClassifierModel m{num_aus, Sequential("lenet", {kClassifierSide, kClassifierSide, 1}, lenet5_layers(num_aus))};
    if (initialize) {
        SeededRng rng(mix_seed(seed, 0xC1A5));
        m.net.initialize(rng);
    }
    return m;
}

/// Images paired with binary label rows (one row per image, one column per AU).
struct LabeledImages {
    std::vector<GrayImage> images;
    std::vector<std::vector<int>> labels;

    std::size_t size() const { return images.size(); }
};

struct ClassifierTrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    AdamSettings optimizer{};
    double threshold = 0.5;
    bool augment = false;  // training-time augmentation of classifier inputs
    AugmentationParams augmentation{};
    std::uint64_t seed = 0;

    void validate() const {
        require(epochs >= 1, "classifier epochs must be >= 1");
        require(batch_size >= 1, "classifier batch_size must be >= 1");
        if (augment) augmentation.validate();
    }
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;  // mean BCE over the epoch's batches
    double val_f1 = 0;
};

struct Checkpoint {
    std::size_t epoch = 0;
    ClassifierModel model;
    double val_f1 = 0;
};

struct ClassifierTrainResult {
    Checkpoint best;
    std::vector<EpochRecord> history;
};

namespace detail {

inline void require_classifier_inputs(const std::vector<GrayImage>& images) {
    for (const auto& img : images)
        require(img.height == kClassifierSide && img.width == kClassifierSide,
                "classifier input must be 64x64, got " + std::to_string(img.height) + "x" + std::to_string(img.width));
}

inline Tensor<float> label_tensor(const std::vector<std::vector<int>>& rows, std::size_t width) {
    std::vector<float> data;
    data.reserve(rows.size() * width);
    for (const auto& r : rows) {
        require(r.size() == width, "label width " + std::to_string(r.size()) + " does not match num_aus " +
                                       std::to_string(width));
        for (int v : r) data.push_back(float(v));
    }
    return Tensor<float>({rows.size(), width}, std::move(data));
}

}  // namespace detail

/// Probability matrix, one row per image.
inline std::vector<std::vector<double>> predict(const ClassifierModel& model, const std::vector<GrayImage>& images,
                                                std::size_t chunk = 256) {
    detail::require_classifier_inputs(images);
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const std::size_t end = std::min(images.size(), start + chunk);
        const std::vector<GrayImage> batch(images.begin() + std::ptrdiff_t(start), images.begin() + std::ptrdiff_t(end));
        const Tensor<float> p = model.net.forward(images_to_tensor(batch));
        const auto d = p.data();
        for (std::size_t i = 0; i < batch.size(); ++i)
            out.emplace_back(d.begin() + std::ptrdiff_t(i * model.num_aus),
                             d.begin() + std::ptrdiff_t((i + 1) * model.num_aus));
    }
    return out;
}

/// p >= threshold maps to 1.
inline std::vector<std::vector<int>> binarize(const std::vector<std::vector<double>>& probs, double threshold = 0.5) {
    std::vector<std::vector<int>> out;
    out.reserve(probs.size());
    for (const auto& row : probs) {
        std::vector<int> b;
        b.reserve(row.size());
        for (double p : row) b.push_back(p >= threshold ? 1 : 0);
        out.push_back(std::move(b));
    }
    return out;
}

/// F1 = 2TP / (2TP + FP + FN), taken as 0 when there are no positives in either vector.
inline double f1_score(long tp, long fp, long fn) {
    const long denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * double(tp) / double(denom);
}

/// Unweighted mean over AUs of frame-level F1, pooled over all rows.
inline double macro_f1(const std::vector<std::vector<int>>& preds, const std::vector<std::vector<int>>& labels) {
    require(preds.size() == labels.size() && !preds.empty(), "macro_f1: row counts differ or are zero");
    const std::size_t width = labels[0].size();
    double total = 0;
    for (std::size_t a = 0; a < width; ++a) {
        long tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const int p = preds[i][a], y = labels[i][a];
            tp += p && y;
            fp += p && !y;
            fn += !p && y;
        }
        total += f1_score(tp, fp, fn);
    }
    return total / double(width);
}

inline double evaluate_macro_f1(const ClassifierModel& model, const LabeledImages& data, double threshold = 0.5) {
    return macro_f1(binarize(predict(model, data.images), threshold), data.labels);
}

/**
 * BCE training with Adam, one shuffled pass per epoch. After every epoch the
 * model is scored by macro-F1 on `val`; the best epoch is kept (earliest on ties).
 */
inline ClassifierTrainResult train_classifier(const LabeledImages& train, const LabeledImages& val, std::size_t num_aus,
                                              const ClassifierTrainConfig& config,
                                              const ClassifierModel* initial = nullptr) {
    config.validate();
    require(train.size() > 0, "train_classifier: empty training set");
    require(val.size() > 0, "train_classifier: empty validation set");
    require(train.labels.size() == train.size() && val.labels.size() == val.size(),
            "train_classifier: image and label counts differ");
    detail::require_classifier_inputs(train.images);
    detail::require_classifier_inputs(val.images);
    const Tensor<float> all_labels = detail::label_tensor(train.labels, num_aus);
    detail::label_tensor(val.labels, num_aus);

    ClassifierModel model = initial ? initial->clone() : build_lenet5(num_aus, config.seed);
    require(model.num_aus == num_aus, "train_classifier: initial model has a different head width");
    AdamState<float> opt(config.optimizer);
    SeededRng rng = SeededRng(config.seed).fork(7);

    ClassifierTrainResult result;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<GrayImage> imgs;
            std::vector<std::vector<int>> labs;
            for (std::size_t k = start; k < end; ++k) {
                const GrayImage& img = train.images[order[k]];
                imgs.push_back(config.augment ? augment(img, config.augmentation, rng) : img);
                labs.push_back(train.labels[order[k]]);
            }
            const Tensor<float> x = images_to_tensor(imgs);
            const Tensor<float> y = detail::label_tensor(labs, num_aus);
            std::vector<Tensor<float>> params = model.net.parameters();
            GradientTape<float> tape;
            const Tensor<float> loss = loss_bce(model.net.forward(x), y);
            loss_sum += loss.item();
            ++batches;
            adam_step(params, backward(tape, loss), opt);
        }
        const double f1 = evaluate_macro_f1(model, val, config.threshold);
        result.history.push_back({epoch, loss_sum / double(batches), f1});
        if (epoch == 1 || f1 > result.best.val_f1) result.best = {epoch, model.clone(), f1};
    }
    return result;
}

/// Mean BCE of a model over a labeled set.
inline double mean_bce(const ClassifierModel& model, const LabeledImages& data) {
    const auto probs = predict(model, data.images);
    std::vector<float> p;
    for (const auto& r : probs)
        for (double v : r) p.push_back(float(v));
    const Tensor<float> pt({data.size(), model.num_aus}, std::move(p));
    return loss_bce(pt, detail::label_tensor(data.labels, model.num_aus)).item();
}

inline constexpr const char* kClassifierMagic = "DFC1";

inline WeightsContainer to_container(const ClassifierModel& m) {
    WeightsContainer c{kClassifierMagic, {{"num_aus", std::int64_t(m.num_aus)}, {"input_side", std::int64_t(kClassifierSide)}}, {}};
    append_blobs(c, m.net);
    return c;
}

inline ClassifierModel classifier_from_container(const WeightsContainer& c) {
    if (c.magic != kClassifierMagic) throw WeightsFormatError("not a classifier weights file (magic '" + c.magic + "')");
    const auto n = c.descriptor_value("num_aus");
    if (n < 1) throw WeightsFormatError("classifier weights declare num_aus < 1");
    ClassifierModel m = build_lenet5(std::size_t(n), 0, false);
    assign_blobs(c, m.net);
    return m;
}

inline void save_classifier(const std::filesystem::path& path, const ClassifierModel& m) { save_weights(path, to_container(m)); }

inline ClassifierModel load_classifier(const std::filesystem::path& path) {
    return classifier_from_container(load_weights(path));
}

}  // namespace deepfn
