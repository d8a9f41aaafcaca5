#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepfn/adam.hpp"
#include "deepfn/imaging.hpp"
#include "deepfn/network.hpp"
#include "deepfn/weights_io.hpp"

namespace deepfn {

/// Scales the encoder/decoder tables. `full` reproduces the published layer sizes.
struct ArchitectureProfile {
    std::size_t input_side = 128;
    std::size_t base_filters = 128;
    std::size_t latent_dense = 1024;
    float leaky_alpha = 0.1f;

    static ArchitectureProfile full() { return {128, 128, 1024, 0.1f}; }
    static ArchitectureProfile tiny() { return {32, 16, 64, 0.1f}; }

    /// Side of the reshaped latent grid before the last encoder convolution.
    std::size_t seed_side() const { return input_side / 32; }

    void validate() const {
        require(input_side % 16 == 0, "profile input_side " + std::to_string(input_side) +
                                          " must be divisible by 16 (four stride-2 halvings)");
        // The dense re-expansion reshapes to half of the encoder's final grid.
        require(input_side % 32 == 0,
                "profile input_side " + std::to_string(input_side) + " must be divisible by 32 for the latent reshape");
        require(base_filters % 4 == 0 && base_filters >= 4, "profile base_filters must be a positive multiple of 4");
        require(latent_dense >= 1, "profile latent_dense must be >= 1");
    }

    friend bool operator==(const ArchitectureProfile&, const ArchitectureProfile&) = default;
};

inline std::vector<LayerSpec> encoder_layers(const ArchitectureProfile& p) {
    const std::size_t b = p.base_filters, s = p.seed_side();
    const auto lrelu = Activation::leaky_relu;
    return {
        LayerSpec::conv("conv1", b, 5, 2, Padding::same, lrelu),
        LayerSpec::conv("conv2", 2 * b, 5, 2, Padding::same, lrelu),
        LayerSpec::conv("conv3", 4 * b, 5, 2, Padding::same, lrelu),
        LayerSpec::conv("conv4", 8 * b, 5, 2, Padding::same, lrelu),
        LayerSpec::flat("flatten"),
        LayerSpec::fully_connected("latent", p.latent_dense),
        LayerSpec::fully_connected("expand", s * s * 8 * b),
        LayerSpec::reshape_to("reshape", {s, s, 8 * b}),
        LayerSpec::conv("conv5", 16 * b, 3, 1, Padding::same, lrelu),
        LayerSpec::shuffle("shuffle", 2),
    };
}

inline std::vector<LayerSpec> decoder_layers(const ArchitectureProfile& p) {
    const std::size_t b = p.base_filters;
    const auto lrelu = Activation::leaky_relu;
    return {
        LayerSpec::conv("conv1", 8 * b, 3, 1, Padding::same, lrelu),
        LayerSpec::shuffle("shuffle1", 2),
        LayerSpec::conv("conv2", 4 * b, 3, 1, Padding::same, lrelu),
        LayerSpec::shuffle("shuffle2", 2),
        LayerSpec::conv("conv3", 2 * b, 3, 1, Padding::same, lrelu),
        LayerSpec::shuffle("shuffle3", 2),
        LayerSpec::conv("conv4", b, 3, 1, Padding::same, lrelu),
        LayerSpec::shuffle("shuffle4", 2),
        LayerSpec::conv("output", 1, 5, 1, Padding::same, Activation::sigmoid),
    };
}

enum class Branch { subject, template_ };

inline const char* to_string(Branch b) { return b == Branch::subject ? "subject" : "template"; }

/**
 * Shared encoder with two decoders of identical architecture: decoder_x
 * reconstructs the subject, decoder_y the template identity.
 */
struct NormalizerModel {
    ArchitectureProfile profile;
    Sequential encoder;
    Sequential decoder_x;
    Sequential decoder_y;

    const Sequential& decoder(Branch b) const { return b == Branch::subject ? decoder_x : decoder_y; }
    Sequential& decoder(Branch b) { return b == Branch::subject ? decoder_x : decoder_y; }

    NormalizerModel clone() const { return {profile, encoder.clone(), decoder_x.clone(), decoder_y.clone()}; }

    /// Encoder trace followed by decoder trace, one entry per table row.
    std::vector<Shape> shape_trace() const {
        auto t = encoder.shape_trace();
        auto d = decoder_y.shape_trace();
        t.insert(t.end(), d.begin(), d.end());
        return t;
    }
};

/// Allocates and initializes a model. Without `initialize`, all weights are zero.
inline NormalizerModel build_normalizer(const ArchitectureProfile& profile, std::uint64_t seed,
                                        bool initialize = true) {
    profile.validate();
    const std::size_t side = profile.input_side;
    const std::size_t latent_side = side / 16;
    NormalizerModel m{profile,
                      Sequential("encoder", {side, side, 1}, encoder_layers(profile), profile.leaky_alpha),
                      Sequential("decoder_x", {latent_side, latent_side, 4 * profile.base_filters},
                                 decoder_layers(profile), profile.leaky_alpha),
                      Sequential("decoder_y", {latent_side, latent_side, 4 * profile.base_filters},
                                 decoder_layers(profile), profile.leaky_alpha)};
    if (initialize) {
        SeededRng rng(seed);
        auto re = rng.fork(1), rx = rng.fork(2), ry = rng.fork(3);
        m.encoder.initialize(re);
        m.decoder_x.initialize(rx);
        m.decoder_y.initialize(ry);
    }
    return m;
}

enum class ReconstructionLoss { mae, rmse };

struct NormalizerTrainConfig {
    std::size_t iterations = 50000;
    std::size_t batch_size = 64;
    ReconstructionLoss loss = ReconstructionLoss::mae;
    bool augment = true;
    AugmentationParams augmentation{};
    AdamSettings optimizer{};
    std::size_t checkpoint_every = 5000;
    std::uint64_t seed = 0;

    void validate() const {
        require(iterations >= 1, "normalizer iterations must be >= 1");
        require(batch_size >= 1, "normalizer batch_size must be >= 1");
        augmentation.validate();
    }
};

struct LossRecord {
    std::size_t iteration = 0;
    Branch branch = Branch::template_;
    double loss = 0;
};

using LossHistory = std::vector<LossRecord>;

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NormalizerTrainResult {
    NormalizerModel model;
    LossHistory history;
};

/// Called after every `checkpoint_every` iterations with the 1-based iteration count.
using NormalizerCheckpointFn = std::function<void(std::size_t iteration, const NormalizerModel&)>;

inline Tensor<float> reconstruction_loss(const Tensor<float>& pred, const Tensor<float>& target,
                                         ReconstructionLoss kind) {
    return kind == ReconstructionLoss::mae ? loss_mae(pred, target) : loss_rmse(pred, target);
}

namespace detail {

inline void require_side(const std::vector<GrayImage>& images, std::size_t side, const char* what) {
    for (const auto& img : images)
        require(img.height == side && img.width == side,
                std::string(what) + ": image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                    " but the profile expects " + std::to_string(side) + "x" + std::to_string(side));
}

}  // namespace detail

/**
 * Alternating-batch training of the shared encoder and both decoders.
 *
 * Each iteration takes one Adam step on the template branch (encoder +
 * decoder_y) and then one on the subject branch (encoder + decoder_x). Inputs
 * are augmented copies, targets the clean images. The two branches keep their
 * own step counters but share the encoder's moment buffers.
 *
 * Images must already be preprocessed to the profile side. `initial`, when
 * given, replaces the freshly built model as the starting point.
 */
inline NormalizerTrainResult train_normalizer(const std::vector<GrayImage>& subject_images,
                                              const std::vector<GrayImage>& template_images,
                                              const ArchitectureProfile& profile, const NormalizerTrainConfig& config,
                                              const NormalizerModel* initial = nullptr,
                                              const NormalizerCheckpointFn& on_checkpoint = {}) {
    config.validate();
    require(!subject_images.empty(), "train_normalizer: subject image set is empty");
    require(!template_images.empty(), "train_normalizer: template image set is empty");
    detail::require_side(subject_images, profile.input_side, "train_normalizer");
    detail::require_side(template_images, profile.input_side, "train_normalizer");

    NormalizerTrainResult result{initial ? initial->clone() : build_normalizer(profile, mix_seed(config.seed, 1)),
                                 {}};
    NormalizerModel& model = result.model;
    require(model.profile == profile, "train_normalizer: initial model profile differs from requested profile");
    result.history.reserve(2 * config.iterations);

    AdamState<float> template_opt(config.optimizer);
    AdamState<float> subject_opt = template_opt.sharing_moments(config.optimizer);

    SeededRng rng = SeededRng(config.seed).fork(2);
    const AugmentationParams& aug = config.augmentation;

    auto step = [&](Branch branch, const std::vector<GrayImage>& pool, AdamState<float>& opt, std::size_t iter) {
        std::vector<GrayImage> inputs, targets;
        inputs.reserve(config.batch_size);
        targets.reserve(config.batch_size);
        for (std::size_t k = 0; k < config.batch_size; ++k) {
            const GrayImage& img = pool[std::size_t(rng.below(pool.size()))];
            targets.push_back(img);
            inputs.push_back(config.augment ? augment(img, aug, rng) : img);
        }
        const Tensor<float> x = images_to_tensor(inputs);
        const Tensor<float> y = images_to_tensor(targets);

        Sequential& dec = model.decoder(branch);
        std::vector<Tensor<float>> params = model.encoder.parameters();
        for (const auto& p : dec.parameters()) params.push_back(p);

        GradientTape<float> tape;
        const Tensor<float> recon = dec.forward(model.encoder.forward(x));
        const Tensor<float> loss = reconstruction_loss(recon, y, config.loss);
        const double value = loss.item();
        if (!std::isfinite(value))
            throw TrainingDiverged("normalizer loss became non-finite at iteration " + std::to_string(iter) +
                                   " on the " + to_string(branch) + " branch");
        const Gradients<float> grads = backward(tape, loss);
        adam_step(params, grads, opt);
        result.history.push_back({iter, branch, value});
    };

    for (std::size_t it = 0; it < config.iterations; ++it) {
        step(Branch::template_, template_images, template_opt, it);
        step(Branch::subject, subject_images, subject_opt, it);
        if (on_checkpoint && config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0)
            on_checkpoint(it + 1, model);
    }
    return result;
}

/// Encodes and decodes through the chosen decoder, in batches, without recording gradients.
inline std::vector<GrayImage> decode_through(const NormalizerModel& model, const std::vector<GrayImage>& images,
                                             Branch branch, std::size_t chunk = 32) {
    detail::require_side(images, model.profile.input_side, "normalize");
    std::vector<GrayImage> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const std::size_t end = std::min(images.size(), start + chunk);
        const std::vector<GrayImage> batch(images.begin() + std::ptrdiff_t(start), images.begin() + std::ptrdiff_t(end));
        const Tensor<float> y = model.decoder(branch).forward(model.encoder.forward(images_to_tensor(batch)));
        for (auto& img : tensor_to_images(y)) out.push_back(std::move(img));
    }
    return out;
}

/// Maps subject images onto the template identity: decoder_y(encoder(x)).
inline std::vector<GrayImage> normalize(const NormalizerModel& model, const std::vector<GrayImage>& images) {
    return decode_through(model, images, Branch::template_);
}

/// Same-identity reconstruction, for loss reporting and diagnostics.
inline std::vector<GrayImage> reconstruct_self(const NormalizerModel& model, const std::vector<GrayImage>& images,
                                               Branch branch) {
    return decode_through(model, images, branch);
}

/// Float-valued variant of normalize/reconstruct for diagnostics that need the raw sigmoid outputs.
inline Tensor<float> decode_tensor(const NormalizerModel& model, const std::vector<GrayImage>& images, Branch branch) {
    detail::require_side(images, model.profile.input_side, "decode_tensor");
    return model.decoder(branch).forward(model.encoder.forward(images_to_tensor(images)));
}

inline constexpr const char* kNormalizerMagic = "DFN1";

inline WeightsContainer to_container(const NormalizerModel& m) {
    WeightsContainer c{kNormalizerMagic,
                       {{"input_side", std::int64_t(m.profile.input_side)},
                        {"base_filters", std::int64_t(m.profile.base_filters)},
                        {"latent_dense", std::int64_t(m.profile.latent_dense)},
                        {"leaky_alpha_micro", std::int64_t(std::llround(double(m.profile.leaky_alpha) * 1e6))}},
                       {}};
    append_blobs(c, m.encoder);
    append_blobs(c, m.decoder_x);
    append_blobs(c, m.decoder_y);
    return c;
}

inline ArchitectureProfile profile_from(const WeightsContainer& c) {
    if (c.magic != kNormalizerMagic) throw WeightsFormatError("not a normalizer weights file (magic '" + c.magic + "')");
    ArchitectureProfile p;
    p.input_side = std::size_t(c.descriptor_value("input_side"));
    p.base_filters = std::size_t(c.descriptor_value("base_filters"));
    p.latent_dense = std::size_t(c.descriptor_value("latent_dense"));
    p.leaky_alpha = float(double(c.descriptor_value("leaky_alpha_micro")) / 1e6);
    return p;
}

inline NormalizerModel from_container(const WeightsContainer& c) {
    NormalizerModel m = build_normalizer(profile_from(c), 0, false);
    assign_blobs(c, m.encoder);
    assign_blobs(c, m.decoder_x);
    assign_blobs(c, m.decoder_y);
    return m;
}

inline void save_normalizer(const std::filesystem::path& path, const NormalizerModel& m) {
    save_weights(path, to_container(m));
}

inline NormalizerModel load_normalizer(const std::filesystem::path& path) { return from_container(load_weights(path)); }

}  // namespace deepfn
