#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "deepfn/imaging.hpp"
#include "support/image_fixtures.hpp"

using namespace deepfn;
namespace fx = deepfn::testing;
namespace fs = std::filesystem;

TEST(Equalize, FourPixelFixture) {
    const GrayImage img(2, 2, std::vector<std::uint8_t>{10, 10, 20, 30});
    EXPECT_EQ(equalize_histogram(img).pixels, (std::vector<std::uint8_t>{0, 0, 128, 255}));
}

TEST(Equalize, ConstantImageUnchanged) {
    const GrayImage img(3, 5, 77);
    EXPECT_EQ(equalize_histogram(img), img);
}

TEST(Equalize, MonotoneAndFullRange) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const GrayImage img = fx::skewed_random_image(s);
        const GrayImage eq = equalize_histogram(img);
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            for (std::size_t j = 0; j < img.pixels.size(); j += 37)
                if (img.pixels[i] < img.pixels[j]) ASSERT_LE(eq.pixels[i], eq.pixels[j]);
        EXPECT_EQ(*std::min_element(eq.pixels.begin(), eq.pixels.end()), 0);
        EXPECT_EQ(*std::max_element(eq.pixels.begin(), eq.pixels.end()), 255);
    }
}

TEST(Equalize, KsToUniformDecreases) {
    for (std::uint64_t s = 0; s < 100; ++s) {
        const GrayImage img = fx::skewed_random_image(1000 + s);
        EXPECT_LT(fx::ks_to_uniform(equalize_histogram(img)), fx::ks_to_uniform(img)) << "seed " << s;
    }
}

TEST(Grayscale, Rec601Weights) {
    const RgbImage rgb{1, 3, 3, {255, 0, 0, 0, 255, 0, 10, 20, 30}};
    const GrayImage g = to_grayscale(rgb);
    EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{76, 150, 18}));
}

TEST(Resize, IdentityAndConstant) {
    const GrayImage img = fx::skewed_random_image(3, 8, 8);
    EXPECT_EQ(resize_bilinear(img, 8, 8), img);
    EXPECT_EQ(resize_bilinear(GrayImage(7, 9, 42), 32, 32), GrayImage(32, 32, 42));
    EXPECT_THROW(resize_bilinear(img, 0, 4), ContractViolation);
}

TEST(Resize, DownsampleByTwoAveragesBlocks) {
    GrayImage img(4, 4);
    for (std::size_t i = 0; i < 16; ++i) img.pixels[i] = std::uint8_t(i * 10);
    const GrayImage half = resize_bilinear(img, 2, 2);
    // Half-pixel centres land between the four source pixels of each block.
    EXPECT_EQ(half.at(0, 0), to_u8((0 + 10 + 40 + 50) / 4.0));
    EXPECT_EQ(half.at(1, 1), to_u8((100 + 110 + 140 + 150) / 4.0));
}

TEST(Preprocess, EqualizesThenResizes) {
    const GrayImage img = fx::skewed_random_image(9, 40, 40);
    EXPECT_EQ(preprocess_face(img, 32), resize_bilinear(equalize_histogram(img), 32, 32));
}

TEST(Augment, NoneIsIdentity) {
    const GrayImage img = fx::skewed_random_image(4, 32, 32);
    SeededRng rng(1);
    EXPECT_EQ(augment(img, AugmentationParams::none(), rng), img);
}

TEST(Augment, DeterministicForSeed) {
    const GrayImage img = fx::skewed_random_image(5, 32, 32);
    SeededRng a(11), b(11), c(12);
    const AugmentationParams p{};
    const GrayImage x = augment(img, p, a);
    EXPECT_EQ(x, augment(img, p, b));
    EXPECT_NE(x, augment(img, p, c));
}

TEST(Augment, FlipOnlyMirrors) {
    const GrayImage img = fx::skewed_random_image(6, 8, 8);
    AugmentationParams p = AugmentationParams::none();
    p.flip_probability = 1.0;
    SeededRng rng(2);
    const GrayImage out = random_affine(img, p, rng);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(out.at(y, x), img.at(y, 7 - x));
}

TEST(Augment, RejectsBadParams) {
    AugmentationParams p{};
    p.zoom_range = 1.0;
    SeededRng rng(0);
    EXPECT_THROW(random_affine(GrayImage(4, 4, 1), p, rng), ContractViolation);
    p = {};
    p.flip_probability = 1.5;
    EXPECT_THROW(p.validate(), ContractViolation);
}

TEST(Warp, FlowKeepsControlPointSpread) {
    // Blend normalisation keeps the per-pixel displacement std at sigma everywhere.
    AugmentationParams p = AugmentationParams::none();
    p.warp_sigma = 10.0;
    const std::size_t side = 256;
    double sum_sq_centre = 0, sum_sq_mid = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
        SeededRng rng{std::uint64_t(t)};
        const FlowField f = gaussian_flow(side, side, p, rng);
        const double c = f.dx[0];
        const double m = f.dx[32 * side + 32];  // halfway between lattice points
        sum_sq_centre += c * c;
        sum_sq_mid += m * m;
    }
    EXPECT_NEAR(std::sqrt(sum_sq_centre / trials), 10.0, 1.2);
    EXPECT_NEAR(std::sqrt(sum_sq_mid / trials), 10.0, 1.2);
}

TEST(Tensorize, RoundTrip) {
    std::vector<GrayImage> imgs = {fx::skewed_random_image(1, 4, 6), fx::skewed_random_image(2, 4, 6)};
    const auto t = images_to_tensor(imgs);
    EXPECT_EQ(t.shape(), (Shape{2, 4, 6, 1}));
    EXPECT_FLOAT_EQ(t.data()[0], float(imgs[0].pixels[0]) / 255.0f);
    EXPECT_EQ(tensor_to_images(t), imgs);
    imgs.push_back(GrayImage(5, 6, 0));
    EXPECT_THROW(images_to_tensor(imgs), ContractViolation);
}

TEST(Png, RoundTrip) {
    const fs::path dir = fs::temp_directory_path() / "deepfn_test_png";
    fs::create_directories(dir);
    const GrayImage img = fx::skewed_random_image(8, 13, 17);
    write_png(dir / "a.png", img);
    EXPECT_EQ(read_png(dir / "a.png"), img);
    EXPECT_THROW(read_png(dir / "missing.png"), ImageIoError);
    std::ofstream(dir / "bad.png") << "not a png";
    EXPECT_THROW(read_png(dir / "bad.png"), ImageIoError);
    fs::remove_all(dir);
}
