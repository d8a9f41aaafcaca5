#pragma once

// Procedural grayscale faces. Identity comes from a per-identity seed (oval
// geometry, shading, hair, feature placement, marks); each expression bit
// toggles one stroke group and is its pseudo-AU label.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "deepfn/imaging.hpp"
#include "deepfn/json_util.hpp"
#include "deepfn/manifest.hpp"
#include "deepfn/rng.hpp"

namespace deepfn {

inline constexpr std::size_t kMaxSyntheticExpressions = 4;

/// Pseudo-AU names, in bit order: mouth curve, brow raise, eye opening, jaw drop.
inline const std::array<std::string, kMaxSyntheticExpressions>& synthetic_au_names() {
    static const std::array<std::string, kMaxSyntheticExpressions> names = {"AU12", "AU02", "AU05", "AU26"};
    return names;
}

struct SyntheticFaceSpec {
    std::size_t n_identities = 5;
    std::size_t n_expressions = 2;
    std::size_t images_per_cell = 8;
    std::size_t image_side = 64;
    std::size_t n_tasks = 8;
    double noise_level = 1.0;  // per-pixel Gaussian std, in 8-bit levels
    bool intensities = true;
    std::string dataset_id = "SYNTH";
    std::vector<std::string> participant_datasets;  // round-robin; empty means dataset_id
    std::uint64_t seed = 7;

    void validate() const {
        require(image_side >= 16, "synthetic image_side must be >= 16, got " + std::to_string(image_side));
        require(n_identities >= 1, "synthetic n_identities must be >= 1");
        require(n_expressions >= 1 && n_expressions <= kMaxSyntheticExpressions,
                "synthetic n_expressions must be in [1, 4]");
        require(images_per_cell >= 1, "synthetic images_per_cell must be >= 1");
        require(n_tasks >= 1, "synthetic n_tasks must be >= 1");
        require(noise_level >= 0, "synthetic noise_level must be >= 0");
    }

    std::size_t cells() const { return std::size_t(1) << n_expressions; }
    std::size_t image_count() const { return n_identities * cells() * images_per_cell; }
};

inline nlohmann::json to_json(const SyntheticFaceSpec& s) {
    return {{"n_identities", s.n_identities}, {"n_expressions", s.n_expressions},
            {"images_per_cell", s.images_per_cell}, {"image_side", s.image_side},
            {"n_tasks", s.n_tasks}, {"noise_level", s.noise_level},
            {"intensities", s.intensities}, {"dataset_id", s.dataset_id},
            {"participant_datasets", s.participant_datasets}, {"seed", s.seed}};
}

inline SyntheticFaceSpec synthetic_spec_from_json(const nlohmann::json& j) {
    StrictObject o(j, "synthetic spec",
                   {"n_identities", "n_expressions", "images_per_cell", "image_side", "n_tasks", "noise_level",
                    "intensities", "dataset_id", "participant_datasets", "seed"});
    SyntheticFaceSpec s;
    o.get("n_identities", s.n_identities);
    o.get("n_expressions", s.n_expressions);
    o.get("images_per_cell", s.images_per_cell);
    o.get("image_side", s.image_side);
    o.get("n_tasks", s.n_tasks);
    o.get("noise_level", s.noise_level);
    o.get("intensities", s.intensities);
    o.get("dataset_id", s.dataset_id);
    o.get("participant_datasets", s.participant_datasets);
    o.get("seed", s.seed);
    return s;
}

/// Geometry and shading of one identity, in units of the image side.
struct SyntheticIdentity {
    double background, background_slope, background_angle, skin, hair, feature_darkness, light;
    double cx, cy, rx, ry, hairline;
    double eye_dx, eye_y, eye_rx, eye_ry;
    double brow_gap, brow_len;
    double mouth_y, mouth_half;
    struct Mark {
        double x, y, r, level;
    };
    std::vector<Mark> marks;
    Gender gender = Gender::unspecified;
    Phototype fitzpatrick = 0;

    /// Pixel rectangle [y0, y1) x [x0, x1) containing every mouth stroke variant.
    std::array<std::size_t, 4> mouth_box(std::size_t side) const {
        auto px = [&](double u) { return std::size_t(std::clamp(u * double(side), 0.0, double(side))); };
        return {px(mouth_y - 0.06), px(mouth_y + 0.2), px(cx - mouth_half - 0.04), px(cx + mouth_half + 0.04)};
    }
};

inline SyntheticIdentity make_synthetic_identity(std::uint64_t seed, std::size_t index) {
    SeededRng r(mix_seed(seed, 0x1D00 + index));
    SyntheticIdentity id;
    id.gender = index % 2 == 0 ? Gender::female : Gender::male;
    id.fitzpatrick = Phototype(index % 6 + 1);
    id.background = r.uniform(20, 70);
    id.background_slope = r.uniform(20, 50);
    id.background_angle = r.uniform(0, 2 * std::numbers::pi);
    id.skin = 215 - 17.0 * (id.fitzpatrick - 1) + r.uniform(-8, 8);
    id.hair = r.uniform(10, 80);
    id.feature_darkness = r.uniform(0.15, 0.35);
    id.light = r.uniform(-0.3, 0.3);
    id.cx = 0.5 + r.uniform(-0.07, 0.07);
    id.cy = 0.52 + r.uniform(-0.05, 0.05);
    id.rx = r.uniform(0.31, 0.38);
    id.ry = r.uniform(0.38, 0.45);
    id.hairline = id.cy - id.ry + id.ry * r.uniform(0.25, 0.45);
    id.eye_dx = id.rx * r.uniform(0.38, 0.5);
    id.eye_y = id.cy - id.ry * r.uniform(0.12, 0.25);
    id.eye_rx = r.uniform(0.055, 0.075);
    id.eye_ry = r.uniform(0.04, 0.05);
    id.brow_gap = r.uniform(0.08, 0.1);
    id.brow_len = r.uniform(0.1, 0.13);
    id.mouth_y = id.cy + id.ry * r.uniform(0.45, 0.6);
    id.mouth_half = id.rx * r.uniform(0.35, 0.5);
    const std::size_t n_marks = std::size_t(r.below(3));
    for (std::size_t k = 0; k < n_marks; ++k) {
        const double a = r.uniform(0, 2 * std::numbers::pi), rad = std::sqrt(r.uniform(0.1, 0.7));
        id.marks.push_back({id.cx + rad * id.rx * std::cos(a), id.cy + rad * id.ry * std::sin(a), r.uniform(0.015, 0.03),
                            r.uniform(0.3, 0.6)});
    }
    return id;
}

namespace detail {

struct Segment {
    double x0, y0, x1, y1;
};

inline double segment_distance(double x, double y, const Segment& s) {
    const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((x - s.x0) * dx + (y - s.y0) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double px = s.x0 + t * dx - x, py = s.y0 + t * dy - y;
    return std::sqrt(px * px + py * py);
}

/// Polyline through y = y0 + bend * (1 - t^2) for t in [-1, 1], x = x0 + t * half.
inline std::vector<Segment> parabola(double x0, double y0, double half, double bend) {
    std::vector<Segment> out;
    constexpr int n = 16;
    auto pt = [&](int i) {
        const double t = -1.0 + 2.0 * i / n;
        return std::pair{x0 + t * half, y0 + bend * (1 - t * t)};
    };
    for (int i = 0; i < n; ++i) {
        auto [ax, ay] = pt(i);
        auto [bx, by] = pt(i + 1);
        out.push_back({ax, ay, bx, by});
    }
    return out;
}

/// Coverage in [0,1] from a signed distance (in image-side units), with a one-pixel ramp.
inline double coverage(double signed_distance, double pixel) {
    return std::clamp(0.5 - signed_distance / pixel, 0.0, 1.0);
}

inline double ellipse_sd(double x, double y, double cx, double cy, double rx, double ry) {
    const double q = std::hypot((x - cx) / rx, (y - cy) / ry);
    return (q - 1.0) * std::min(rx, ry);
}

}  // namespace detail

/// Renders one face. `bits` holds the expression bits (bit i = pseudo-AU i).
inline GrayImage render_synthetic_face(const SyntheticIdentity& id, unsigned bits, std::size_t side, double noise_level,
                                       std::uint64_t noise_seed) {
    using namespace detail;
    const bool smile = bits & 1u, brows_up = bits & 2u, eyes_wide = bits & 4u, jaw_drop = bits & 8u;
    const double px = 1.0 / double(side);
    const double feature = id.skin * id.feature_darkness;

    const double eye_ry = id.eye_ry * (eyes_wide ? 1.5 : 0.45);
    const double brow_y = id.eye_y - id.brow_gap - (brows_up ? 0.1 : 0.0);
    const double brow_arch = brows_up ? -0.04 : 0.0;
    std::vector<Segment> brows;
    for (double sgn : {-1.0, 1.0}) {
        const double ex = id.cx + sgn * id.eye_dx;
        for (auto s : parabola(ex, brow_y, id.brow_len / 2, brow_arch)) brows.push_back(s);
    }
    const auto mouth = parabola(id.cx, id.mouth_y, id.mouth_half * (smile ? 1.15 : 1.0), smile ? 0.14 : 0.0);
    const Segment nose{id.cx, id.eye_y + 0.02, id.cx + 0.01, id.mouth_y - 0.09};

    SeededRng noise(noise_seed);
    GrayImage img(side, side);
    for (std::size_t yy = 0; yy < side; ++yy)
        for (std::size_t xx = 0; xx < side; ++xx) {
            const double x = (double(xx) + 0.5) * px, y = (double(yy) + 0.5) * px;
            double v = id.background + id.background_slope * ((x - 0.5) * std::cos(id.background_angle) +
                                                              (y - 0.5) * std::sin(id.background_angle));

            const double face = coverage(ellipse_sd(x, y, id.cx, id.cy, id.rx, id.ry), px);
            const double shade = id.skin * (1.0 + id.light * (x - id.cx) / id.rx) *
                                 (1.0 - 0.12 * std::pow((y - id.cy) / id.ry, 2));
            v += (shade - v) * face;

            const double cap = coverage(ellipse_sd(x, y, id.cx, id.cy, id.rx * 1.06, id.ry * 1.04), px) *
                               coverage(y - id.hairline, px);
            v += (id.hair - v) * cap;

            for (const auto& m : id.marks) v += (id.skin * m.level - v) * coverage(std::hypot(x - m.x, y - m.y) - m.r, px);

            for (double sgn : {-1.0, 1.0}) {
                const double e = coverage(ellipse_sd(x, y, id.cx + sgn * id.eye_dx, id.eye_y, id.eye_rx, eye_ry), px);
                v += (feature - v) * e;
            }

            double d = 1e9;
            for (const auto& s : brows) d = std::min(d, segment_distance(x, y, s));
            v += (feature - v) * coverage(d - 0.045, px);

            v += (id.skin * 0.7 - v) * coverage(segment_distance(x, y, nose) - 0.008, px);

            d = 1e9;
            for (const auto& s : mouth) d = std::min(d, segment_distance(x, y, s));
            v += (feature - v) * coverage(d - 0.045, px);
            if (jaw_drop) {
                const double o = coverage(ellipse_sd(x, y, id.cx, id.mouth_y + 0.045, id.mouth_half * 0.55, 0.04), px);
                v += (feature * 0.5 - v) * o;
            }

            if (noise_level > 0) v += noise.normal(0.0, noise_level);
            img.at(yy, xx) = to_u8(v);
        }
    return img;
}

struct SyntheticCorpus {
    Manifest manifest;
    std::vector<GrayImage> images;  // aligned with manifest.samples
    std::vector<SyntheticIdentity> identities;
};

inline std::string synthetic_participant_id(std::size_t index, std::size_t count) {
    const std::size_t width = count > 100 ? 3 : 2;
    std::string n = std::to_string(index);
    return "S" + std::string(width > n.size() ? width - n.size() : 0, '0') + n;
}

/// Renders the full corpus in memory; image paths are set but nothing touches disk.
inline SyntheticCorpus render_synthetic_corpus(const SyntheticFaceSpec& spec) {
    spec.validate();
    SyntheticCorpus c;
    Manifest& m = c.manifest;
    m.dataset_id = spec.dataset_id;
    m.au_list.assign(synthetic_au_names().begin(), synthetic_au_names().begin() + std::ptrdiff_t(spec.n_expressions));
    for (std::size_t i = 0; i < spec.n_identities; ++i) {
        SyntheticIdentity id = make_synthetic_identity(spec.seed, i);
        ParticipantRecord p;
        p.participant_id = synthetic_participant_id(i, spec.n_identities);
        p.gender = id.gender;
        p.fitzpatrick = id.fitzpatrick;
        p.dataset_id = spec.participant_datasets.empty()
                           ? spec.dataset_id
                           : spec.participant_datasets[i % spec.participant_datasets.size()];
        m.participants.push_back(p);

        SeededRng intensity_rng(mix_seed(spec.seed, 0x1A7E + i));
        std::size_t j = 0;
        for (std::size_t cell = 0; cell < spec.cells(); ++cell)
            for (std::size_t k = 0; k < spec.images_per_cell; ++k, ++j) {
                const std::uint64_t noise_seed = mix_seed(mix_seed(spec.seed, 0x2B00 + i), j);
                c.images.push_back(render_synthetic_face(id, unsigned(cell), spec.image_side, spec.noise_level, noise_seed));
                SampleRecord s;
                s.participant_id = p.participant_id;
                s.image_path = "images/" + p.participant_id + "/" + p.participant_id + "_c" + std::to_string(cell) + "_" +
                               std::to_string(k) + ".png";
                s.task_id = "T" + std::to_string(j % spec.n_tasks + 1);
                for (std::size_t a = 0; a < spec.n_expressions; ++a) {
                    const int bit = int((cell >> a) & 1u);
                    s.au_occurrence.push_back(bit);
                    if (spec.intensities)
                        s.au_intensity.push_back(bit ? std::optional<int>(int(1 + intensity_rng.below(8))) : std::nullopt);
                }
                m.samples.push_back(std::move(s));
            }
        c.identities.push_back(std::move(id));
    }
    return c;
}

/// Writes images and manifest.jsonl under `out_dir`; returns the manifest (base_dir = out_dir).
inline Manifest generate_synthetic_dataset(const SyntheticFaceSpec& spec, const std::filesystem::path& out_dir) {
    SyntheticCorpus c = render_synthetic_corpus(spec);
    for (std::size_t i = 0; i < c.images.size(); ++i) {
        const auto path = out_dir / c.manifest.samples[i].image_path;
        std::filesystem::create_directories(path.parent_path());
        write_png(path, c.images[i]);
    }
    c.manifest.base_dir = out_dir;
    save_manifest(out_dir / "manifest.jsonl", c.manifest);
    return c.manifest;
}

}  // namespace deepfn
