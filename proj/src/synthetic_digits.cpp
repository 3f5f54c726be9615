#include "uap/synthetic_digits.hpp"

#include "uap/binary_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace uap {

namespace {

struct Point {
    double x, y;
};

using Stroke = std::vector<Point>;

Stroke ellipse(double cx, double cy, double rx, double ry, double from_deg = 0, double to_deg = 360, int n = 16) {
    Stroke s;
    for (int i = 0; i <= n; ++i) {
        const double a = (from_deg + (to_deg - from_deg) * i / n) * std::numbers::pi / 180.0;
        s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return s;
}

// Control polylines in a unit box, y pointing down.
std::vector<Stroke> glyph(int digit) {
    switch (digit) {
        case 0: return {ellipse(0.5, 0.5, 0.28, 0.42)};
        case 1: return {{{0.38, 0.24}, {0.55, 0.08}, {0.55, 0.92}}};
        case 2: return {{{0.24, 0.28}, {0.34, 0.12}, {0.58, 0.08}, {0.74, 0.22}, {0.70, 0.44}, {0.26, 0.90}, {0.80, 0.90}}};
        case 3: return {{{0.24, 0.16}, {0.56, 0.08}, {0.72, 0.24}, {0.48, 0.46}},
                        {{0.48, 0.46}, {0.76, 0.62}, {0.66, 0.88}, {0.24, 0.86}}};
        case 4: return {{{0.66, 0.92}, {0.66, 0.08}, {0.20, 0.64}, {0.82, 0.64}}};
        case 5: return {{{0.76, 0.10}, {0.32, 0.10}, {0.28, 0.46}},
                        {{0.28, 0.46}, {0.58, 0.40}, {0.76, 0.62}, {0.62, 0.88}, {0.24, 0.86}}};
        case 6: return {{{0.70, 0.08}, {0.42, 0.24}, {0.28, 0.58}, {0.38, 0.88}, {0.64, 0.86}, {0.72, 0.66},
                         {0.54, 0.50}, {0.30, 0.60}}};
        case 7: return {{{0.22, 0.12}, {0.78, 0.12}, {0.44, 0.92}}};
        case 8: return {ellipse(0.5, 0.29, 0.20, 0.19, -90, 270), ellipse(0.5, 0.69, 0.25, 0.21, -90, 270)};
        case 9: return {ellipse(0.5, 0.32, 0.22, 0.20), {{0.72, 0.32}, {0.62, 0.92}}};
        default: throw std::invalid_argument("no glyph for digit " + std::to_string(digit));
    }
}

// Catmull-Rom through the control points.
Stroke smooth(const Stroke& s, int samples = 6) {
    if (s.size() < 3) return s;
    Stroke out;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const Point p0 = s[i == 0 ? 0 : i - 1], p1 = s[i], p2 = s[i + 1], p3 = s[std::min(i + 2, s.size() - 1)];
        for (int k = 0; k < samples; ++k) {
            const double t = static_cast<double>(k) / samples, t2 = t * t, t3 = t2 * t;
            auto cr = [&](double a, double b, double c, double d) {
                return 0.5 * (2 * b + (-a + c) * t + (2 * a - 5 * b + 4 * c - d) * t2 + (-a + 3 * b - 3 * c + d) * t3);
            };
            out.push_back({cr(p0.x, p1.x, p2.x, p3.x), cr(p0.y, p1.y, p2.y, p3.y)});
        }
    }
    out.push_back(s.back());
    return out;
}

double segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
    return std::sqrt(ex * ex + ey * ey);
}

constexpr std::size_t kSide = 28;
constexpr double kBox = 20.0;

}  // namespace

void SyntheticDigitsOptions::validate() const {
    const auto k = digits.size();
    if (k == 0) throw std::invalid_argument("synthetic corpus needs at least one class");
    if (class_names.size() != k || train_counts.size() != k || test_counts.size() != k)
        throw std::invalid_argument("synthetic corpus options need one name and count per digit");
    for (int d : digits)
        if (d < 0 || d > 9) throw std::invalid_argument("synthetic digits must lie in 0..9");
    if (!(jitter >= 0.0) || !(warp >= 0.0)) throw std::invalid_argument("synthetic jitter and warp must be nonnegative");
}

SyntheticDigitsOptions desk_digits_preset(std::uint64_t seed) {
    SyntheticDigitsOptions o{{3, 5, 8}, {"three", "five", "eight"}, {3000, 2940, 60}, {450, 450, 100}, seed};
    o.jitter = 0.10;
    o.warp = 2.0;
    return o;
}

Raster render_digit(int digit, Rng& rng, const SyntheticDigitsOptions& style) {
    std::vector<Stroke> strokes = glyph(digit);
    for (auto& s : strokes)
        for (auto& p : s) {
            p.x += rng.uniform(-style.jitter, style.jitter);
            p.y += rng.uniform(-style.jitter, style.jitter);
        }

    const double w = style.warp;
    const double angle = rng.normal() * 9.0 * w * std::numbers::pi / 180.0;
    const double sx = rng.uniform(0.80, 1.05), sy = rng.uniform(0.85, 1.05);
    const double shear = rng.uniform(-0.22, 0.22) * w;
    const double tx = rng.uniform(-1.6, 1.6) * w, ty = rng.uniform(-1.6, 1.6) * w;
    const double pen = rng.uniform(0.9, 1.7);  // stroke half-width, pixels
    const double ink = rng.uniform(0.8, 1.0);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double offset = (static_cast<double>(kSide) - kBox) / 2.0;

    std::vector<Stroke> px;
    for (const auto& s : strokes) {
        Stroke t;
        for (const auto& p : smooth(s)) {
            const double u = (p.x - 0.5) * sx + shear * (p.y - 0.5) * sy, v = (p.y - 0.5) * sy;
            const double rx = ca * u - sa * v, ry = sa * u + ca * v;
            t.push_back({offset + kBox * (rx + 0.5) + tx, offset + kBox * (ry + 0.5) + ty});
        }
        px.push_back(std::move(t));
    }

    Raster r{kSide, kSide, 1, std::vector<std::uint8_t>(kSide * kSide, 0)};
    for (std::size_t y = 0; y < kSide; ++y)
        for (std::size_t x = 0; x < kSide; ++x) {
            const Point c{x + 0.5, y + 0.5};
            double d = 1e9;
            for (const auto& s : px)
                for (std::size_t i = 0; i + 1 < s.size(); ++i) d = std::min(d, segment_distance(c, s[i], s[i + 1]));
            const double cover = std::clamp(pen + 0.5 - d, 0.0, 1.0);
            r.pixels[y * kSide + x] = static_cast<std::uint8_t>(std::lround(255.0 * ink * cover));
        }
    return r;
}

Dataset synthesize_digits(const SyntheticDigitsOptions& options, Split split) {
    options.validate();
    const auto& counts = split == Split::Train ? options.train_counts : options.test_counts;
    std::vector<ClassId> labels;
    for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], c);
    Rng rng(options.seed + (split == Split::Train ? 0 : 1), streams::kSynthDigits);
    rng.shuffle(labels);

    Dataset d;
    d.class_names = options.class_names;
    d.split = split;
    for (auto y : labels) {
        d.images.push_back(tensor_from_raster(render_digit(options.digits[y], rng, options)));
        d.labels.push_back(y);
    }
    return d;
}

std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticDigitsOptions& options) {
    options.validate();
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    m.format = ManifestFormat::Idx;
    m.class_names = options.class_names;
    for (int d : options.digits) m.idx_labels.push_back(d);
    for (const Split split : {Split::Train, Split::Test}) {
        const Dataset d = synthesize_digits(options, split);
        const std::string tag = to_string(split);
        IdxArray images{{static_cast<std::uint32_t>(d.size()), kSide, kSide}, {}};
        IdxArray labels{{static_cast<std::uint32_t>(d.size())}, {}};
        for (std::size_t i = 0; i < d.size(); ++i) {
            const Raster r = raster_from_tensor(d.images[i]);
            images.data.insert(images.data.end(), r.pixels.begin(), r.pixels.end());
            labels.data.push_back(static_cast<std::uint8_t>(options.digits[d.labels[i]]));
        }
        write_idx(dir / (tag + "-images-idx3-ubyte"), images);
        write_idx(dir / (tag + "-labels-idx1-ubyte"), labels);
        SplitSource& s = split == Split::Train ? m.train : m.test;
        s.images = tag + "-images-idx3-ubyte";
        s.labels = tag + "-labels-idx1-ubyte";
    }
    const auto path = dir / "manifest.json";
    write_file(path, m.to_json().dump(2) + "\n");
    return path;
}

}  // namespace uap
