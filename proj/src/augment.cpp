#include "trodo/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trodo/rng.hpp"

namespace trodo {

TransformSpec TransformSpec::elastic_warp(std::size_t grid_size, double sigma_frac) {
    TransformSpec t;
    t.kind = Kind::ElasticWarp;
    t.grid_size = grid_size;
    t.displacement_sigma_frac = sigma_frac;
    return t;
}

TransformSpec TransformSpec::rotation(double min_deg, double max_deg) {
    TransformSpec t;
    t.kind = Kind::Rotation;
    t.min_deg = min_deg;
    t.max_deg = max_deg;
    return t;
}

TransformSpec TransformSpec::cut_paste(double min_area, double max_area) {
    TransformSpec t;
    t.kind = Kind::CutPaste;
    t.min_area_frac = min_area;
    t.max_area_frac = max_area;
    return t;
}

void TransformSpec::validate() const {
    switch (kind) {
        case Kind::ElasticWarp:
            if (grid_size < 2) throw ConfigError("elastic warp grid_size must be >= 2");
            if (displacement_sigma_frac < 0.0)
                throw ConfigError("elastic warp displacement sigma must be >= 0");
            break;
        case Kind::Rotation:
            if (!(0.0 <= min_deg && min_deg <= max_deg && max_deg <= 360.0))
                throw ConfigError("rotation range must satisfy 0 <= min <= max <= 360");
            break;
        case Kind::CutPaste:
            if (!(0.0 < min_area_frac && min_area_frac <= max_area_frac && max_area_frac < 1.0))
                throw ConfigError("cutpaste area fractions must satisfy 0 < min <= max < 1");
            break;
    }
}

std::string TransformSpec::name() const {
    switch (kind) {
        case Kind::ElasticWarp: return "elastic";
        case Kind::Rotation: return "rotation";
        case Kind::CutPaste: return "cutpaste";
    }
    return "?";
}

std::vector<TransformSpec> default_transforms() {
    return {TransformSpec::elastic_warp(), TransformSpec::rotation(), TransformSpec::cut_paste()};
}

namespace {

// Reflect a continuous coordinate into [0, n-1] (mirror at both edges).
double reflect_coord(double t, std::size_t n) {
    if (n == 1) return 0.0;
    const double period = 2.0 * static_cast<double>(n - 1);
    t = std::fabs(t);
    t = std::fmod(t, period);
    if (t > static_cast<double>(n - 1)) t = period - t;
    return t;
}

double bilinear_sample(const Tensor& img, std::size_t c, double sy, double sx) {
    const std::size_t H = img.shape[1], W = img.shape[2];
    sy = reflect_coord(sy, H);
    sx = reflect_coord(sx, W);
    std::size_t y0 = static_cast<std::size_t>(sy);
    std::size_t x0 = static_cast<std::size_t>(sx);
    std::size_t y1 = std::min(y0 + 1, H - 1);
    std::size_t x1 = std::min(x0 + 1, W - 1);
    double fy = sy - static_cast<double>(y0);
    double fx = sx - static_cast<double>(x0);
    double v00 = img.at(c, y0, x0), v01 = img.at(c, y0, x1);
    double v10 = img.at(c, y1, x0), v11 = img.at(c, y1, x1);
    return v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx + v10 * fy * (1 - fx) +
           v11 * fy * fx;
}

Tensor rotate(const Tensor& img, double angle_deg) {
    const std::size_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
    const double rad = angle_deg * 3.14159265358979323846 / 180.0;
    const double ca = std::cos(rad), sa = std::sin(rad);
    const double cy = (static_cast<double>(H) - 1.0) / 2.0;
    const double cx = (static_cast<double>(W) - 1.0) / 2.0;
    Tensor out(img.shape);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double dy = static_cast<double>(y) - cy;
            const double dx = static_cast<double>(x) - cx;
            // inverse rotation of the destination pixel
            const double sy = cy + ca * dy + sa * dx;
            const double sx = cx - sa * dy + ca * dx;
            for (std::size_t c = 0; c < C; ++c) out.at(c, y, x) = bilinear_sample(img, c, sy, sx);
        }
    }
    return out;
}

Tensor elastic_warp(const Tensor& img, std::size_t grid, double sigma, Rng& rng) {
    const std::size_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
    std::vector<double> disp_y(grid * grid), disp_x(grid * grid);
    for (std::size_t i = 0; i < grid * grid; ++i) {
        disp_y[i] = rng.normal(0.0, sigma);
        disp_x[i] = rng.normal(0.0, sigma);
    }
    auto field = [&](const std::vector<double>& d, double gy, double gx) {
        std::size_t y0 = std::min(static_cast<std::size_t>(gy), grid - 1);
        std::size_t x0 = std::min(static_cast<std::size_t>(gx), grid - 1);
        std::size_t y1 = std::min(y0 + 1, grid - 1);
        std::size_t x1 = std::min(x0 + 1, grid - 1);
        double fy = gy - static_cast<double>(y0);
        double fx = gx - static_cast<double>(x0);
        return d[y0 * grid + x0] * (1 - fy) * (1 - fx) + d[y0 * grid + x1] * (1 - fy) * fx +
               d[y1 * grid + x0] * fy * (1 - fx) + d[y1 * grid + x1] * fy * fx;
    };
    Tensor out(img.shape);
    const double gy_scale = static_cast<double>(grid - 1) / std::max<double>(1.0, H - 1);
    const double gx_scale = static_cast<double>(grid - 1) / std::max<double>(1.0, W - 1);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double gy = static_cast<double>(y) * gy_scale;
            const double gx = static_cast<double>(x) * gx_scale;
            const double sy = static_cast<double>(y) + field(disp_y, gy, gx);
            const double sx = static_cast<double>(x) + field(disp_x, gy, gx);
            for (std::size_t c = 0; c < C; ++c) out.at(c, y, x) = bilinear_sample(img, c, sy, sx);
        }
    }
    return out;
}

Tensor cut_paste(const Tensor& img, double min_area, double max_area, Rng& rng) {
    const std::size_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
    const double area = rng.uniform(min_area, max_area) * static_cast<double>(H * W);
    const double aspect = rng.uniform(0.5, 2.0);
    std::size_t rh = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(std::sqrt(area * aspect))), 1, H);
    std::size_t rw = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(std::sqrt(area / aspect))), 1, W);
    std::size_t sy = static_cast<std::size_t>(rng.uniform_index(H - rh + 1));
    std::size_t sx = static_cast<std::size_t>(rng.uniform_index(W - rw + 1));
    std::size_t dy = sy, dx = sx;
    // destination must differ from the source placement
    for (int tries = 0; dy == sy && dx == sx && tries < 64; ++tries) {
        dy = static_cast<std::size_t>(rng.uniform_index(H - rh + 1));
        dx = static_cast<std::size_t>(rng.uniform_index(W - rw + 1));
    }
    Tensor out = img;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < rh; ++y)
            for (std::size_t x = 0; x < rw; ++x)
                out.at(c, dy + y, dx + x) = img.at(c, sy + y, sx + x);
    return out;
}

}  // namespace

Tensor apply_transform(const Tensor& image, const TransformSpec& t, std::uint64_t rng_seed) {
    t.validate();
    if (image.shape.size() != 3) throw ShapeError("transforms expect CxHxW images");
    Rng rng(rng_seed);
    Tensor out;
    switch (t.kind) {
        case TransformSpec::Kind::Rotation:
            out = rotate(image, rng.uniform(t.min_deg, t.max_deg));
            break;
        case TransformSpec::Kind::ElasticWarp: {
            double sigma = t.displacement_sigma_frac *
                           static_cast<double>(std::min(image.shape[1], image.shape[2]));
            out = elastic_warp(image, t.grid_size, sigma, rng);
            break;
        }
        case TransformSpec::Kind::CutPaste:
            out = cut_paste(image, t.min_area_frac, t.max_area_frac, rng);
            break;
    }
    out.clip(0.0, 1.0);
    return out;
}

Tensor craft_ood_sample(const Tensor& image, const std::vector<TransformSpec>& transforms,
                        std::size_t k, std::uint64_t rng_seed,
                        std::vector<std::size_t>* permutation_out) {
    if (k < 1 || k > transforms.size())
        throw ConfigError("craft_ood_sample requires 1 <= k <= |transforms|");
    Rng rng(rng_seed);
    std::vector<std::size_t> order(transforms.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    order.resize(k);
    Tensor out = image;
    for (std::size_t idx : order) out = apply_transform(out, transforms[idx], rng.next_u64());
    if (permutation_out) *permutation_out = order;
    return out;
}

Tensor craft_ood_sample(const Tensor& image, const std::vector<TransformSpec>& transforms,
                        std::size_t k, std::uint64_t rng_seed) {
    return craft_ood_sample(image, transforms, k, rng_seed, nullptr);
}

OodBatch craft_ood_set(const std::vector<Tensor>& sources,
                       const std::vector<TransformSpec>& transforms, std::size_t k,
                       std::uint64_t base_seed) {
    if (sources.empty()) throw ConfigError("craft_ood_set: empty source set");
    for (std::size_t i = 1; i < sources.size(); ++i)
        if (sources[i].shape != sources[0].shape)
            throw ShapeError("craft_ood_set: mismatched source shapes");
    OodBatch batch;
    batch.images.reserve(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
        OodProvenance prov;
        prov.source_index = i;
        prov.rng_seed = base_seed + i;
        batch.images.push_back(
            craft_ood_sample(sources[i], transforms, k, prov.rng_seed, &prov.permutation));
        batch.provenance.push_back(std::move(prov));
    }
    return batch;
}

}  // namespace trodo
