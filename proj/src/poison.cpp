#include "trodo/poison.hpp"

#include <algorithm>
#include <cmath>

#include "trodo/rng.hpp"

namespace trodo {

TriggerSpec TriggerSpec::patch(std::size_t size_px, PatchCorner corner, bool checkerboard,
                               double value) {
    TriggerSpec t;
    t.kind = Kind::Patch;
    t.size_px = size_px;
    t.location = corner;
    t.checkerboard = checkerboard;
    t.solid_value = value;
    return t;
}

TriggerSpec TriggerSpec::blended(std::uint64_t image_seed, double alpha) {
    TriggerSpec t;
    t.kind = Kind::Blended;
    t.trigger_image_seed = image_seed;
    t.alpha = alpha;
    return t;
}

TriggerSpec TriggerSpec::sinusoidal(double amplitude, double frequency) {
    TriggerSpec t;
    t.kind = Kind::Sinusoidal;
    t.amplitude = amplitude;
    t.frequency = frequency;
    return t;
}

void TriggerSpec::validate(const std::vector<std::size_t>& image_shape) const {
    if (image_shape.size() != 3) throw ShapeError("triggers expect CxHxW images");
    switch (kind) {
        case Kind::Patch:
            if (size_px == 0 || size_px > image_shape[1] || size_px > image_shape[2])
                throw ConfigError("patch does not fit inside the image");
            break;
        case Kind::Blended:
            if (!(alpha > 0.0 && alpha < 1.0))
                throw ConfigError("blended alpha must lie in (0,1)");
            break;
        case Kind::Sinusoidal:
            if (!(amplitude > 0.0 && amplitude <= 1.0))
                throw ConfigError("sinusoidal amplitude must lie in (0,1]");
            break;
    }
}

std::string TriggerSpec::id() const {
    switch (kind) {
        case Kind::Patch: return "patch";
        case Kind::Blended: return "blended";
        case Kind::Sinusoidal: return "sinusoidal";
    }
    return "?";
}

LabelMapping LabelMapping::all_to_one(std::size_t target) {
    LabelMapping m;
    m.kind = Kind::AllToOne;
    m.target = target;
    return m;
}

LabelMapping LabelMapping::all_to_all(std::size_t shift) {
    LabelMapping m;
    m.kind = Kind::AllToAll;
    m.shift = shift;
    return m;
}

std::size_t LabelMapping::remap(std::size_t label, std::size_t num_classes) const {
    if (kind == Kind::AllToOne) return target;
    return (label + shift) % num_classes;
}

std::string LabelMapping::id() const {
    return kind == Kind::AllToOne ? "all-to-one" : "all-to-all";
}

Tensor apply_trigger(const Tensor& image, const TriggerSpec& trigger) {
    trigger.validate(image.shape);
    const std::size_t C = image.shape[0], H = image.shape[1], W = image.shape[2];
    Tensor out = image;
    switch (trigger.kind) {
        case TriggerSpec::Kind::Patch: {
            const std::size_t k = trigger.size_px;
            const std::size_t y0 = (trigger.location == PatchCorner::TopLeft ||
                                    trigger.location == PatchCorner::TopRight)
                                       ? 0
                                       : H - k;
            const std::size_t x0 = (trigger.location == PatchCorner::TopLeft ||
                                    trigger.location == PatchCorner::BottomLeft)
                                       ? 0
                                       : W - k;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t y = 0; y < k; ++y)
                    for (std::size_t x = 0; x < k; ++x)
                        out.at(c, y0 + y, x0 + x) =
                            trigger.checkerboard ? (((y + x) % 2 == 0) ? 1.0 : 0.0)
                                                 : trigger.solid_value;
            break;
        }
        case TriggerSpec::Kind::Blended: {
            Rng rng(trigger.trigger_image_seed);
            for (std::size_t i = 0; i < out.numel(); ++i)
                out[i] = (1.0 - trigger.alpha) * image[i] + trigger.alpha * rng.uniform();
            break;
        }
        case TriggerSpec::Kind::Sinusoidal: {
            const double two_pi = 6.283185307179586476925286766559;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t y = 0; y < H; ++y)
                    for (std::size_t x = 0; x < W; ++x)
                        out.at(c, y, x) += trigger.amplitude *
                                           std::sin(two_pi * trigger.frequency *
                                                    static_cast<double>(x) / static_cast<double>(W));
            break;
        }
    }
    out.clip(0.0, 1.0);
    return out;
}

PoisonedDataset poison_dataset(const Dataset& dataset, const PoisonConfig& cfg) {
    if (!(cfg.rate > 0.0 && cfg.rate <= 1.0))
        throw ConfigError("poison rate must lie in (0,1]");
    const std::size_t n = dataset.size();
    const std::size_t m = static_cast<std::size_t>(
        std::ceil(cfg.rate * static_cast<double>(n)));
    if (m < 1) throw ConfigError("poison rate selects no samples");
    if (cfg.mapping.kind == LabelMapping::Kind::AllToAll &&
        cfg.mapping.shift % dataset.num_classes == 0)
        throw ConfigError("all-to-all shift must be nonzero mod num_classes");
    if (cfg.mapping.kind == LabelMapping::Kind::AllToOne &&
        cfg.mapping.target >= dataset.num_classes)
        throw ConfigError("all-to-one target out of range");

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    order.resize(m);
    std::sort(order.begin(), order.end());

    PoisonedDataset out;
    out.data = dataset;
    out.poison_mask = order;
    for (std::size_t idx : order) {
        out.data.images[idx] = apply_trigger(dataset.images[idx], cfg.trigger);
        out.data.labels[idx] = cfg.mapping.remap(dataset.labels[idx], dataset.num_classes);
    }
    return out;
}

}  // namespace trodo
