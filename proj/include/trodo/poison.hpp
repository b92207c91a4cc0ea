#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trodo/dataset.hpp"
#include "trodo/tensor.hpp"

namespace trodo {

enum class PatchCorner { TopLeft, TopRight, BottomLeft, BottomRight };

struct TriggerSpec {
    enum class Kind { Patch, Blended, Sinusoidal };
    Kind kind = Kind::Patch;
    // Patch
    std::size_t size_px = 3;
    PatchCorner location = PatchCorner::BottomRight;
    bool checkerboard = false;
    double solid_value = 1.0;
    // Blended
    std::uint64_t trigger_image_seed = 0;
    double alpha = 0.2;
    // Sinusoidal
    double amplitude = 0.08;
    double frequency = 6.0;  // full periods across the image width

    static TriggerSpec patch(std::size_t size_px = 3,
                             PatchCorner corner = PatchCorner::BottomRight,
                             bool checkerboard = false, double value = 1.0);
    static TriggerSpec blended(std::uint64_t image_seed = 7, double alpha = 0.2);
    static TriggerSpec sinusoidal(double amplitude = 0.08, double frequency = 6.0);
    void validate(const std::vector<std::size_t>& image_shape) const;
    std::string id() const;
};

struct LabelMapping {
    enum class Kind { AllToOne, AllToAll };
    Kind kind = Kind::AllToOne;
    std::size_t target = 0;  // AllToOne
    std::size_t shift = 1;   // AllToAll, must be nonzero mod c

    static LabelMapping all_to_one(std::size_t target);
    static LabelMapping all_to_all(std::size_t shift);
    std::size_t remap(std::size_t label, std::size_t num_classes) const;
    std::string id() const;
};

struct PoisonConfig {
    TriggerSpec trigger;
    LabelMapping mapping;
    double rate = 0.10;
    std::uint64_t seed = 0;
};

struct PoisonedDataset {
    Dataset data;
    std::vector<std::size_t> poison_mask;  // poisoned indices, sorted
};

// Stamps the trigger onto one image (pixels clipped to [0,1]).
Tensor apply_trigger(const Tensor& image, const TriggerSpec& trigger);

// Poisons exactly ceil(rate * n) samples chosen by seed: trigger stamped,
// label remapped, everything else untouched bit-for-bit.
PoisonedDataset poison_dataset(const Dataset& dataset, const PoisonConfig& cfg);

}  // namespace trodo
