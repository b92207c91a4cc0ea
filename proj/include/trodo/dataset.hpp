#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trodo/tensor.hpp"

namespace trodo {

struct Dataset {
    std::vector<Tensor> images;  // CHW, pixels in [0,1]
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return images.size(); }
};

struct LabeledSplit {
    Dataset train;
    Dataset test;
};

// Procedurally rendered colored geometric shapes; class determines shape and
// hue family, position/scale/noise are randomized. Deterministic per seed.
LabeledSplit generate_synthetic_dataset(std::size_t num_classes, std::size_t train_per_class,
                                        std::size_t test_per_class, std::size_t image_size,
                                        std::uint64_t seed);

// Tensor container with magic "TRODODAT": same framing as the model format
// (u32 version, JSON header, float32 payload).
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace trodo
