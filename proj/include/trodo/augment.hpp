#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trodo/tensor.hpp"

namespace trodo {

// Hard transforms used to craft near-OOD samples from ID/validation images.
struct TransformSpec {
    enum class Kind { ElasticWarp, Rotation, CutPaste };
    Kind kind = Kind::Rotation;
    // ElasticWarp
    std::size_t grid_size = 4;
    double displacement_sigma_frac = 0.15;  // sigma = frac * min(H, W)
    // Rotation (degrees)
    double min_deg = 45.0;
    double max_deg = 315.0;
    // CutPaste
    double min_area_frac = 0.10;
    double max_area_frac = 0.40;

    static TransformSpec elastic_warp(std::size_t grid_size = 4, double sigma_frac = 0.15);
    static TransformSpec rotation(double min_deg = 45.0, double max_deg = 315.0);
    static TransformSpec cut_paste(double min_area = 0.10, double max_area = 0.40);
    void validate() const;
    std::string name() const;
};

// Default hard-transform set: elastic warp, rotation, cutpaste.
std::vector<TransformSpec> default_transforms();

struct OodProvenance {
    std::size_t source_index = 0;
    std::vector<std::size_t> permutation;  // transform indices, in application order
    std::uint64_t rng_seed = 0;
};

struct OodBatch {
    std::vector<Tensor> images;      // pixels in [0,1], CHW
    std::vector<OodProvenance> provenance;
    std::size_t size() const { return images.size(); }
};

// One transform, seeded. Output same shape, pixels clipped to [0,1].
Tensor apply_transform(const Tensor& image, const TransformSpec& t, std::uint64_t rng_seed);

// Sequentially applies a seeded random permutation of k transforms.
Tensor craft_ood_sample(const Tensor& image, const std::vector<TransformSpec>& transforms,
                        std::size_t k, std::uint64_t rng_seed);
Tensor craft_ood_sample(const Tensor& image, const std::vector<TransformSpec>& transforms,
                        std::size_t k, std::uint64_t rng_seed,
                        std::vector<std::size_t>* permutation_out);

// One crafted sample per source; per-image seed = base_seed + index.
OodBatch craft_ood_set(const std::vector<Tensor>& sources,
                       const std::vector<TransformSpec>& transforms, std::size_t k,
                       std::uint64_t base_seed);

}  // namespace trodo
