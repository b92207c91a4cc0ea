#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "trodo/augment.hpp"
#include "trodo/rng.hpp"

using namespace trodo;

namespace {

Tensor test_image(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Tensor img({3, n, n});
    // structured content: gradient background plus a bright block
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x)
                img.at(c, y, x) = 0.2 + 0.5 * static_cast<double>(y + x) / (2.0 * n);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = n / 4; y < n / 2; ++y)
            for (std::size_t x = n / 4; x < n / 2; ++x) img.at(c, y, x) = 0.95;
    for (double& v : img.data) v += rng.normal(0.0, 0.01);
    img.clip(0.0, 1.0);
    return img;
}

}  // namespace

TEST_CASE("full-turn rotation is the identity up to interpolation error") {
    Tensor img = test_image(16, 1);
    Tensor out = apply_transform(img, TransformSpec::rotation(360.0, 360.0), 3);
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK(std::fabs(out[i] - img[i]) <= 1e-6);
}

TEST_CASE("180-degree rotation reverses a 2x2 image") {
    Tensor img({1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
    Tensor out = apply_transform(img, TransformSpec::rotation(180.0, 180.0), 3);
    CHECK(out[0] == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(out[1] == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(out[2] == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(out[3] == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("elastic warp with zero displacement is the identity") {
    Tensor img = test_image(16, 2);
    Tensor out = apply_transform(img, TransformSpec::elastic_warp(4, 0.0), 9);
    for (std::size_t i = 0; i < img.numel(); ++i) CHECK(out[i] == img[i]);
}

TEST_CASE("cutpaste moves pixels but keeps the range") {
    Tensor img = test_image(16, 3);
    Tensor out = apply_transform(img, TransformSpec::cut_paste(), 17);
    REQUIRE(out.shape == img.shape);
    for (double v : out.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    std::size_t changed = 0;
    for (std::size_t i = 0; i < img.numel(); ++i)
        if (out[i] != img[i]) ++changed;
    CHECK(changed > 0);
}

TEST_CASE("invalid transform parameters are rejected") {
    Tensor img = test_image(8, 4);
    CHECK_THROWS_AS(apply_transform(img, TransformSpec::rotation(90.0, 45.0), 0), ConfigError);
    CHECK_THROWS_AS(apply_transform(img, TransformSpec::cut_paste(0.0, 0.4), 0), ConfigError);
    CHECK_THROWS_AS(apply_transform(img, TransformSpec::cut_paste(0.5, 0.4), 0), ConfigError);
}

TEST_CASE("k=1 with a single transform equals apply_transform") {
    Tensor img = test_image(12, 5);
    std::vector<TransformSpec> ts = {TransformSpec::rotation(180.0, 180.0)};
    Tensor via_craft = craft_ood_sample(img, ts, 1, 42);
    // craft draws the per-transform seed after shuffling a 1-element list
    Rng rng(42);
    std::vector<std::size_t> dummy{0};
    rng.shuffle(dummy);
    Tensor direct = apply_transform(img, ts[0], rng.next_u64());
    for (std::size_t i = 0; i < img.numel(); ++i) CHECK(via_craft[i] == direct[i]);
}

TEST_CASE("identical seeds give identical crafted samples") {
    Tensor img = test_image(16, 6);
    Tensor a = craft_ood_sample(img, default_transforms(), 3, 77);
    Tensor b = craft_ood_sample(img, default_transforms(), 3, 77);
    for (std::size_t i = 0; i < img.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("default k=3 pipeline moves a substantial pixel fraction") {
    Tensor img = test_image(32, 7);
    Tensor out = craft_ood_sample(img, default_transforms(), 3, 5);
    std::size_t moved = 0;
    for (std::size_t i = 0; i < img.numel(); ++i)
        if (std::fabs(out[i] - img[i]) > 0.1) ++moved;
    CHECK(static_cast<double>(moved) / static_cast<double>(img.numel()) >= 0.30);
}

TEST_CASE("k larger than the transform list is rejected") {
    Tensor img = test_image(8, 8);
    CHECK_THROWS_AS(craft_ood_sample(img, default_transforms(), 4, 0), ConfigError);
}

TEST_CASE("craft_ood_set basics") {
    SUBCASE("single source records provenance") {
        OodBatch b = craft_ood_set({test_image(16, 9)}, default_transforms(), 3, 100);
        REQUIRE(b.size() == 1);
        CHECK(b.provenance[0].source_index == 0);
        CHECK(b.provenance[0].rng_seed == 100);
        CHECK(b.provenance[0].permutation.size() == 3);
    }
    SUBCASE("determinism over a batch") {
        std::vector<Tensor> sources;
        for (std::size_t i = 0; i < 20; ++i) sources.push_back(test_image(16, 10 + i));
        OodBatch a = craft_ood_set(sources, default_transforms(), 3, 7);
        OodBatch b = craft_ood_set(sources, default_transforms(), 3, 7);
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < a.images[i].numel(); ++j)
                CHECK(a.images[i][j] == b.images[i][j]);
    }
    SUBCASE("mismatched shapes are rejected") {
        CHECK_THROWS_AS(craft_ood_set({test_image(16, 1), test_image(8, 1)},
                                      default_transforms(), 3, 0),
                        ShapeError);
    }
    SUBCASE("empty source set is rejected") {
        CHECK_THROWS_AS(craft_ood_set({}, default_transforms(), 3, 0), ConfigError);
    }
}

TEST_CASE("crafted pixels always stay in the unit range") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor img = test_image(16, 100 + trial);
        Tensor out = craft_ood_sample(img, default_transforms(), 3, rng.next_u64());
        for (double v : out.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}
