#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "trodo/model_io.hpp"
#include "trodo/train.hpp"

using namespace trodo;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

struct FileGuard {
    std::string path;
    ~FileGuard() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("save/load round trip is bit-exact on weights and meta") {
    ModelBundle m = build_model(mlp_arch({3, 8, 8}, 5), {3, 8, 8}, 5, 1234);
    m.meta.provenance.kind = Provenance::Kind::Trojaned;
    m.meta.provenance.trigger_id = "patch";
    m.meta.provenance.mapping_id = "all-to-one";
    m.meta.training_mode.kind = TrainingMode::Kind::Adversarial;
    m.meta.training_mode.pgd_steps = 10;
    m.meta.training_mode.eps_linf = 2.0 / 255.0;

    FileGuard f{tmp_path("roundtrip.trodomdl")};
    save_model(m, f.path);
    ModelBundle back = load_model(f.path);

    REQUIRE(back.spec.size() == m.spec.size());
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        REQUIRE(back.weights[i].size() == m.weights[i].size());
        for (std::size_t j = 0; j < m.weights[i].size(); ++j) {
            REQUIRE(back.weights[i][j].shape == m.weights[i][j].shape);
            for (std::size_t k = 0; k < m.weights[i][j].numel(); ++k)
                CHECK(back.weights[i][j][k] == m.weights[i][j][k]);
        }
    }
    CHECK(back.meta.num_classes == 5);
    CHECK(back.meta.input_shape == m.meta.input_shape);
    CHECK(back.meta.seed == 1234);
    CHECK(back.meta.provenance.is_trojaned());
    CHECK(back.meta.provenance.trigger_id == "patch");
    CHECK(back.meta.provenance.mapping_id == "all-to-one");
    CHECK(back.meta.training_mode.kind == TrainingMode::Kind::Adversarial);
    CHECK(back.meta.training_mode.eps_linf == 2.0 / 255.0);
}

TEST_CASE("cnn round trip") {
    ModelBundle m = build_model(cnn_arch({3, 16, 16}, 4), {3, 16, 16}, 4, 9);
    FileGuard f{tmp_path("roundtrip_cnn.trodomdl")};
    save_model(m, f.path);
    ModelBundle back = load_model(f.path);
    for (std::size_t i = 0; i < m.weights.size(); ++i)
        for (std::size_t j = 0; j < m.weights[i].size(); ++j)
            for (std::size_t k = 0; k < m.weights[i][j].numel(); ++k)
                CHECK(back.weights[i][j][k] == m.weights[i][j][k]);
}

TEST_CASE("corrupt magic is rejected") {
    ModelBundle m = build_model({LayerSpec::dense(4, 2)}, {4}, 2, 0);
    FileGuard f{tmp_path("badmagic.trodomdl")};
    save_model(m, f.path);
    {
        std::fstream fs(f.path, std::ios::in | std::ios::out | std::ios::binary);
        fs.seekp(0);
        fs.write("XXXX", 4);
    }
    CHECK_THROWS_WITH_AS(load_model(f.path), "bad magic", FormatError);
}

TEST_CASE("unsupported version is rejected") {
    ModelBundle m = build_model({LayerSpec::dense(4, 2)}, {4}, 2, 0);
    FileGuard f{tmp_path("badversion.trodomdl")};
    save_model(m, f.path);
    {
        std::fstream fs(f.path, std::ios::in | std::ios::out | std::ios::binary);
        fs.seekp(8);
        const char v2[4] = {2, 0, 0, 0};
        fs.write(v2, 4);
    }
    CHECK_THROWS_AS(load_model(f.path), FormatError);
}

TEST_CASE("truncated weight block is rejected") {
    ModelBundle m = build_model({LayerSpec::dense(16, 8)}, {16}, 8, 0);
    FileGuard f{tmp_path("truncated.trodomdl")};
    save_model(m, f.path);
    const auto full = std::filesystem::file_size(f.path);
    std::filesystem::resize_file(f.path, full - 10);
    try {
        load_model(f.path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("truncated payload") != std::string::npos);
    }
}

TEST_CASE("unknown layer kind is rejected") {
    ModelBundle m = build_model({LayerSpec::dense(4, 2)}, {4}, 2, 0);
    FileGuard f{tmp_path("badlayer.trodomdl")};
    save_model(m, f.path);
    // rewrite the header with a bogus layer kind, preserving framing
    std::string bytes;
    {
        std::ifstream is(f.path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    }
    auto pos = bytes.find("dense");
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, 5, "fancy");
    {
        std::ofstream os(f.path, std::ios::binary);
        os << bytes;
    }
    try {
        load_model(f.path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("unsupported layer") != std::string::npos);
    }
}

TEST_CASE("loaded bundles satisfy shape invariants") {
    ModelBundle m = build_model(mlp_arch({3, 8, 8}, 3), {3, 8, 8}, 3, 55);
    FileGuard f{tmp_path("valid.trodomdl")};
    save_model(m, f.path);
    ModelBundle back = load_model(f.path);
    CHECK_NOTHROW(back.validate());
}
