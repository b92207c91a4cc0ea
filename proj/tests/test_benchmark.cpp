#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "trodo/risk.hpp"
#include "trodo/rng.hpp"
#include "trodo/train.hpp"
#include "trodo/zoo.hpp"

using namespace trodo;

namespace {

ModelBundle linear_head(const std::vector<double>& w, double bias) {
    const std::size_t d = w.size();
    ModelBundle m = build_model({LayerSpec::dense(d, 1)}, {d}, 1, 0);
    m.weights[0][0].data = w;
    m.weights[0][1].data = {bias};
    return m;
}

Dataset tiny_dataset(std::size_t n, std::vector<std::size_t> shape, std::size_t num_classes,
                     std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.num_classes = num_classes;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor x(shape);
        for (double& v : x.data) v = rng.uniform();
        ds.images.push_back(x);
        ds.labels.push_back(i % num_classes);
    }
    return ds;
}

}  // namespace

TEST_CASE("synthetic dataset is deterministic, balanced and in range") {
    LabeledSplit a = generate_synthetic_dataset(4, 12, 6, 16, 99);
    LabeledSplit b = generate_synthetic_dataset(4, 12, 6, 16, 99);
    CHECK(a.train.size() == 48);
    CHECK(a.test.size() == 24);
    CHECK(a.train.num_classes == 4);
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train.images[i].data == b.train.images[i].data);
        CHECK(a.train.labels[i] == b.train.labels[i]);
    }
    std::vector<std::size_t> counts(4, 0);
    for (std::size_t y : a.train.labels) counts[y]++;
    for (std::size_t c : counts) CHECK(c == 12);
    for (const Tensor& img : a.train.images) {
        CHECK(img.shape == std::vector<std::size_t>{3, 16, 16});
        for (double v : img.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    LabeledSplit c = generate_synthetic_dataset(4, 12, 6, 16, 100);
    CHECK(c.train.images[0].data != a.train.images[0].data);
}

TEST_CASE("dataset save/load round trip is bit exact") {
    LabeledSplit split = generate_synthetic_dataset(3, 4, 2, 8, 5);
    const std::string path = "ds_roundtrip.trododat";
    save_dataset(split.train, path);
    Dataset back = load_dataset(path);
    CHECK(back.num_classes == split.train.num_classes);
    CHECK(back.labels == split.train.labels);
    REQUIRE(back.size() == split.train.size());
    for (std::size_t i = 0; i < back.size(); ++i)
        CHECK(back.images[i].data == split.train.images[i].data);
    std::remove(path.c_str());
}

TEST_CASE("patch trigger stamps the requested corner") {
    Tensor img({3, 8, 8});
    img.data.assign(img.numel(), 0.25);
    Tensor out = apply_trigger(img, TriggerSpec::patch(3, PatchCorner::BottomRight, false, 1.0));
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x) {
                const bool in_patch = y >= 5 && x >= 5;
                CHECK(out.at(c, y, x) == (in_patch ? 1.0 : 0.25));
            }
    // checkerboard alternates starting with 1 at the patch origin
    Tensor cb = apply_trigger(img, TriggerSpec::patch(2, PatchCorner::TopLeft, true));
    CHECK(cb.at(0, 0, 0) == 1.0);
    CHECK(cb.at(0, 0, 1) == 0.0);
    CHECK(cb.at(0, 1, 0) == 0.0);
    CHECK(cb.at(0, 1, 1) == 1.0);
}

TEST_CASE("blended trigger is an alpha blend with a fixed seeded image") {
    Tensor zeros({3, 6, 6});
    zeros.data.assign(zeros.numel(), 0.0);
    Tensor ones = zeros;
    ones.data.assign(ones.numel(), 1.0);
    TriggerSpec t = TriggerSpec::blended(7, 0.2);
    Tensor bz = apply_trigger(zeros, t);
    Tensor bo = apply_trigger(ones, t);
    for (std::size_t i = 0; i < bz.numel(); ++i) {
        CHECK(bz[i] >= 0.0);
        CHECK(bz[i] <= 0.2);  // alpha * trigger pixel
        CHECK(bo[i] - bz[i] == doctest::Approx(0.8).epsilon(1e-12));
    }
    Tensor again = apply_trigger(zeros, t);
    CHECK(again.data == bz.data);
}

TEST_CASE("sinusoidal trigger adds the expected horizontal wave") {
    const std::size_t W = 12;
    Tensor img({3, 5, W});
    img.data.assign(img.numel(), 0.5);
    TriggerSpec t = TriggerSpec::sinusoidal(0.08, 6.0);
    Tensor out = apply_trigger(img, t);
    const double two_pi = 6.283185307179586;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 5; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double expected =
                    0.5 + 0.08 * std::sin(two_pi * 6.0 * static_cast<double>(x) / W);
                CHECK(out.at(c, y, x) == doctest::Approx(expected).epsilon(1e-12));
            }
}

TEST_CASE("label mappings") {
    CHECK(LabelMapping::all_to_one(3).remap(7, 10) == 3);
    CHECK(LabelMapping::all_to_all(1).remap(9, 10) == 0);
    CHECK(LabelMapping::all_to_all(4).remap(8, 10) == 2);
}

TEST_CASE("poisoning hits exactly ceil(rate * n) samples and nothing else") {
    Dataset ds = tiny_dataset(23, {2, 2, 2}, 5, 1);
    PoisonConfig cfg;
    cfg.trigger = TriggerSpec::patch(2);
    cfg.mapping = LabelMapping::all_to_one(0);
    cfg.rate = 0.10;
    cfg.seed = 9;
    PoisonedDataset p = poison_dataset(ds, cfg);
    CHECK(p.poison_mask.size() == 3);  // ceil(2.3)
    CHECK(std::is_sorted(p.poison_mask.begin(), p.poison_mask.end()));
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const bool poisoned = cursor < p.poison_mask.size() && p.poison_mask[cursor] == i;
        if (poisoned) {
            CHECK(p.data.labels[i] == 0);
            CHECK(p.data.images[i].data == apply_trigger(ds.images[i], cfg.trigger).data);
            ++cursor;
        } else {
            CHECK(p.data.labels[i] == ds.labels[i]);
            CHECK(p.data.images[i].data == ds.images[i].data);
        }
    }
    PoisonedDataset p2 = poison_dataset(ds, cfg);
    CHECK(p2.poison_mask == p.poison_mask);
    cfg.rate = 0.0;
    CHECK_THROWS_AS(poison_dataset(ds, cfg), ConfigError);
    cfg.rate = 0.1;
    cfg.mapping = LabelMapping::all_to_all(5);
    Dataset five = tiny_dataset(10, {2, 2, 2}, 5, 2);
    CHECK_THROWS_AS(poison_dataset(five, cfg), ConfigError);  // shift == 0 mod c
}

TEST_CASE("predict, accuracy and asr on hand-built models") {
    // identity-logit model over 3 classes: argmax of the input itself
    ModelBundle m = build_model({LayerSpec::dense(3, 3)}, {3}, 3, 0);
    m.weights[0][0].data = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    m.weights[0][1].data = {0, 0, 0};
    CHECK(predict(m, Tensor({3}, {0.1, 0.9, 0.2})) == 1);

    Dataset ds;
    ds.num_classes = 3;
    ds.images = {Tensor({3}, {1, 0, 0}), Tensor({3}, {0, 1, 0}), Tensor({3}, {0, 0, 1})};
    ds.labels = {0, 1, 2};
    CHECK(accuracy(m, ds) == 1.0);
    ds.labels = {0, 1, 1};
    CHECK(accuracy(m, ds) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("all-to-one asr skips samples already in the target class") {
    // constant model: always predicts class 0
    ModelBundle m =
        build_model({LayerSpec::flatten(), LayerSpec::dense(4, 3)}, {1, 2, 2}, 3, 0);
    for (Tensor& w : m.weights[1]) w.data.assign(w.numel(), 0.0);
    m.weights[1][1].data = {1.0, 0.0, 0.0};
    Dataset ds = tiny_dataset(9, {1, 2, 2}, 3, 3);
    const double asr =
        attack_success_rate(m, ds, TriggerSpec::patch(1), LabelMapping::all_to_one(0));
    CHECK(asr == 1.0);  // all non-target samples land on the target
    const double asr_all =
        attack_success_rate(m, ds, TriggerSpec::patch(1), LabelMapping::all_to_all(1));
    // only the class-2 samples map onto the constant prediction 0
    CHECK(asr_all == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("training reduces the loss and is deterministic") {
    LabeledSplit split = generate_synthetic_dataset(3, 20, 5, 12, 21);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 16;
    cfg.seed = 2;
    std::vector<double> losses;
    ModelBundle m = train_classifier(split.train, mlp_arch({3, 12, 12}, 3), cfg, &losses);
    REQUIRE(!losses.empty());
    const std::size_t per_epoch = losses.size() / cfg.epochs;
    const double first = std::accumulate(losses.begin(), losses.begin() + per_epoch, 0.0);
    const double last = std::accumulate(losses.end() - per_epoch, losses.end(), 0.0);
    CHECK(last < first);
    CHECK(accuracy(m, split.train) > 0.5);  // well above the 1/3 chance level

    std::vector<double> losses2;
    ModelBundle m2 = train_classifier(split.train, mlp_arch({3, 12, 12}, 3), cfg, &losses2);
    CHECK(losses2 == losses);
    for (std::size_t l = 0; l < m.weights.size(); ++l)
        for (std::size_t t = 0; t < m.weights[l].size(); ++t)
            CHECK(m2.weights[l][t].data == m.weights[l][t].data);
}

TEST_CASE("adaptive training with zero lambdas matches standard training") {
    LabeledSplit split = generate_synthetic_dataset(3, 10, 2, 10, 33);
    std::vector<Tensor> ood;
    Rng rng(12);
    for (int i = 0; i < 6; ++i) {
        Tensor x({3, 10, 10});
        for (double& v : x.data) v = rng.uniform();
        ood.push_back(x);
    }
    for (int variant : {1, 2}) {
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 10;
        cfg.seed = 4;
        cfg.mode.kind = TrainingMode::Kind::Adaptive;
        cfg.mode.variant = variant;
        cfg.mode.lambda1 = cfg.mode.lambda2 = cfg.mode.lambda3 = 0.0;
        std::vector<double> adaptive_losses;
        ModelBundle ma = train_adaptive(split.train, ood, mlp_arch({3, 10, 10}, 3), cfg,
                                        &adaptive_losses);

        TrainConfig std_cfg = cfg;
        std_cfg.mode = TrainingMode{};
        std::vector<double> std_losses;
        ModelBundle ms = train_classifier(split.train, mlp_arch({3, 10, 10}, 3), std_cfg,
                                          &std_losses);
        REQUIRE(adaptive_losses.size() == std_losses.size());
        for (std::size_t i = 0; i < std_losses.size(); ++i)
            CHECK(adaptive_losses[i] == doctest::Approx(std_losses[i]).epsilon(1e-9));
        for (std::size_t l = 0; l < ms.weights.size(); ++l)
            for (std::size_t t = 0; t < ms.weights[l].size(); ++t)
                for (std::size_t i = 0; i < ms.weights[l][t].numel(); ++i)
                    CHECK(ma.weights[l][t][i] ==
                          doctest::Approx(ms.weights[l][t][i]).epsilon(1e-9));
    }
}

TEST_CASE("adversarial risk of a linear head is alpha times the weight norm") {
    ModelBundle m = linear_head({3.0, 4.0}, 0.7);
    Dataset ds = tiny_dataset(5, {2}, 1, 6);
    ds.labels.assign(5, 0);
    CHECK(adversarial_risk_estimate(m, ds, 0.25) == doctest::Approx(0.25 * 5.0).epsilon(1e-12));
    ModelBundle zero = linear_head({0.0, 0.0}, 1.0);
    CHECK(adversarial_risk_estimate(zero, ds, 0.25) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("classifier risk averages the true-class row norms") {
    ModelBundle m = build_model({LayerSpec::dense(2, 2)}, {2}, 2, 0);
    m.weights[0][0].data = {3.0, 4.0, 0.0, 1.0};  // rows (3,4) and (0,1)
    m.weights[0][1].data = {0.0, 0.0};
    Dataset ds = tiny_dataset(4, {2}, 2, 7);
    ds.labels = {0, 1, 0, 1};
    CHECK(adversarial_risk_estimate(m, ds, 1.0) == doctest::Approx((5.0 + 1.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("least squares recovers an exact linear relation") {
    Rng rng(40);
    RegressionSet data;
    const std::vector<double> w = {1.5, -2.0, 0.5};
    for (int i = 0; i < 20; ++i) {
        Tensor x({3});
        for (double& v : x.data) v = rng.normal();
        data.inputs.push_back(x);
        data.targets.push_back(w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + 0.3);
    }
    ModelBundle fit = fit_linear_least_squares(data);
    for (std::size_t i = 0; i < data.inputs.size(); ++i) {
        const Tensor out = evaluate_logits(fit, data.inputs[i]);
        CHECK(out[0] == doctest::Approx(data.targets[i]).epsilon(1e-4));
    }
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(fit.weights[0][0][i] == doctest::Approx(w[i]).epsilon(1e-4));
    CHECK(fit.weights[0][1][0] == doctest::Approx(0.3).epsilon(1e-4));
}

TEST_CASE("zoo manifest round trips through json") {
    ZooManifest man;
    man.dataset_path = "zoo/dataset.trododat";
    man.surrogate_path = "zoo/surrogate.trodomdl";
    ZooEntry e;
    e.path = "zoo/model_0.trodomdl";
    e.provenance.kind = Provenance::Kind::Trojaned;
    e.provenance.trigger_id = "patch";
    e.provenance.mapping_id = "all-to-one";
    e.seed = 41;
    e.clean_accuracy = 0.93;
    e.asr = 0.97;
    e.admitted = true;
    man.models.push_back(e);
    ZooEntry clean;
    clean.path = "zoo/model_1.trodomdl";
    clean.clean_accuracy = 0.95;
    man.models.push_back(clean);

    const std::string path = "manifest_roundtrip.json";
    man.save(path);
    ZooManifest back = ZooManifest::load(path);
    CHECK(back.dataset_path == man.dataset_path);
    CHECK(back.surrogate_path == man.surrogate_path);
    REQUIRE(back.models.size() == 2);
    CHECK(back.models[0].provenance.is_trojaned());
    CHECK(back.models[0].provenance.trigger_id == "patch");
    CHECK(back.models[0].asr == 0.97);
    CHECK(back.models[1].provenance.kind == Provenance::Kind::Clean);
    CHECK(back.models[1].admitted);
    std::remove(path.c_str());
}

TEST_CASE("atomic_write_text leaves no temp files behind") {
    const std::string path = "atomic_test.txt";
    atomic_write_text(path, "hello");
    std::ifstream is(path);
    std::string body((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    CHECK(body == "hello");
    std::size_t stray = 0;
    for (const auto& entry : std::filesystem::directory_iterator(".")) {
        const std::string name = entry.path().filename().string();
        if (name.find("atomic_test") != std::string::npos && name != path) ++stray;
    }
    CHECK(stray == 0);
    std::remove(path.c_str());
}
