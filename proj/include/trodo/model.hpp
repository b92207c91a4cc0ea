#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trodo/tensor.hpp"

namespace trodo {

enum class LayerKind { Dense, Conv2d, ReLU, MaxPool2d, Flatten };

std::string layer_kind_name(LayerKind k);

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    // Dense
    std::size_t in = 0, out = 0;
    // Conv2d
    std::size_t in_ch = 0, out_ch = 0, kernel = 0, stride = 1, padding = 0;
    // MaxPool2d reuses kernel/stride.

    static LayerSpec dense(std::size_t in, std::size_t out);
    static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                            std::size_t stride = 1, std::size_t padding = 0);
    static LayerSpec relu();
    static LayerSpec maxpool2d(std::size_t kernel, std::size_t stride);
    static LayerSpec flatten();

    bool has_weights() const {
        return kind == LayerKind::Dense || kind == LayerKind::Conv2d;
    }
};

struct Provenance {
    enum class Kind { Clean, Trojaned };
    Kind kind = Kind::Clean;
    std::string trigger_id;   // set when trojaned
    std::string mapping_id;   // set when trojaned

    bool is_trojaned() const { return kind == Kind::Trojaned; }
};

struct TrainingMode {
    enum class Kind { Standard, Adversarial, Adaptive };
    Kind kind = Kind::Standard;
    // Adversarial
    int pgd_steps = 10;
    double eps_linf = 2.0 / 255.0;
    // Adaptive
    int variant = 1;
    double lambda1 = 0.5, lambda2 = 0.5, lambda3 = 0.5;
};

struct ModelMeta {
    std::size_t num_classes = 0;
    std::vector<std::size_t> input_shape;  // C,H,W or flat
    Provenance provenance;
    TrainingMode training_mode;
    std::uint64_t seed = 0;
};

// Classifier: ordered layers plus per-layer parameter tensors. Weighted
// layers carry {weight, bias}; others carry nothing. Immutable during
// inference, shareable across scan workers.
struct ModelBundle {
    std::vector<LayerSpec> spec;
    std::vector<std::vector<Tensor>> weights;  // parallel to spec
    ModelMeta meta;

    // Validates layer chaining from meta.input_shape and weight shapes.
    // Throws ShapeError naming the offending layer.
    void validate() const;
};

// Shape each layer produces given the previous shape; used by validate and
// the builders.
std::vector<std::size_t> layer_output_shape(const LayerSpec& layer,
                                            const std::vector<std::size_t>& in_shape);

// Builds a bundle with weights initialized Kaiming-uniform from the seed.
// Weights are snapped to float32-representable values so save/load round
// trips bit-exactly.
ModelBundle build_model(std::vector<LayerSpec> spec, std::vector<std::size_t> input_shape,
                        std::size_t num_classes, std::uint64_t seed);

// Cached per-layer activations from one forward pass; activations[0] is the
// input, activations[i+1] the output of layer i.
struct ForwardTrace {
    std::vector<Tensor> activations;
    const Tensor& logits() const { return activations.back(); }
};

ForwardTrace forward(const ModelBundle& model, const Tensor& input);

// z = f(x). Deterministic, pure.
Tensor evaluate_logits(const ModelBundle& model, const Tensor& input);

// Numerically stable softmax (max subtraction).
Tensor softmax(const Tensor& logits);

// MSP: max softmax probability. Always in [1/c, 1).
double id_score(const ModelBundle& model, const Tensor& input);
double id_score_from_logits(const Tensor& logits);

struct Objective {
    enum class Kind { IdScore, CrossEntropy };
    Kind kind = Kind::IdScore;
    std::size_t label = 0;  // CrossEntropy only

    static Objective id_score() { return {Kind::IdScore, 0}; }
    static Objective cross_entropy(std::size_t label) { return {Kind::CrossEntropy, label}; }
};

// Gradient of the scalar objective w.r.t. the logits vector.
Tensor objective_logit_gradient(const Objective& obj, const Tensor& logits,
                                std::size_t num_classes);

// Per-layer parameter gradients, parallel to ModelBundle::weights.
struct GradStore {
    std::vector<std::vector<Tensor>> grads;

    static GradStore zeros_like(const ModelBundle& model);
    void accumulate(const GradStore& other, double scale = 1.0);
    void scale(double s);
};

// Reverse pass: propagates d(objective)/d(logits) back to the input.
// When param_grads is non-null, accumulates weight/bias gradients too.
Tensor backprop(const ModelBundle& model, const ForwardTrace& trace,
                const Tensor& logit_grad, GradStore* param_grads = nullptr);

// Exact gradient of the objective w.r.t. every input entry.
// ReLU subgradient at 0 is 0; MaxPool ties break at the first row-major index.
Tensor input_gradient(const ModelBundle& model, const Tensor& input, const Objective& obj);

}  // namespace trodo
