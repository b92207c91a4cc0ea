#pragma once

#include <cstdint>
#include <vector>

#include "trodo/attack.hpp"
#include "trodo/dataset.hpp"
#include "trodo/model.hpp"
#include "trodo/poison.hpp"

namespace trodo {

struct TrainConfig {
    std::size_t epochs = 30;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    TrainingMode mode;
    std::uint64_t seed = 0;
    // Inner attack used by adaptive variant 2 to recompute perturbed OOD
    // samples each minibatch.
    AttackConfig adaptive_attack{.epsilon = 1.0, .steps = 10};

    void validate() const {
        if (epochs == 0 || batch_size == 0 || learning_rate <= 0.0)
            throw ConfigError("training hyperparameters must be positive");
    }
};

// Reference architectures exercised by the zoo.
std::vector<LayerSpec> mlp_arch(const std::vector<std::size_t>& input_shape,
                                std::size_t num_classes);
std::vector<LayerSpec> cnn_arch(const std::vector<std::size_t>& input_shape,
                                std::size_t num_classes);

std::size_t predict(const ModelBundle& model, const Tensor& input);
double accuracy(const ModelBundle& model, const Dataset& ds);

// Fraction of triggered test inputs classified per the attacker's mapping.
// All-to-one exempts samples already labeled with the target class.
double attack_success_rate(const ModelBundle& model, const Dataset& clean_test,
                           const TriggerSpec& trigger, const LabelMapping& mapping);

// SGD with momentum 0.9, cosine-decayed learning rate, cross-entropy loss.
// Adversarial mode perturbs each minibatch sample with the L-inf PGD first.
// Deterministic per seed; per-batch losses land in batch_losses when given.
ModelBundle train_classifier(const Dataset& dataset, const std::vector<LayerSpec>& arch,
                             const TrainConfig& cfg, std::vector<double>* batch_losses = nullptr);

// Composite-loss training for the two adaptive attack variants. Variant 1
// adds uniform-cross-entropy terms pushing ID confidence down and OOD
// confidence up; variant 2 penalizes the gap between benign and perturbed
// OOD softmax outputs.
ModelBundle train_adaptive(const Dataset& dataset, const std::vector<Tensor>& ood_images,
                           const std::vector<LayerSpec>& arch, const TrainConfig& cfg,
                           std::vector<double>* batch_losses = nullptr);

}  // namespace trodo
