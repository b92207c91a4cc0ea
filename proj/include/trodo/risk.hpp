#pragma once

#include "trodo/dataset.hpp"
#include "trodo/model.hpp"

namespace trodo {

// First-order adversarial risk: alpha * mean_x || d h / d x ||_2 where h is
// the scalar output of a regression head (num_classes == 1) or the
// true-class logit of a classifier.
double adversarial_risk_estimate(const ModelBundle& model, const Dataset& dataset, double alpha);

// Regression pairs for the linear backdoor experiment.
struct RegressionSet {
    std::vector<Tensor> inputs;  // flat vectors
    std::vector<double> targets;
};

// Exact least-squares fit of y = w^T x + b as a single-dense-layer bundle
// with a scalar head; solved via normal equations.
ModelBundle fit_linear_least_squares(const RegressionSet& data, std::uint64_t seed = 0);

}  // namespace trodo
