#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "trodo/attack.hpp"
#include "trodo/augment.hpp"
#include "trodo/model.hpp"

namespace trodo {

double normal_cdf(double x);
double normal_inverse_cdf(double p);

// Normal(mu, sigma) truncated below at lower_trunc (-inf disables truncation).
struct NullFit {
    double mu = 0.0;
    double sigma = 1.0;
    double lower_trunc = 0.0;
    std::vector<double> samples;   // the z_i the fit came from
    bool degenerate = false;       // sigma hit the floor

    double cdf(double x) const;
    double inverse_cdf(double p) const;  // abs tol 1e-9
};

struct CalibrationResult {
    double epsilon = 0.0;
    double tau = 0.0;
    double gamma = 0.5;
    NullFit null_fit;
    int n_baseline = 50;
    double confidence = 0.95;
    std::uint64_t seed = 0;
    std::size_t num_classes = 0;

    std::string to_json() const;
    static CalibrationResult from_json(const std::string& text);
    void save(const std::string& path) const;
    static CalibrationResult load(const std::string& path);
};

struct CalibrateOptions {
    double eps_min = 1e-4;
    double eps_max = 0.0;       // <= 0 selects 10 * sqrt(d)
    double rel_tol = 1e-3;
    int attack_steps = 10;
    bool clip_to_unit_box = true;
    bool l2_normalized_step = false;  // must match the scan-time attack
};

// Smallest L2 radius (within bisection tolerance) for which the ID-Score PGD
// lifts the batch-mean ID-Score of the surrogate to gamma.
double calibrate_epsilon(const ModelBundle& surrogate, const OodBatch& ood, double gamma,
                         const CalibrateOptions& opts = {});

// Baseline signature scores of the surrogate: the OOD batch is split into
// n_baseline sub-batches (disjoint partition when large enough, bootstrap
// otherwise), one mean-delta signature per sub-batch, transformed to
// z = -log(1 - S).
NullFit fit_null_distribution(const ModelBundle& surrogate, const OodBatch& ood, double epsilon,
                              int n_baseline, std::uint64_t rng_seed,
                              const CalibrateOptions& opts = {});

// tau = F^{-1}(confidence^{1/N}) where F is the fitted truncated-normal CDF.
double compute_threshold(const NullFit& fit, int n_baseline, double confidence = 0.95);

// Full pipeline: epsilon by bisection, null fit, threshold.
CalibrationResult calibrate(const ModelBundle& surrogate, const OodBatch& ood, double gamma,
                            int n_baseline, double confidence, std::uint64_t seed,
                            const CalibrateOptions& opts = {});

}  // namespace trodo
