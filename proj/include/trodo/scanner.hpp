#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trodo/attack.hpp"
#include "trodo/augment.hpp"
#include "trodo/calibration.hpp"
#include "trodo/model.hpp"

namespace trodo {

enum class ScanMode { Trodo, TrodoZero };

struct ScanConfig {
    ScanMode mode = ScanMode::Trodo;
    AttackConfig attack;              // epsilon filled from calibration when 0
    CalibrationResult calibration;
    std::vector<TransformSpec> transforms = default_transforms();
    std::size_t k = 3;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    // Algorithm-level switch: compare in z = -log(1-S) space (default) or raw
    // signature space.
    bool compare_in_z_space = true;
};

struct SampleScore {
    double id_score_before = 0.0;
    double id_score_after = 0.0;
    double delta = 0.0;
};

enum class Verdict { Clean, Trojaned };

struct ScanReport {
    static constexpr int kReportVersion = 1;
    std::vector<SampleScore> per_sample;
    double signature = 0.0;     // S: mean delta
    double z_statistic = 0.0;   // -log(1 - S)
    double tau = 0.0;
    double epsilon = 0.0;
    Verdict verdict = Verdict::Clean;
    double wall_time_seconds = 0.0;
    std::string config_echo;    // JSON echo of the effective scan config

    std::string to_json() const;
    void save(const std::string& path) const;
};

// Eq.-level signature: mean over the batch of (ID-Score after the ID-Score
// PGD minus ID-Score before).
std::pair<double, std::vector<SampleScore>> compute_signature(const ModelBundle& model,
                                                              const OodBatch& ood,
                                                              const AttackConfig& attack);

// Full scan: craft the OOD batch from the given sources (benign samples in
// TRODO mode, validation images in TRODO-Zero), compute the signature with
// the calibrated radius, threshold against tau. Borderline z == tau is Clean.
ScanReport scan(const ModelBundle& model, const std::vector<Tensor>& sources,
                const ScanConfig& cfg);

}  // namespace trodo
