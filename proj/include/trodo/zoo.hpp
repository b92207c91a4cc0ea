#pragma once

#include <map>
#include <string>
#include <vector>

#include "trodo/dataset.hpp"
#include "trodo/poison.hpp"
#include "trodo/scanner.hpp"
#include "trodo/train.hpp"

namespace trodo {

struct ZooEntry {
    std::string path;
    Provenance provenance;
    TrainingMode training_mode;
    std::uint64_t seed = 0;
    double clean_accuracy = 0.0;
    double asr = -1.0;        // trojaned models only
    bool admitted = true;     // failed the ASR / accuracy gates otherwise
};

struct ZooManifest {
    std::string dataset_path;
    std::string surrogate_path;   // calibration surrogate; never scored
    std::vector<ZooEntry> models;

    void save(const std::string& path) const;
    static ZooManifest load(const std::string& path);
};

struct ZooBuildConfig {
    // dataset (desk-scale defaults; keep builds tractable on a laptop core)
    std::size_t num_classes = 10;
    std::size_t train_per_class = 150;
    std::size_t test_per_class = 25;
    std::size_t image_size = 16;
    // zoo composition
    std::size_t num_clean = 10;
    std::size_t trojaned_per_cell = 5;  // per (trigger, mapping) cell
    std::vector<TriggerSpec> triggers = {TriggerSpec::patch(4), TriggerSpec::blended(7, 0.35),
                                         TriggerSpec::sinusoidal(0.20, 4.0)};
    bool all_to_one = true;
    bool all_to_all = true;
    double poison_rate = 0.15;
    // training
    std::string arch = "cnn";  // mlp | cnn
    TrainConfig train{.epochs = 15};
    // admission gates
    double asr_gate = 0.90;
    double accuracy_gap_gate = 0.05;
    // run
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out_dir;
};

// Trains the dataset, surrogate, clean and trojaned models; applies the
// ASR / clean-accuracy gates; writes models, dataset, and manifest under
// cfg.out_dir. Gated-out models stay in the manifest with admitted=false.
ZooManifest build_zoo(const ZooBuildConfig& cfg);

struct ZooEvalResult {
    std::size_t scanned = 0;
    double accuracy = 0.0;
    std::map<std::string, double> per_attack_accuracy;  // trigger id -> accuracy
    std::size_t true_positive = 0, false_positive = 0;
    std::size_t true_negative = 0, false_negative = 0;
    double mean_signature_clean = 0.0;
    double mean_signature_trojaned = 0.0;
    std::map<std::string, double> mean_signature_by_attack;
    std::vector<std::pair<std::string, Verdict>> verdicts;  // model path -> verdict

    std::string to_json() const;
};

// Scans every admitted model against ground truth. The calibration surrogate
// must not appear among the scored models.
ZooEvalResult evaluate_zoo(const ZooManifest& manifest, const std::vector<Tensor>& sources,
                           const ScanConfig& scan_cfg, int jobs = 1);

// Write-then-rename so partially written artifacts never appear.
void atomic_write_text(const std::string& path, const std::string& text);

}  // namespace trodo
