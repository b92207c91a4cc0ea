#include "trodo/scanner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "trodo/rng.hpp"

namespace trodo {

namespace {

using nlohmann::json;

json config_echo_json(const ScanConfig& cfg, const AttackConfig& attack) {
    json j;
    j["mode"] = cfg.mode == ScanMode::Trodo ? "trodo" : "trodo-zero";
    j["k"] = cfg.k;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["compare_in_z_space"] = cfg.compare_in_z_space;
    j["attack"] = {{"epsilon", attack.epsilon},
                   {"alpha", attack.effective_alpha()},
                   {"steps", attack.steps},
                   {"clip_to_unit_box", attack.clip_to_unit_box},
                   {"l2_normalized_step", attack.l2_normalized_step}};
    j["transforms"] = json::array();
    for (const TransformSpec& t : cfg.transforms) j["transforms"].push_back(t.name());
    j["calibration"] = {{"epsilon", cfg.calibration.epsilon},
                        {"tau", cfg.calibration.tau},
                        {"gamma", cfg.calibration.gamma},
                        {"n_baseline", cfg.calibration.n_baseline}};
    return j;
}

}  // namespace

std::pair<double, std::vector<SampleScore>> compute_signature(const ModelBundle& model,
                                                              const OodBatch& ood,
                                                              const AttackConfig& attack) {
    if (ood.size() == 0) throw ConfigError("compute_signature: empty OOD batch");
    std::vector<SampleScore> scores(ood.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < ood.size(); ++i) {
        SampleScore& s = scores[i];
        s.id_score_before = id_score(model, ood.images[i]);
        s.id_score_after = id_score(model, pgd_increase_id_score(model, ood.images[i], attack));
        s.delta = s.id_score_after - s.id_score_before;
        sum += s.delta;
    }
    return {sum / static_cast<double>(ood.size()), std::move(scores)};
}

ScanReport scan(const ModelBundle& model, const std::vector<Tensor>& sources,
                const ScanConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (sources.empty())
        throw ConfigError(cfg.mode == ScanMode::Trodo
                              ? "scan: trodo mode requires a nonempty benign sample set"
                              : "scan: trodo-zero mode requires a nonempty validation set");
    if (cfg.calibration.num_classes != 0 &&
        cfg.calibration.num_classes != model.meta.num_classes)
        throw ConfigError("scan: calibration class count does not match the model");

    std::vector<Tensor> picked;
    picked.reserve(std::min(cfg.batch_size, sources.size()));
    if (sources.size() <= cfg.batch_size) {
        picked = sources;
    } else {
        Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
        std::vector<std::size_t> order(sources.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        for (std::size_t i = 0; i < cfg.batch_size; ++i) picked.push_back(sources[order[i]]);
    }
    OodBatch ood = craft_ood_set(picked, cfg.transforms, cfg.k, cfg.seed);

    AttackConfig attack = cfg.attack;
    if (attack.epsilon <= 0.0) attack.epsilon = cfg.calibration.epsilon;

    ScanReport report;
    auto [signature, per_sample] = compute_signature(model, ood, attack);
    report.signature = signature;
    report.per_sample = std::move(per_sample);
    report.z_statistic = -std::log(1.0 - std::min(signature, 1.0 - 1e-9));
    report.tau = cfg.calibration.tau;
    report.epsilon = attack.epsilon;
    if (cfg.compare_in_z_space) {
        report.verdict = report.z_statistic > report.tau ? Verdict::Trojaned : Verdict::Clean;
    } else {
        // raw-space comparison: invert tau through z = -log(1-S)
        const double tau_raw = 1.0 - std::exp(-report.tau);
        report.verdict = report.signature > tau_raw ? Verdict::Trojaned : Verdict::Clean;
    }
    report.config_echo = config_echo_json(cfg, attack).dump();
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::string ScanReport::to_json() const {
    json j;
    j["report_version"] = kReportVersion;
    j["signature_S"] = signature;
    j["z_statistic"] = z_statistic;
    j["tau"] = tau;
    j["epsilon"] = epsilon;
    j["verdict"] = verdict == Verdict::Trojaned ? "trojaned" : "clean";
    j["config"] = json::parse(config_echo);
    j["per_sample"] = json::array();
    for (const SampleScore& s : per_sample)
        j["per_sample"].push_back({{"id_score_before", s.id_score_before},
                                   {"id_score_after", s.id_score_after},
                                   {"delta", s.delta}});
    // timings live apart from the deterministic payload
    j["timing"] = {{"wall_time_seconds", wall_time_seconds}};
    return j.dump(2);
}

void ScanReport::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << to_json() << "\n";
    if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace trodo
