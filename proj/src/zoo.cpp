#include "trodo/zoo.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include "json.hpp"
#include "trodo/model_io.hpp"

namespace trodo {

namespace {

using nlohmann::json;

json entry_to_json(const ZooEntry& e) {
    json j;
    j["path"] = e.path;
    if (e.provenance.is_trojaned()) {
        j["provenance"] = {{"kind", "trojaned"},
                           {"trigger_id", e.provenance.trigger_id},
                           {"mapping_id", e.provenance.mapping_id}};
    } else {
        j["provenance"] = {{"kind", "clean"}};
    }
    switch (e.training_mode.kind) {
        case TrainingMode::Kind::Standard: j["training_mode"] = "standard"; break;
        case TrainingMode::Kind::Adversarial: j["training_mode"] = "adversarial"; break;
        case TrainingMode::Kind::Adaptive:
            j["training_mode"] = "adaptive" + std::to_string(e.training_mode.variant);
            break;
    }
    j["seed"] = e.seed;
    j["clean_accuracy"] = e.clean_accuracy;
    if (e.asr >= 0.0) j["asr"] = e.asr;
    j["admitted"] = e.admitted;
    return j;
}

ZooEntry entry_from_json(const json& j) {
    ZooEntry e;
    e.path = j.at("path").get<std::string>();
    const json& p = j.at("provenance");
    if (p.at("kind") == "trojaned") {
        e.provenance.kind = Provenance::Kind::Trojaned;
        e.provenance.trigger_id = p.at("trigger_id").get<std::string>();
        e.provenance.mapping_id = p.at("mapping_id").get<std::string>();
    }
    const std::string tm = j.at("training_mode").get<std::string>();
    if (tm == "adversarial") e.training_mode.kind = TrainingMode::Kind::Adversarial;
    else if (tm.rfind("adaptive", 0) == 0) {
        e.training_mode.kind = TrainingMode::Kind::Adaptive;
        e.training_mode.variant = tm == "adaptive2" ? 2 : 1;
    }
    e.seed = j.at("seed").get<std::uint64_t>();
    e.clean_accuracy = j.at("clean_accuracy").get<double>();
    e.asr = j.value("asr", -1.0);
    e.admitted = j.at("admitted").get<bool>();
    return e;
}

}  // namespace

void atomic_write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot open '" + tmp + "' for writing");
        os << text;
        if (!os) throw IoError("write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed for '" + path + "': " + ec.message());
}

void ZooManifest::save(const std::string& path) const {
    json j;
    j["manifest_version"] = 1;
    j["dataset_path"] = dataset_path;
    j["surrogate_path"] = surrogate_path;
    j["models"] = json::array();
    for (const ZooEntry& e : models) j["models"].push_back(entry_to_json(e));
    atomic_write_text(path, j.dump(2) + "\n");
}

ZooManifest ZooManifest::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    ZooManifest m;
    try {
        json j = json::parse(is);
        m.dataset_path = j.at("dataset_path").get<std::string>();
        m.surrogate_path = j.at("surrogate_path").get<std::string>();
        for (const json& ej : j.at("models")) m.models.push_back(entry_from_json(ej));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

namespace {

struct TrainJob {
    std::string name;
    Provenance provenance;
    PoisonConfig poison;  // used when trojaned
    std::uint64_t seed = 0;
};

ZooEntry run_train_job(const TrainJob& job, const LabeledSplit& split,
                       const std::vector<LayerSpec>& arch, const ZooBuildConfig& cfg) {
    TrainConfig tc = cfg.train;
    tc.seed = job.seed;
    ZooEntry entry;
    entry.provenance = job.provenance;
    entry.training_mode = tc.mode;
    entry.seed = job.seed;
    entry.path = (std::filesystem::path(cfg.out_dir) / (job.name + ".trodomdl")).string();

    ModelBundle model;
    if (job.provenance.is_trojaned()) {
        PoisonedDataset poisoned = poison_dataset(split.train, job.poison);
        model = train_classifier(poisoned.data, arch, tc);
        entry.asr = attack_success_rate(model, split.test, job.poison.trigger, job.poison.mapping);
    } else {
        model = train_classifier(split.train, arch, tc);
    }
    entry.clean_accuracy = accuracy(model, split.test);
    model.meta.provenance = job.provenance;
    save_model(model, entry.path);
    return entry;
}

template <typename Job, typename Fn>
std::vector<std::invoke_result_t<Fn, Job>> run_parallel(const std::vector<Job>& jobs, int njobs,
                                                        Fn fn) {
    using R = std::invoke_result_t<Fn, Job>;
    std::vector<R> results(jobs.size());
    if (njobs <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = fn(jobs[i]);
        return results;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            results[i] = fn(jobs[i]);
        }
    };
    std::vector<std::future<void>> futures;
    for (int t = 0; t < njobs; ++t) futures.push_back(std::async(std::launch::async, worker));
    for (auto& f : futures) f.get();
    return results;
}

}  // namespace

ZooManifest build_zoo(const ZooBuildConfig& cfg) {
    if (cfg.out_dir.empty()) throw ConfigError("build_zoo: output directory required");
    std::filesystem::create_directories(cfg.out_dir);

    LabeledSplit split = generate_synthetic_dataset(cfg.num_classes, cfg.train_per_class,
                                                    cfg.test_per_class, cfg.image_size, cfg.seed);
    const std::vector<LayerSpec> arch =
        cfg.arch == "cnn" ? cnn_arch(split.train.images[0].shape, cfg.num_classes)
                          : mlp_arch(split.train.images[0].shape, cfg.num_classes);

    ZooManifest manifest;
    manifest.dataset_path = (std::filesystem::path(cfg.out_dir) / "dataset.trododat").string();
    save_dataset(split.train, manifest.dataset_path);
    save_dataset(split.test,
                 (std::filesystem::path(cfg.out_dir) / "dataset_test.trododat").string());

    std::vector<TrainJob> jobs;
    std::uint64_t seed = cfg.seed * 1000003ull + 17;

    // surrogate: a clean model with its own seed, kept out of the scored zoo
    TrainJob surrogate_job;
    surrogate_job.name = "surrogate";
    surrogate_job.seed = seed++;
    jobs.push_back(surrogate_job);

    for (std::size_t i = 0; i < cfg.num_clean; ++i) {
        TrainJob j;
        j.name = "clean_" + std::to_string(i);
        j.seed = seed++;
        jobs.push_back(j);
    }

    std::vector<LabelMapping> mappings;
    if (cfg.all_to_one) mappings.push_back(LabelMapping::all_to_one(0));
    if (cfg.all_to_all) mappings.push_back(LabelMapping::all_to_all(1));
    for (const TriggerSpec& trig : cfg.triggers) {
        for (const LabelMapping& map : mappings) {
            for (std::size_t i = 0; i < cfg.trojaned_per_cell; ++i) {
                TrainJob j;
                j.name = trig.id() + "_" + map.id() + "_" + std::to_string(i);
                j.provenance.kind = Provenance::Kind::Trojaned;
                j.provenance.trigger_id = trig.id();
                j.provenance.mapping_id = map.id();
                j.poison.trigger = trig;
                j.poison.mapping = map;
                j.poison.rate = cfg.poison_rate;
                j.poison.seed = seed;
                j.seed = seed++;
                jobs.push_back(j);
            }
        }
    }

    std::vector<ZooEntry> entries = run_parallel(
        jobs, cfg.jobs, [&](const TrainJob& j) { return run_train_job(j, split, arch, cfg); });

    // admission gates: trojan effectiveness and clean-accuracy gap
    double clean_acc_sum = 0.0;
    std::size_t clean_count = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].provenance.is_trojaned() && jobs[i].name != "surrogate") {
            clean_acc_sum += entries[i].clean_accuracy;
            ++clean_count;
        }
    }
    const double clean_acc_mean = clean_count ? clean_acc_sum / static_cast<double>(clean_count) : 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (jobs[i].name == "surrogate") {
            manifest.surrogate_path = entries[i].path;
            continue;
        }
        ZooEntry e = entries[i];
        if (e.provenance.is_trojaned()) {
            if (e.asr < cfg.asr_gate) e.admitted = false;
            if (clean_count && e.clean_accuracy < clean_acc_mean - cfg.accuracy_gap_gate)
                e.admitted = false;
        }
        manifest.models.push_back(std::move(e));
    }

    manifest.save((std::filesystem::path(cfg.out_dir) / "manifest.json").string());
    return manifest;
}

ZooEvalResult evaluate_zoo(const ZooManifest& manifest, const std::vector<Tensor>& sources,
                           const ScanConfig& scan_cfg, int jobs) {
    std::vector<const ZooEntry*> scored;
    for (const ZooEntry& e : manifest.models) {
        if (!e.admitted) continue;
        if (e.path == manifest.surrogate_path)
            throw ConfigError("evaluate_zoo: calibration surrogate found in the scored zoo");
        scored.push_back(&e);
    }
    if (scored.empty()) throw ConfigError("evaluate_zoo: no admitted models to scan");

    struct ScanOut {
        ScanReport report;
        const ZooEntry* entry = nullptr;
    };
    std::vector<ScanOut> outs = run_parallel(scored, jobs, [&](const ZooEntry* e) {
        ModelBundle model = load_model(e->path);
        return ScanOut{scan(model, sources, scan_cfg), e};
    });

    ZooEvalResult result;
    std::map<std::string, std::pair<std::size_t, std::size_t>> attack_counts;  // hits, total
    std::map<std::string, std::pair<double, std::size_t>> attack_sig;
    double sig_clean = 0.0, sig_troj = 0.0;
    std::size_t n_clean = 0, n_troj = 0;
    for (const ScanOut& o : outs) {
        const bool truth_trojaned = o.entry->provenance.is_trojaned();
        const bool said_trojaned = o.report.verdict == Verdict::Trojaned;
        result.verdicts.emplace_back(o.entry->path, o.report.verdict);
        if (truth_trojaned) {
            sig_troj += o.report.signature;
            ++n_troj;
            auto& [hits, total] = attack_counts[o.entry->provenance.trigger_id];
            ++total;
            if (said_trojaned) ++hits;
            auto& [s, n] = attack_sig[o.entry->provenance.trigger_id];
            s += o.report.signature;
            ++n;
            said_trojaned ? ++result.true_positive : ++result.false_negative;
        } else {
            sig_clean += o.report.signature;
            ++n_clean;
            said_trojaned ? ++result.false_positive : ++result.true_negative;
        }
    }
    result.scanned = outs.size();
    result.accuracy = static_cast<double>(result.true_positive + result.true_negative) /
                      static_cast<double>(outs.size());
    for (auto& [id, c] : attack_counts)
        result.per_attack_accuracy[id] =
            static_cast<double>(c.first) / static_cast<double>(c.second);
    for (auto& [id, s] : attack_sig)
        result.mean_signature_by_attack[id] = s.first / static_cast<double>(s.second);
    if (n_clean) result.mean_signature_clean = sig_clean / static_cast<double>(n_clean);
    if (n_troj) result.mean_signature_trojaned = sig_troj / static_cast<double>(n_troj);
    return result;
}

std::string ZooEvalResult::to_json() const {
    json j;
    j["scanned"] = scanned;
    j["accuracy"] = accuracy;
    j["confusion"] = {{"true_positive", true_positive},
                      {"false_positive", false_positive},
                      {"true_negative", true_negative},
                      {"false_negative", false_negative}};
    j["per_attack_accuracy"] = per_attack_accuracy;
    j["mean_signature"] = {{"clean", mean_signature_clean},
                           {"trojaned", mean_signature_trojaned},
                           {"by_attack", mean_signature_by_attack}};
    j["verdicts"] = json::array();
    for (const auto& [path, v] : verdicts)
        j["verdicts"].push_back(
            {{"path", path}, {"verdict", v == Verdict::Trojaned ? "trojaned" : "clean"}});
    return j.dump(2);
}

}  // namespace trodo
