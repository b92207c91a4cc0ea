// trodo: trojan scanner for image classifiers, plus the desk-scale model-zoo
// benchmark used to validate it. Exit codes: 0 success / clean verdict,
// 3 trojaned verdict, 1 usage error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "trodo/calibration.hpp"
#include "trodo/model_io.hpp"
#include "trodo/risk.hpp"
#include "trodo/rng.hpp"
#include "trodo/scanner.hpp"
#include "trodo/zoo.hpp"

namespace {

using nlohmann::json;
using namespace trodo;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitTrojaned = 3;

// Pre-parse --config: JSON key/value pairs become defaults, explicit flags
// override them. Keys use the long option names without the leading dashes.
json load_config_file(int argc, char** argv) {
    for (int i = 1; i < argc - 1; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream is(argv[i + 1]);
            if (!is) throw ConfigError(std::string("cannot open config file '") + argv[i + 1] + "'");
            try {
                return json::parse(is);
            } catch (const json::exception& e) {
                throw ConfigError(std::string("malformed config file: ") + e.what());
            }
        }
    }
    return json::object();
}

template <typename T>
void from_config(const json& cfg, const std::string& key, T& var) {
    if (cfg.contains(key)) var = cfg.at(key).get<T>();
}

std::vector<Tensor> dataset_sources(const std::string& path, std::size_t limit,
                                    std::uint64_t seed) {
    Dataset ds = load_dataset(path);
    if (ds.images.empty()) throw ConfigError("dataset '" + path + "' holds no images");
    if (ds.images.size() <= limit) return ds.images;
    Rng rng(seed ^ 0x5bd1e995u);
    std::vector<std::size_t> order(ds.images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<Tensor> out;
    out.reserve(limit);
    for (std::size_t i = 0; i < limit; ++i) out.push_back(ds.images[order[i]]);
    return out;
}

int cmd_calibrate(const std::string& surrogate_path, const std::string& val_path, double gamma,
                  int n_baseline, double confidence, std::size_t batch, std::uint64_t seed,
                  int steps, const std::string& out) {
    ModelBundle surrogate = load_model(surrogate_path);
    std::vector<Tensor> sources = dataset_sources(val_path, batch, seed);
    OodBatch ood = craft_ood_set(sources, default_transforms(), 3, seed);
    CalibrateOptions opts;
    opts.attack_steps = steps;
    CalibrationResult result = calibrate(surrogate, ood, gamma, n_baseline, confidence, seed, opts);
    atomic_write_text(out, result.to_json() + "\n");
    std::cout << "calibrated: epsilon=" << result.epsilon << " tau=" << result.tau << " -> " << out
              << "\n";
    return kExitOk;
}

int cmd_scan(const std::string& model_path, const std::string& calib_path,
             const std::string& samples_path, const std::string& mode, int steps, double epsilon,
             std::uint64_t seed, std::size_t batch, const std::string& out,
             const std::string& report_fmt) {
    ModelBundle model = load_model(model_path);
    ScanConfig cfg;
    cfg.mode = mode == "trodo-zero" ? ScanMode::TrodoZero : ScanMode::Trodo;
    cfg.calibration = CalibrationResult::load(calib_path);
    cfg.attack.steps = steps;
    cfg.attack.epsilon = epsilon;  // 0 defers to the calibrated radius
    cfg.batch_size = batch;
    cfg.seed = seed;
    std::vector<Tensor> sources = dataset_sources(samples_path, cfg.batch_size, seed);
    ScanReport report = scan(model, sources, cfg);
    if (!out.empty()) atomic_write_text(out, report.to_json() + "\n");
    const char* verdict = report.verdict == Verdict::Trojaned ? "Trojaned" : "Clean";
    if (report_fmt == "json") {
        std::cout << report.to_json() << "\n";
    } else {
        std::cout << "verdict=" << verdict << " S=" << report.signature
                  << " z=" << report.z_statistic << " tau=" << report.tau
                  << " epsilon=" << report.epsilon << "\n";
    }
    return report.verdict == Verdict::Trojaned ? kExitTrojaned : kExitOk;
}

int cmd_zoo_build(ZooBuildConfig cfg, const std::string& mode) {
    if (mode == "adversarial") {
        cfg.train.mode.kind = TrainingMode::Kind::Adversarial;
    } else if (mode != "standard") {
        throw ConfigError("zoo build: training mode must be standard or adversarial");
    }
    ZooManifest manifest = build_zoo(cfg);
    std::size_t admitted = 0;
    for (const ZooEntry& e : manifest.models)
        if (e.admitted) ++admitted;
    std::cout << "zoo built: " << manifest.models.size() << " models (" << admitted
              << " admitted) under " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_zoo_eval(const std::string& manifest_path, const std::string& calib_path,
                 const std::string& mode, const std::string& val_path, std::uint64_t seed,
                 int steps, int jobs, const std::string& out) {
    ZooManifest manifest = ZooManifest::load(manifest_path);
    ScanConfig cfg;
    cfg.mode = mode == "trodo-zero" ? ScanMode::TrodoZero : ScanMode::Trodo;
    cfg.calibration = CalibrationResult::load(calib_path);
    cfg.attack.steps = steps;
    cfg.seed = seed;
    const std::string source_path =
        cfg.mode == ScanMode::TrodoZero ? val_path : manifest.dataset_path;
    if (source_path.empty())
        throw ConfigError("zoo eval: trodo-zero mode requires --val");
    std::vector<Tensor> sources = dataset_sources(source_path, cfg.batch_size, seed);
    ZooEvalResult result = evaluate_zoo(manifest, sources, cfg, jobs);

    json echo;
    echo["manifest"] = manifest_path;
    echo["calibration"] = calib_path;
    echo["mode"] = mode;
    echo["seed"] = seed;
    echo["steps"] = steps;
    json doc = json::parse(result.to_json());
    doc["config"] = echo;
    if (!out.empty()) atomic_write_text(out, doc.dump(2) + "\n");
    std::cout << "zoo accuracy: " << result.accuracy << " (" << result.scanned << " models)\n";
    for (const auto& [id, acc] : result.per_attack_accuracy)
        std::cout << "  " << id << ": " << acc << "\n";
    std::cout << "mean S clean=" << result.mean_signature_clean
              << " trojaned=" << result.mean_signature_trojaned << "\n";
    return kExitOk;
}

int cmd_selftest() {
    int failures = 0;
    auto check = [&](bool ok, const std::string& name) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
        if (!ok) ++failures;
    };

    {
        Rng rng(1);
        bool ok = true;
        for (int trial = 0; trial < 200 && ok; ++trial) {
            Tensor z({10});
            for (double& v : z.data) v = rng.uniform(-30.0, 30.0);
            Tensor p = softmax(z);
            double sum = 0.0;
            for (double v : p.data) sum += v;
            ok = std::fabs(sum - 1.0) < 1e-9 && id_score_from_logits(z) >= 0.1;
        }
        check(ok, "softmax normalization and id-score bound");
    }
    {
        ModelBundle m = build_model(mlp_arch({3, 8, 8}, 4), {3, 8, 8}, 4, 42);
        Rng rng(7);
        Tensor x({3, 8, 8});
        for (double& v : x.data) v = rng.uniform();
        Tensor g = input_gradient(m, x, Objective::id_score());
        bool ok = true;
        const double h = 1e-5;
        for (int k = 0; k < 20 && ok; ++k) {
            std::size_t i = rng.uniform_index(x.numel());
            Tensor xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            double fd = (id_score(m, xp) - id_score(m, xm)) / (2 * h);
            double denom = std::max(1e-8, std::max(std::fabs(fd), std::fabs(g[i])));
            ok = std::fabs(fd - g[i]) / denom < 1e-4 || std::fabs(fd - g[i]) < 1e-10;
        }
        check(ok, "input gradient matches finite differences");
    }
    {
        Rng rng(3);
        bool ok = true;
        for (int trial = 0; trial < 100 && ok; ++trial) {
            Tensor d({16});
            for (double& v : d.data) v = rng.normal(0.0, 2.0);
            double eps = rng.uniform(0.0, 3.0);
            ok = project_l2(d, eps).l2_norm() <= eps + 1e-9;
        }
        check(ok, "l2 projection invariant");
    }
    {
        NullFit fit;
        fit.lower_trunc = -std::numeric_limits<double>::infinity();
        double tau = compute_threshold(fit, 50, 0.95);
        check(std::fabs(tau - 3.08279) < 1e-3, "threshold against standard normal reference");
    }
    return failures == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TRODO trojan scanner and desk-scale benchmark"};
    app.require_subcommand(1);
    app.fallthrough();  // global options (--seed, --config) may follow the subcommand

    json cfgfile;
    try {
        cfgfile = load_config_file(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; flags override its values");

    std::uint64_t seed = 0;
    from_config(cfgfile, "seed", seed);
    app.add_option("--seed", seed, "global seed")->envname("TRODO_SEED");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "fit epsilon and tau from a clean surrogate");
    std::string cal_surrogate, cal_val, cal_out = "calibration.json";
    double cal_gamma = 0.5, cal_confidence = 0.95;
    int cal_n = 50, cal_steps = 10;
    std::size_t cal_batch = 200;
    from_config(cfgfile, "surrogate", cal_surrogate);
    from_config(cfgfile, "val", cal_val);
    from_config(cfgfile, "gamma", cal_gamma);
    from_config(cfgfile, "steps", cal_steps);
    from_config(cfgfile, "out", cal_out);
    cal->add_option("--surrogate", cal_surrogate, "clean surrogate model")->required();
    cal->add_option("--val", cal_val, "validation dataset (.trododat)")->required();
    cal->add_option("--gamma", cal_gamma, "boundary confidence level");
    cal->add_option("--n-baseline", cal_n, "baseline score count N");
    cal->add_option("--confidence", cal_confidence, "threshold confidence");
    cal->add_option("--batch", cal_batch, "OOD batch size used for calibration");
    cal->add_option("--steps", cal_steps, "PGD steps");
    cal->add_option("--out", cal_out, "output calibration JSON");

    // scan
    auto* sc = app.add_subcommand("scan", "scan one model for a trojan");
    std::string sc_model, sc_calib, sc_samples, sc_mode = "trodo", sc_out, sc_report = "text";
    int sc_steps = 10;
    double sc_epsilon = 0.0;
    std::size_t sc_batch = 64;
    from_config(cfgfile, "model", sc_model);
    from_config(cfgfile, "calibration", sc_calib);
    from_config(cfgfile, "samples", sc_samples);
    from_config(cfgfile, "mode", sc_mode);
    from_config(cfgfile, "steps", sc_steps);
    from_config(cfgfile, "epsilon", sc_epsilon);
    sc->add_option("--model", sc_model, "model to scan")->required();
    sc->add_option("--calibration", sc_calib, "calibration JSON")->required();
    sc->add_option("--samples", sc_samples,
                   "benign samples (trodo) or validation set (trodo-zero), .trododat")
        ->required();
    sc->add_option("--mode", sc_mode, "trodo | trodo-zero")
        ->check(CLI::IsMember({"trodo", "trodo-zero"}));
    sc->add_option("--steps", sc_steps, "PGD steps override");
    sc->add_option("--epsilon", sc_epsilon, "attack radius override (0 = calibrated)");
    sc->add_option("--batch", sc_batch, "OOD batch size");
    sc->add_option("--out", sc_out, "write ScanReport JSON here");
    sc->add_option("--report", sc_report, "json | text")
        ->check(CLI::IsMember({"json", "text"}));

    // zoo build / eval
    auto* zoo = app.add_subcommand("zoo", "model zoo benchmark");
    zoo->require_subcommand(1);
    auto* zb = zoo->add_subcommand("build", "train the clean/trojaned zoo");
    ZooBuildConfig zb_cfg;
    std::string zb_mode = "standard";
    zb_cfg.train.epochs = 30;
    from_config(cfgfile, "out", zb_cfg.out_dir);
    from_config(cfgfile, "epochs", zb_cfg.train.epochs);
    from_config(cfgfile, "arch", zb_cfg.arch);
    zb->add_option("--out", zb_cfg.out_dir, "output directory")->required();
    zb->add_option("--classes", zb_cfg.num_classes, "number of classes");
    zb->add_option("--train-per-class", zb_cfg.train_per_class, "training samples per class");
    zb->add_option("--test-per-class", zb_cfg.test_per_class, "test samples per class");
    zb->add_option("--image-size", zb_cfg.image_size, "image side length");
    zb->add_option("--clean", zb_cfg.num_clean, "clean model count");
    zb->add_option("--per-cell", zb_cfg.trojaned_per_cell,
                   "trojaned models per (trigger, mapping) cell");
    zb->add_option("--rate", zb_cfg.poison_rate, "poisoning rate");
    zb->add_option("--arch", zb_cfg.arch, "mlp | cnn")->check(CLI::IsMember({"mlp", "cnn"}));
    zb->add_option("--epochs", zb_cfg.train.epochs, "training epochs");
    zb->add_option("--lr", zb_cfg.train.learning_rate, "learning rate");
    zb->add_option("--batch-size", zb_cfg.train.batch_size, "minibatch size");
    zb->add_option("--train-mode", zb_mode, "standard | adversarial")
        ->check(CLI::IsMember({"standard", "adversarial"}));
    zb->add_option("--jobs", zb_cfg.jobs, "parallel training workers");

    auto* ze = zoo->add_subcommand("eval", "scan a zoo against ground truth");
    std::string ze_manifest, ze_calib, ze_mode = "trodo", ze_val, ze_out;
    int ze_steps = 10, ze_jobs = 1;
    from_config(cfgfile, "manifest", ze_manifest);
    from_config(cfgfile, "calibration", ze_calib);
    ze->add_option("--manifest", ze_manifest, "zoo manifest JSON")->required();
    ze->add_option("--calibration", ze_calib, "calibration JSON")->required();
    ze->add_option("--mode", ze_mode, "trodo | trodo-zero")
        ->check(CLI::IsMember({"trodo", "trodo-zero"}));
    ze->add_option("--val", ze_val, "validation dataset for trodo-zero mode");
    ze->add_option("--steps", ze_steps, "PGD steps");
    ze->add_option("--jobs", ze_jobs, "parallel scan workers");
    ze->add_option("--out", ze_out, "write evaluation JSON here");

    auto* st = app.add_subcommand("selftest", "run the built-in invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (cal->parsed())
            return cmd_calibrate(cal_surrogate, cal_val, cal_gamma, cal_n, cal_confidence,
                                 cal_batch, seed, cal_steps, cal_out);
        if (sc->parsed())
            return cmd_scan(sc_model, sc_calib, sc_samples, sc_mode, sc_steps, sc_epsilon, seed,
                            sc_batch, sc_out, sc_report);
        if (zb->parsed()) {
            zb_cfg.seed = seed;
            return cmd_zoo_build(zb_cfg, zb_mode);
        }
        if (ze->parsed())
            return cmd_zoo_eval(ze_manifest, ze_calib, ze_mode, ze_val, seed, ze_steps, ze_jobs,
                                ze_out);
        if (st->parsed()) return cmd_selftest();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
