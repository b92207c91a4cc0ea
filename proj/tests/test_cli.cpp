// Exercises the installed binary end to end; the executable path arrives as
// the first command-line argument.
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "trodo/calibration.hpp"
#include "trodo/dataset.hpp"
#include "trodo/model_io.hpp"

using namespace trodo;
using nlohmann::json;

namespace {

std::string g_cli;

int run(const std::string& args, std::string* output = nullptr) {
    const std::string out_file = "cli_stdout.tmp";
    const int status = std::system((g_cli + " " + args + " > " + out_file + " 2>&1").c_str());
    if (output) {
        std::ifstream is(out_file);
        std::stringstream ss;
        ss << is.rdbuf();
        *output = ss.str();
    }
    std::remove(out_file.c_str());
#ifdef _WIN32
    return status;
#else
    return WEXITSTATUS(status);
#endif
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Fixture artifacts shared by the test cases.
struct Fixture {
    std::string model = "cli_model.trodomdl";
    std::string dataset = "cli_val.trododat";
    std::string calib_hi = "cli_calib_hi.json";  // huge tau: everything is clean
    std::string calib_lo = "cli_calib_lo.json";  // tiny tau: everything trips

    Fixture() {
        ModelBundle m = build_model({LayerSpec::flatten(), LayerSpec::dense(3 * 8 * 8, 16),
                                     LayerSpec::relu(), LayerSpec::dense(16, 4)},
                                    {3, 8, 8}, 4, 11);
        save_model(m, model);
        save_dataset(generate_synthetic_dataset(4, 3, 2, 8, 1).train, dataset);

        CalibrationResult cal;
        cal.epsilon = 0.5;
        cal.gamma = 0.6;
        cal.n_baseline = 8;
        cal.num_classes = 4;
        cal.null_fit.mu = 0.1;
        cal.null_fit.sigma = 0.05;
        cal.tau = 100.0;
        cal.save(calib_hi);
        cal.tau = 1e-12;
        cal.save(calib_lo);
    }
    ~Fixture() {
        for (const std::string& p : {model, dataset, calib_hi, calib_lo}) std::remove(p.c_str());
    }
};

json scan_report_without_timing(const std::string& path) {
    json j = json::parse(slurp(path));
    j.erase("timing");
    return j;
}

}  // namespace

TEST_CASE("selftest passes") {
    std::string out;
    CHECK(run("selftest", &out) == 0);
    CHECK(out.find("fail") == std::string::npos);
}

TEST_CASE("usage errors exit with 1") {
    CHECK(run("") == 1);
    CHECK(run("--bogus-flag") == 1);
    CHECK(run("scan") == 1);                       // missing required options
    CHECK(run("frobnicate") == 1);                 // unknown subcommand
    CHECK(run("--config does_not_exist.json selftest") == 1);
}

TEST_CASE("runtime errors exit with 2") {
    Fixture fx;
    CHECK(run("scan --model missing.trodomdl --calibration " + fx.calib_hi + " --samples " +
              fx.dataset) == 2);
    CHECK(run("scan --model " + fx.model + " --calibration missing.json --samples " +
              fx.dataset) == 2);
}

TEST_CASE("scan verdicts drive the exit code") {
    Fixture fx;
    std::string out;
    SUBCASE("clean model under a generous threshold") {
        CHECK(run("scan --model " + fx.model + " --calibration " + fx.calib_hi + " --samples " +
                      fx.dataset,
                  &out) == 0);
        CHECK(out.find("verdict=Clean") != std::string::npos);
    }
    SUBCASE("tiny threshold flags the same model") {
        CHECK(run("scan --model " + fx.model + " --calibration " + fx.calib_lo + " --samples " +
                      fx.dataset,
                  &out) == 3);
        CHECK(out.find("verdict=Trojaned") != std::string::npos);
    }
    SUBCASE("zero attack steps force a zero signature and a clean verdict") {
        CHECK(run("scan --steps 0 --model " + fx.model + " --calibration " + fx.calib_lo +
                      " --samples " + fx.dataset,
                  &out) == 0);
        CHECK(out.find("S=0") != std::string::npos);
    }
}

TEST_CASE("scan report json is written and well formed") {
    Fixture fx;
    const std::string report = "cli_report.json";
    CHECK(run("scan --model " + fx.model + " --calibration " + fx.calib_hi + " --samples " +
              fx.dataset + " --out " + report + " --report json") == 0);
    json j = json::parse(slurp(report));
    CHECK(j.at("report_version").get<int>() == 1);
    CHECK(j.at("verdict") == "clean");
    CHECK(j.at("epsilon").get<double>() == 0.5);  // calibrated radius filled in
    CHECK(j.contains("per_sample"));
    std::remove(report.c_str());
}

TEST_CASE("repeat scans are byte-identical apart from timing") {
    Fixture fx;
    const std::string a = "cli_rep_a.json", b = "cli_rep_b.json";
    const std::string cmd = "scan --seed 5 --model " + fx.model + " --calibration " + fx.calib_hi +
                            " --samples " + fx.dataset + " --out ";
    CHECK(run(cmd + a) == 0);
    CHECK(run(cmd + b) == 0);
    CHECK(scan_report_without_timing(a) == scan_report_without_timing(b));
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST_CASE("TRODO_SEED is an alias for --seed") {
    Fixture fx;
    const std::string a = "cli_seed_a.json", b = "cli_seed_b.json";
    CHECK(run("scan --seed 123 --model " + fx.model + " --calibration " + fx.calib_hi +
              " --samples " + fx.dataset + " --out " + a) == 0);
    const std::string env_cmd = "TRODO_SEED=123 " + g_cli + " scan --model " + fx.model +
                                " --calibration " + fx.calib_hi + " --samples " + fx.dataset +
                                " --out " + b + " > /dev/null 2>&1";
    CHECK(WEXITSTATUS(std::system(env_cmd.c_str())) == 0);
    CHECK(scan_report_without_timing(a) == scan_report_without_timing(b));
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST_CASE("config file values act as defaults and flags override them") {
    Fixture fx;
    const std::string cfg = "cli_cfg.json";
    {
        std::ofstream os(cfg);
        os << R"({"steps": 0, "seed": 9})";
    }
    std::string out;
    // steps=0 from the config: clean even under the tiny threshold
    CHECK(run("--config " + cfg + " scan --model " + fx.model + " --calibration " + fx.calib_lo +
                  " --samples " + fx.dataset,
              &out) == 0);
    CHECK(out.find("S=0") != std::string::npos);
    // the explicit flag wins over the config value
    CHECK(run("--config " + cfg + " scan --steps 10 --model " + fx.model + " --calibration " +
              fx.calib_lo + " --samples " + fx.dataset) == 3);
    std::remove(cfg.c_str());
}

TEST_CASE("calibrate writes a loadable result") {
    Fixture fx;
    const std::string out_json = "cli_calibration_out.json";
    std::string out;
    CHECK(run("calibrate --surrogate " + fx.model + " --val " + fx.dataset +
                  " --batch 6 --steps 5 --n-baseline 8 --gamma 0.6 --out " + out_json,
              &out) == 0);
    CalibrationResult cal = CalibrationResult::load(out_json);
    CHECK(cal.epsilon > 0.0);
    CHECK(cal.tau > 0.0);
    CHECK(cal.gamma == 0.6);
    CHECK(cal.n_baseline == 8);
    CHECK(cal.num_classes == 4);
    std::remove(out_json.c_str());
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-trodo-binary> [doctest args]\n");
        return 1;
    }
    g_cli = argv[1];
    doctest::Context ctx(argc - 1, argv + 1);
    return ctx.run();
}
