#include "trodo/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "trodo/rng.hpp"

namespace trodo {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

// Acklam's rational approximation for the standard normal quantile,
// refined with one Halley step against erfc.
double acklam_inverse(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= phigh) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

}  // namespace

double normal_inverse_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw NumericError("normal_inverse_cdf: p must lie in (0,1)");
    return acklam_inverse(p);
}

double NullFit::cdf(double x) const {
    if (std::isfinite(lower_trunc)) {
        if (x <= lower_trunc) return 0.0;
        const double fl = normal_cdf((lower_trunc - mu) / sigma);
        const double denom = 1.0 - fl;
        if (denom <= 0.0) return x >= lower_trunc ? 1.0 : 0.0;
        return (normal_cdf((x - mu) / sigma) - fl) / denom;
    }
    return normal_cdf((x - mu) / sigma);
}

double NullFit::inverse_cdf(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw NumericError("inverse_cdf: p must lie in (0,1)");
    if (std::isfinite(lower_trunc)) {
        const double fl = normal_cdf((lower_trunc - mu) / sigma);
        const double q = fl + p * (1.0 - fl);
        if (q >= 1.0) return lower_trunc;
        return mu + sigma * normal_inverse_cdf(q);
    }
    return mu + sigma * normal_inverse_cdf(p);
}

namespace {

using nlohmann::json;

double mean_id_score_after_attack(const ModelBundle& model, const OodBatch& ood, double epsilon,
                                  const CalibrateOptions& opts) {
    AttackConfig cfg;
    cfg.epsilon = epsilon;
    cfg.steps = opts.attack_steps;
    cfg.clip_to_unit_box = opts.clip_to_unit_box;
    cfg.l2_normalized_step = opts.l2_normalized_step;
    double sum = 0.0;
    for (const Tensor& x : ood.images)
        sum += id_score(model, pgd_increase_id_score(model, x, cfg));
    return sum / static_cast<double>(ood.size());
}

}  // namespace

double calibrate_epsilon(const ModelBundle& surrogate, const OodBatch& ood, double gamma,
                         const CalibrateOptions& opts) {
    const std::size_t c = surrogate.meta.num_classes;
    if (!(gamma > 1.0 / static_cast<double>(c) && gamma < 1.0))
        throw ConfigError("calibrate_epsilon: gamma must lie in (1/c, 1)");
    if (ood.size() == 0) throw ConfigError("calibrate_epsilon: empty OOD batch");

    const double d = static_cast<double>(Tensor::numel_of(surrogate.meta.input_shape));
    const double eps_max = opts.eps_max > 0.0 ? opts.eps_max : 10.0 * std::sqrt(d);

    if (mean_id_score_after_attack(surrogate, ood, opts.eps_min, opts) >= gamma)
        return opts.eps_min;
    if (mean_id_score_after_attack(surrogate, ood, eps_max, opts) < gamma)
        throw NumericError("gamma unreachable within epsilon bound " + std::to_string(eps_max));

    double lo = opts.eps_min, hi = eps_max;
    while ((hi - lo) > opts.rel_tol * hi) {
        const double mid = 0.5 * (lo + hi);
        if (mean_id_score_after_attack(surrogate, ood, mid, opts) >= gamma)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

NullFit fit_null_distribution(const ModelBundle& surrogate, const OodBatch& ood, double epsilon,
                              int n_baseline, std::uint64_t rng_seed,
                              const CalibrateOptions& opts) {
    if (n_baseline < 2) throw ConfigError("fit_null_distribution: n_baseline must be >= 2");
    if (ood.size() == 0) throw ConfigError("fit_null_distribution: empty OOD batch");

    AttackConfig cfg;
    cfg.epsilon = epsilon;
    cfg.steps = opts.attack_steps;
    cfg.clip_to_unit_box = opts.clip_to_unit_box;
    cfg.l2_normalized_step = opts.l2_normalized_step;

    std::vector<double> deltas(ood.size());
    for (std::size_t i = 0; i < ood.size(); ++i) {
        const double before = id_score(surrogate, ood.images[i]);
        const double after = id_score(surrogate, pgd_increase_id_score(surrogate, ood.images[i], cfg));
        deltas[i] = after - before;
    }

    const std::size_t n = static_cast<std::size_t>(n_baseline);
    Rng rng(rng_seed);
    std::vector<double> z(n);
    if (ood.size() >= n) {
        // disjoint partition of a shuffled index list
        std::vector<std::size_t> order(ood.size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        const std::size_t per = ood.size() / n;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < per; ++j) s += deltas[order[i * per + j]];
            s /= static_cast<double>(per);
            z[i] = -std::log(1.0 - std::min(s, 1.0 - 1e-9));
        }
    } else {
        // bootstrap resampling with the recorded seed
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < ood.size(); ++j)
                s += deltas[rng.uniform_index(ood.size())];
            s /= static_cast<double>(ood.size());
            z[i] = -std::log(1.0 - std::min(s, 1.0 - 1e-9));
        }
    }

    NullFit fit;
    fit.lower_trunc = 0.0;
    fit.samples = z;
    double mu = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : z) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n - 1);
    fit.mu = mu;
    fit.sigma = std::sqrt(var);
    if (fit.sigma < 1e-6) {
        fit.sigma = 1e-6;
        fit.degenerate = true;
    }
    return fit;
}

double compute_threshold(const NullFit& fit, int n_baseline, double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ConfigError("compute_threshold: confidence must lie in (0,1)");
    if (n_baseline < 1) throw ConfigError("compute_threshold: n_baseline must be >= 1");
    const double p = std::pow(confidence, 1.0 / static_cast<double>(n_baseline));
    return fit.inverse_cdf(p);
}

CalibrationResult calibrate(const ModelBundle& surrogate, const OodBatch& ood, double gamma,
                            int n_baseline, double confidence, std::uint64_t seed,
                            const CalibrateOptions& opts) {
    CalibrationResult r;
    r.gamma = gamma;
    r.n_baseline = n_baseline;
    r.confidence = confidence;
    r.seed = seed;
    r.num_classes = surrogate.meta.num_classes;
    r.epsilon = calibrate_epsilon(surrogate, ood, gamma, opts);
    r.null_fit = fit_null_distribution(surrogate, ood, r.epsilon, n_baseline, seed, opts);
    r.tau = compute_threshold(r.null_fit, n_baseline, confidence);
    return r;
}

std::string CalibrationResult::to_json() const {
    json j;
    j["epsilon"] = epsilon;
    j["tau"] = tau;
    j["gamma"] = gamma;
    j["n_baseline"] = n_baseline;
    j["confidence"] = confidence;
    j["seed"] = seed;
    j["num_classes"] = num_classes;
    j["null_fit"] = {{"mu", null_fit.mu},
                     {"sigma", null_fit.sigma},
                     {"lower_trunc", std::isfinite(null_fit.lower_trunc)
                                         ? json(null_fit.lower_trunc)
                                         : json("-inf")},
                     {"degenerate", null_fit.degenerate},
                     {"samples", null_fit.samples}};
    return j.dump(2);
}

CalibrationResult CalibrationResult::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed calibration json: ") + e.what());
    }
    CalibrationResult r;
    try {
        r.epsilon = j.at("epsilon").get<double>();
        r.tau = j.at("tau").get<double>();
        r.gamma = j.at("gamma").get<double>();
        r.n_baseline = j.at("n_baseline").get<int>();
        r.confidence = j.at("confidence").get<double>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.num_classes = j.at("num_classes").get<std::size_t>();
        const json& nf = j.at("null_fit");
        r.null_fit.mu = nf.at("mu").get<double>();
        r.null_fit.sigma = nf.at("sigma").get<double>();
        r.null_fit.lower_trunc = nf.at("lower_trunc").is_string()
                                     ? -std::numeric_limits<double>::infinity()
                                     : nf.at("lower_trunc").get<double>();
        r.null_fit.degenerate = nf.at("degenerate").get<bool>();
        r.null_fit.samples = nf.at("samples").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed calibration json: ") + e.what());
    }
    if (r.null_fit.sigma <= 0.0 || r.epsilon <= 0.0 || r.n_baseline < 1)
        throw FormatError("calibration json violates invariants");
    return r;
}

void CalibrationResult::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << to_json() << "\n";
    if (!os) throw IoError("write failed for '" + path + "'");
}

CalibrationResult CalibrationResult::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json(text);
}

}  // namespace trodo
