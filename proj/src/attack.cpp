#include "trodo/attack.hpp"

#include <cmath>

namespace trodo {

Tensor project_l2(const Tensor& delta, double epsilon) {
    if (epsilon < 0.0) throw ConfigError("project_l2: epsilon must be >= 0");
    const double norm = delta.l2_norm();
    if (norm <= epsilon) return delta;
    Tensor out(delta.shape);
    if (epsilon == 0.0 || norm == 0.0) return out;
    const double scale = epsilon / norm;
    for (std::size_t i = 0; i < delta.numel(); ++i) out[i] = delta[i] * scale;
    return out;
}

Tensor project_linf(const Tensor& delta, double epsilon) {
    if (epsilon < 0.0) throw ConfigError("project_linf: epsilon must be >= 0");
    Tensor out = delta;
    out.clip(-epsilon, epsilon);
    return out;
}

namespace {

// Shared PGD loop. Steps use sign (or normalized) gradient ascent; the
// perturbation is re-projected after every step, then the iterate is clipped
// to the unit pixel box. Box clipping moves coordinates toward x, so it never
// grows either norm.
template <typename GradFn, typename ProjFn>
Tensor pgd_loop(const Tensor& x, const AttackConfig& cfg, GradFn grad_fn, ProjFn proj_fn) {
    cfg.validate();
    const double alpha = cfg.effective_alpha();
    Tensor iterate = x;
    for (int t = 0; t < cfg.steps; ++t) {
        Tensor g = grad_fn(iterate);
        if (cfg.l2_normalized_step) {
            const double norm = g.l2_norm();
            if (norm > 0.0)
                for (double& v : g.data) v /= norm;
        } else {
            for (double& v : g.data) v = (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        }
        Tensor delta(x.shape);
        for (std::size_t i = 0; i < x.numel(); ++i)
            delta[i] = iterate[i] + alpha * g[i] - x[i];
        delta = proj_fn(delta);
        for (std::size_t i = 0; i < x.numel(); ++i) iterate[i] = x[i] + delta[i];
        if (cfg.clip_to_unit_box) iterate.clip(0.0, 1.0);
    }
    return iterate;
}

}  // namespace

Tensor pgd_increase_id_score(const ModelBundle& model, const Tensor& x, const AttackConfig& cfg) {
    return pgd_loop(
        x, cfg,
        [&](const Tensor& xt) { return input_gradient(model, xt, Objective::id_score()); },
        [&](const Tensor& d) { return project_l2(d, cfg.epsilon); });
}

Tensor pgd_cross_entropy(const ModelBundle& model, const Tensor& x, std::size_t label,
                         const AttackConfig& cfg) {
    if (label >= model.meta.num_classes)
        throw ConfigError("pgd_cross_entropy: label out of range");
    return pgd_loop(
        x, cfg,
        [&](const Tensor& xt) {
            return input_gradient(model, xt, Objective::cross_entropy(label));
        },
        [&](const Tensor& d) { return project_linf(d, cfg.epsilon); });
}

}  // namespace trodo
