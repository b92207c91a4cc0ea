#pragma once

#include "trodo/model.hpp"
#include "trodo/tensor.hpp"

namespace trodo {

// PGD configuration. The ID-Score attack projects onto an L2 ball, the
// cross-entropy attack onto an L-inf box; both take sign-gradient steps.
struct AttackConfig {
    double epsilon = 0.0;
    double alpha = 0.0;   // <= 0 selects the default 2.5 * epsilon / steps
    int steps = 10;
    bool clip_to_unit_box = true;
    // Opt-in variant replacing the sign step with an L2-normalized gradient
    // step in the ID-Score attack.
    bool l2_normalized_step = false;

    void validate() const {
        if (steps < 0) throw ConfigError("attack steps must be >= 0");
        if (epsilon < 0.0) throw ConfigError("attack epsilon must be >= 0");
    }
    double effective_alpha() const {
        if (alpha > 0.0) return alpha;
        return steps > 0 ? 2.5 * epsilon / static_cast<double>(steps) : 0.0;
    }
};

// Scales delta onto the L2 ball of radius epsilon if it lies outside.
Tensor project_l2(const Tensor& delta, double epsilon);

// Clamps every coordinate of delta to [-epsilon, epsilon].
Tensor project_linf(const Tensor& delta, double epsilon);

// Sign-gradient ascent on the ID-Score with per-step L2 projection around x.
// Returns the last iterate. ||x* - x||_2 <= epsilon; x* in [0,1] when
// clipping is enabled.
Tensor pgd_increase_id_score(const ModelBundle& model, const Tensor& x, const AttackConfig& cfg);

// Untargeted cross-entropy ascent with per-step L-inf projection; used for
// adversarial training. ||x* - x||_inf <= epsilon.
Tensor pgd_cross_entropy(const ModelBundle& model, const Tensor& x, std::size_t label,
                         const AttackConfig& cfg);

}  // namespace trodo
