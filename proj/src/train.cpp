#include "trodo/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trodo/rng.hpp"

namespace trodo {

std::vector<LayerSpec> mlp_arch(const std::vector<std::size_t>& input_shape,
                                std::size_t num_classes) {
    const std::size_t d = Tensor::numel_of(input_shape);
    return {LayerSpec::flatten(),        LayerSpec::dense(d, 256), LayerSpec::relu(),
            LayerSpec::dense(256, 128), LayerSpec::relu(),        LayerSpec::dense(128, num_classes)};
}

std::vector<LayerSpec> cnn_arch(const std::vector<std::size_t>& input_shape,
                                std::size_t num_classes) {
    // conv(3->16) - relu - pool - conv(16->32) - relu - pool - flatten - dense
    std::vector<LayerSpec> arch = {
        LayerSpec::conv2d(input_shape[0], 16, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
        LayerSpec::conv2d(16, 32, 3),             LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
        LayerSpec::flatten()};
    std::vector<std::size_t> shape = input_shape;
    for (const LayerSpec& l : arch) shape = layer_output_shape(l, shape);
    arch.push_back(LayerSpec::dense(shape[0], num_classes));
    return arch;
}

std::size_t predict(const ModelBundle& model, const Tensor& input) {
    Tensor z = evaluate_logits(model, input);
    std::size_t best = 0;
    for (std::size_t i = 1; i < z.numel(); ++i)
        if (z[i] > z[best]) best = i;
    return best;
}

double accuracy(const ModelBundle& model, const Dataset& ds) {
    if (ds.size() == 0) throw ConfigError("accuracy: empty dataset");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (predict(model, ds.images[i]) == ds.labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

double attack_success_rate(const ModelBundle& model, const Dataset& clean_test,
                           const TriggerSpec& trigger, const LabelMapping& mapping) {
    std::size_t hits = 0, total = 0;
    for (std::size_t i = 0; i < clean_test.size(); ++i) {
        // all-to-one: samples already in the target class say nothing
        if (mapping.kind == LabelMapping::Kind::AllToOne &&
            clean_test.labels[i] == mapping.target)
            continue;
        ++total;
        const std::size_t want = mapping.remap(clean_test.labels[i], clean_test.num_classes);
        if (predict(model, apply_trigger(clean_test.images[i], trigger)) == want) ++hits;
    }
    if (total == 0) throw ConfigError("attack_success_rate: no evaluable samples");
    return static_cast<double>(hits) / static_cast<double>(total);
}

namespace {

double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void snap_weights(ModelBundle& m) {
    for (auto& layer : m.weights)
        for (Tensor& t : layer)
            for (double& v : t.data) v = snap_f32(v);
}

struct LogitLoss {
    double loss = 0.0;
    Tensor logit_grad;
};

// -log p_y, plus the variant-1 uniform term on ID samples when lambda2 > 0.
LogitLoss ce_loss(const Tensor& logits, std::size_t label, std::size_t c, double lambda2) {
    LogitLoss out;
    Tensor p = softmax(logits);
    out.loss = -std::log(std::max(p[label], 1e-300));
    out.logit_grad = Tensor(logits.shape);
    for (std::size_t j = 0; j < c; ++j)
        out.logit_grad[j] = p[j] - (j == label ? 1.0 : 0.0);
    if (lambda2 != 0.0) {
        const double inv_c = 1.0 / static_cast<double>(c);
        double h = 0.0;
        for (std::size_t j = 0; j < c; ++j) h -= inv_c * std::log(std::max(p[j], 1e-300));
        out.loss += lambda2 * h;
        for (std::size_t j = 0; j < c; ++j) out.logit_grad[j] += lambda2 * (p[j] - inv_c);
    }
    return out;
}

ModelBundle train_impl(const Dataset& dataset, const std::vector<Tensor>* ood_images,
                       const std::vector<LayerSpec>& arch, const TrainConfig& cfg,
                       std::vector<double>* batch_losses) {
    cfg.validate();
    if (dataset.size() == 0) throw ConfigError("train: empty dataset");
    const std::size_t c = dataset.num_classes;

    ModelBundle model = build_model(arch, dataset.images[0].shape, c, cfg.seed);
    model.meta.training_mode = cfg.mode;

    GradStore velocity = GradStore::zeros_like(model);
    Rng shuffle_rng(cfg.seed);
    Rng ood_rng(cfg.seed ^ 0xa5a5a5a5deadbeefull);

    const bool adversarial = cfg.mode.kind == TrainingMode::Kind::Adversarial;
    const bool adaptive = cfg.mode.kind == TrainingMode::Kind::Adaptive;

    AttackConfig adv_cfg;
    if (adversarial) {
        adv_cfg.epsilon = cfg.mode.eps_linf;
        adv_cfg.steps = cfg.mode.pgd_steps;
    }

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate * 0.5 *
                          (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(epoch) /
                                          static_cast<double>(cfg.epochs)));
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv_b = 1.0 / static_cast<double>(end - start);
            GradStore grads = GradStore::zeros_like(model);
            double batch_loss = 0.0;

            for (std::size_t i = start; i < end; ++i) {
                const std::size_t idx = order[i];
                Tensor x = dataset.images[idx];
                if (adversarial) x = pgd_cross_entropy(model, x, dataset.labels[idx], adv_cfg);
                ForwardTrace trace = forward(model, x);
                LogitLoss ll = ce_loss(trace.logits(), dataset.labels[idx], c,
                                       adaptive && cfg.mode.variant == 1 ? cfg.mode.lambda2 : 0.0);
                batch_loss += ll.loss * inv_b;
                for (double& g : ll.logit_grad.data) g *= inv_b;
                backprop(model, trace, ll.logit_grad, &grads);
            }

            if (adaptive && ood_images && !ood_images->empty()) {
                const std::size_t nb = std::min<std::size_t>(cfg.batch_size, ood_images->size());
                const double inv_o = 1.0 / static_cast<double>(nb);
                for (std::size_t i = 0; i < nb; ++i) {
                    const Tensor& z = (*ood_images)[ood_rng.uniform_index(ood_images->size())];
                    if (cfg.mode.variant == 1) {
                        // - lambda1 * H(U; f(z))
                        ForwardTrace trace = forward(model, z);
                        Tensor p = softmax(trace.logits());
                        const double inv_c = 1.0 / static_cast<double>(c);
                        double h = 0.0;
                        for (std::size_t j = 0; j < c; ++j)
                            h -= inv_c * std::log(std::max(p[j], 1e-300));
                        batch_loss += -cfg.mode.lambda1 * h * inv_o;
                        Tensor lg(p.shape);
                        for (std::size_t j = 0; j < c; ++j)
                            lg[j] = -cfg.mode.lambda1 * (p[j] - inv_c) * inv_o;
                        backprop(model, trace, lg, &grads);
                    } else {
                        // - lambda3 * H(f(z); f(z*)), z* from the ID-Score PGD
                        Tensor zstar = pgd_increase_id_score(model, z, cfg.adaptive_attack);
                        ForwardTrace tr_z = forward(model, z);
                        ForwardTrace tr_s = forward(model, zstar);
                        Tensor p = softmax(tr_z.logits());
                        Tensor q = softmax(tr_s.logits());
                        double h = 0.0, plogq_sum = 0.0;
                        for (std::size_t j = 0; j < c; ++j) {
                            const double lq = std::log(std::max(q[j], 1e-300));
                            h -= p[j] * lq;
                            plogq_sum += p[j] * lq;
                        }
                        batch_loss += -cfg.mode.lambda3 * h * inv_o;
                        Tensor lg_z(p.shape), lg_s(q.shape);
                        for (std::size_t j = 0; j < c; ++j) {
                            const double lq = std::log(std::max(q[j], 1e-300));
                            lg_z[j] = -cfg.mode.lambda3 * (-p[j] * (lq - plogq_sum)) * inv_o;
                            lg_s[j] = -cfg.mode.lambda3 * (q[j] - p[j]) * inv_o;
                        }
                        backprop(model, tr_z, lg_z, &grads);
                        backprop(model, tr_s, lg_s, &grads);
                    }
                }
            }

            if (!std::isfinite(batch_loss))
                throw NumericError("training diverged (non-finite loss) at epoch " +
                                   std::to_string(epoch));
            if (batch_losses) batch_losses->push_back(batch_loss);

            for (std::size_t li = 0; li < velocity.grads.size(); ++li) {
                for (std::size_t wi = 0; wi < velocity.grads[li].size(); ++wi) {
                    Tensor& v = velocity.grads[li][wi];
                    Tensor& w = model.weights[li][wi];
                    const Tensor& g = grads.grads[li][wi];
                    for (std::size_t k = 0; k < v.numel(); ++k) {
                        v[k] = 0.9 * v[k] - lr * g[k];
                        w[k] += v[k];
                    }
                }
            }
        }
    }
    snap_weights(model);
    model.meta.seed = cfg.seed;
    return model;
}

}  // namespace

ModelBundle train_classifier(const Dataset& dataset, const std::vector<LayerSpec>& arch,
                             const TrainConfig& cfg, std::vector<double>* batch_losses) {
    if (cfg.mode.kind == TrainingMode::Kind::Adaptive)
        throw ConfigError("train_classifier: adaptive mode requires train_adaptive");
    return train_impl(dataset, nullptr, arch, cfg, batch_losses);
}

ModelBundle train_adaptive(const Dataset& dataset, const std::vector<Tensor>& ood_images,
                           const std::vector<LayerSpec>& arch, const TrainConfig& cfg,
                           std::vector<double>* batch_losses) {
    if (cfg.mode.kind != TrainingMode::Kind::Adaptive)
        throw ConfigError("train_adaptive: config mode must be adaptive");
    if (cfg.mode.variant != 1 && cfg.mode.variant != 2)
        throw ConfigError("train_adaptive: variant must be 1 or 2");
    return train_impl(dataset, &ood_images, arch, cfg, batch_losses);
}

}  // namespace trodo
