#include "trodo/model.hpp"

#include <algorithm>
#include <cmath>

#include "trodo/rng.hpp"

namespace trodo {

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::ReLU: return "relu";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in = in;
    s.out = out;
    return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                            std::size_t stride, std::size_t padding) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    return s;
}

LayerSpec LayerSpec::maxpool2d(std::size_t kernel, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool2d;
    s.kernel = kernel;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

std::vector<std::size_t> layer_output_shape(const LayerSpec& layer,
                                            const std::vector<std::size_t>& in_shape) {
    switch (layer.kind) {
        case LayerKind::Dense: {
            if (Tensor::numel_of(in_shape) != layer.in)
                throw ShapeError("dense layer expects " + std::to_string(layer.in) +
                                 " inputs, got " + std::to_string(Tensor::numel_of(in_shape)));
            return {layer.out};
        }
        case LayerKind::Conv2d: {
            if (in_shape.size() != 3 || in_shape[0] != layer.in_ch)
                throw ShapeError("conv2d layer expects CxHxW input with " +
                                 std::to_string(layer.in_ch) + " channels");
            std::size_t h = in_shape[1] + 2 * layer.padding;
            std::size_t w = in_shape[2] + 2 * layer.padding;
            if (h < layer.kernel || w < layer.kernel)
                throw ShapeError("conv2d kernel larger than padded input");
            return {layer.out_ch, (h - layer.kernel) / layer.stride + 1,
                    (w - layer.kernel) / layer.stride + 1};
        }
        case LayerKind::ReLU:
            return in_shape;
        case LayerKind::MaxPool2d: {
            if (in_shape.size() != 3)
                throw ShapeError("maxpool2d expects CxHxW input");
            if (in_shape[1] < layer.kernel || in_shape[2] < layer.kernel)
                throw ShapeError("maxpool2d kernel larger than input");
            return {in_shape[0], (in_shape[1] - layer.kernel) / layer.stride + 1,
                    (in_shape[2] - layer.kernel) / layer.stride + 1};
        }
        case LayerKind::Flatten:
            return {Tensor::numel_of(in_shape)};
    }
    throw ShapeError("unknown layer kind");
}

void ModelBundle::validate() const {
    if (weights.size() != spec.size())
        throw ShapeError("weight table length does not match layer count");
    std::vector<std::size_t> shape = meta.input_shape;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const LayerSpec& l = spec[i];
        try {
            shape = layer_output_shape(l, shape);
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) +
                             "): " + e.what());
        }
        if (l.kind == LayerKind::Dense) {
            if (weights[i].size() != 2 || weights[i][0].shape != std::vector<std::size_t>{l.out, l.in} ||
                weights[i][1].shape != std::vector<std::size_t>{l.out})
                throw ShapeError("layer " + std::to_string(i) + " (dense): bad weight shapes");
        } else if (l.kind == LayerKind::Conv2d) {
            std::vector<std::size_t> ws{l.out_ch, l.in_ch, l.kernel, l.kernel};
            if (weights[i].size() != 2 || weights[i][0].shape != ws ||
                weights[i][1].shape != std::vector<std::size_t>{l.out_ch})
                throw ShapeError("layer " + std::to_string(i) + " (conv2d): bad weight shapes");
        } else if (!weights[i].empty()) {
            throw ShapeError("layer " + std::to_string(i) + " carries unexpected weights");
        }
    }
    if (shape != std::vector<std::size_t>{meta.num_classes})
        throw ShapeError("final layer output does not match num_classes");
}

namespace {

double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

ModelBundle build_model(std::vector<LayerSpec> spec, std::vector<std::size_t> input_shape,
                        std::size_t num_classes, std::uint64_t seed) {
    ModelBundle m;
    m.spec = std::move(spec);
    m.meta.input_shape = std::move(input_shape);
    m.meta.num_classes = num_classes;
    m.meta.seed = seed;
    Rng rng(seed);
    for (const LayerSpec& l : m.spec) {
        std::vector<Tensor> w;
        if (l.kind == LayerKind::Dense) {
            Tensor weight({l.out, l.in});
            double bound = std::sqrt(6.0 / static_cast<double>(l.in));
            for (double& v : weight.data) v = snap_f32(rng.uniform(-bound, bound));
            w.push_back(std::move(weight));
            w.emplace_back(std::vector<std::size_t>{l.out});
        } else if (l.kind == LayerKind::Conv2d) {
            Tensor weight({l.out_ch, l.in_ch, l.kernel, l.kernel});
            double fan_in = static_cast<double>(l.in_ch * l.kernel * l.kernel);
            double bound = std::sqrt(6.0 / fan_in);
            for (double& v : weight.data) v = snap_f32(rng.uniform(-bound, bound));
            w.push_back(std::move(weight));
            w.emplace_back(std::vector<std::size_t>{l.out_ch});
        }
        m.weights.push_back(std::move(w));
    }
    m.validate();
    return m;
}

namespace {

Tensor dense_forward(const LayerSpec& l, const std::vector<Tensor>& w, const Tensor& x) {
    Tensor out({l.out});
    const double* W = w[0].data.data();
    for (std::size_t o = 0; o < l.out; ++o) {
        double acc = w[1][o];
        const double* row = W + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * x[i];
        out[o] = acc;
    }
    return out;
}

Tensor conv_forward(const LayerSpec& l, const std::vector<Tensor>& w, const Tensor& x) {
    auto out_shape = layer_output_shape(l, x.shape);
    Tensor out(out_shape);
    const std::size_t H = x.shape[1], W = x.shape[2];
    const std::size_t OH = out_shape[1], OW = out_shape[2];
    const std::size_t K = l.kernel;
    const long P = static_cast<long>(l.padding);
    for (std::size_t oc = 0; oc < l.out_ch; ++oc) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                double acc = w[1][oc];
                for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
                    for (std::size_t ky = 0; ky < K; ++ky) {
                        long iy = static_cast<long>(oy * l.stride + ky) - P;
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (std::size_t kx = 0; kx < K; ++kx) {
                            long ix = static_cast<long>(ox * l.stride + kx) - P;
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            acc += w[0].data[((oc * l.in_ch + ic) * K + ky) * K + kx] *
                                   x.at(ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                        }
                    }
                }
                out.at(oc, oy, ox) = acc;
            }
        }
    }
    return out;
}

Tensor maxpool_forward(const LayerSpec& l, const Tensor& x) {
    auto out_shape = layer_output_shape(l, x.shape);
    Tensor out(out_shape);
    for (std::size_t c = 0; c < out_shape[0]; ++c) {
        for (std::size_t oy = 0; oy < out_shape[1]; ++oy) {
            for (std::size_t ox = 0; ox < out_shape[2]; ++ox) {
                double best = -1e300;
                for (std::size_t ky = 0; ky < l.kernel; ++ky) {
                    for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                        best = std::max(best, x.at(c, oy * l.stride + ky, ox * l.stride + kx));
                    }
                }
                out.at(c, oy, ox) = best;
            }
        }
    }
    return out;
}

}  // namespace

ForwardTrace forward(const ModelBundle& model, const Tensor& input) {
    if (input.shape != model.meta.input_shape)
        throw ShapeError("input shape does not match model input spec");
    ForwardTrace trace;
    trace.activations.reserve(model.spec.size() + 1);
    trace.activations.push_back(input);
    for (std::size_t i = 0; i < model.spec.size(); ++i) {
        const LayerSpec& l = model.spec[i];
        const Tensor& x = trace.activations.back();
        Tensor y;
        switch (l.kind) {
            case LayerKind::Dense:
                if (x.numel() != l.in)
                    throw ShapeError("layer " + std::to_string(i) + " (dense): input size mismatch");
                y = dense_forward(l, model.weights[i], x);
                break;
            case LayerKind::Conv2d:
                y = conv_forward(l, model.weights[i], x);
                break;
            case LayerKind::ReLU:
                y = x;
                for (double& v : y.data) v = std::max(0.0, v);
                break;
            case LayerKind::MaxPool2d:
                y = maxpool_forward(l, x);
                break;
            case LayerKind::Flatten:
                y = Tensor({x.numel()}, x.data);
                break;
        }
        trace.activations.push_back(std::move(y));
    }
    return trace;
}

Tensor evaluate_logits(const ModelBundle& model, const Tensor& input) {
    return forward(model, input).logits();
}

Tensor softmax(const Tensor& logits) {
    Tensor out(logits.shape);
    double m = -1e300;
    for (double v : logits.data) m = std::max(m, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.numel(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& v : out.data) v /= sum;
    return out;
}

double id_score_from_logits(const Tensor& logits) {
    Tensor p = softmax(logits);
    double best = 0.0;
    for (double v : p.data) best = std::max(best, v);
    return best;
}

double id_score(const ModelBundle& model, const Tensor& input) {
    return id_score_from_logits(evaluate_logits(model, input));
}

Tensor objective_logit_gradient(const Objective& obj, const Tensor& logits,
                                std::size_t num_classes) {
    Tensor p = softmax(logits);
    Tensor g(logits.shape);
    if (obj.kind == Objective::Kind::IdScore) {
        // d p_m / d z_j = p_m (1{m=j} - p_j), m = argmax p (first index wins).
        std::size_t m = 0;
        for (std::size_t i = 1; i < p.numel(); ++i)
            if (p[i] > p[m]) m = i;
        for (std::size_t j = 0; j < p.numel(); ++j)
            g[j] = p[m] * ((j == m ? 1.0 : 0.0) - p[j]);
    } else {
        if (obj.label >= num_classes)
            throw ConfigError("cross-entropy label " + std::to_string(obj.label) +
                              " out of range for " + std::to_string(num_classes) + " classes");
        for (std::size_t j = 0; j < p.numel(); ++j)
            g[j] = p[j] - (j == obj.label ? 1.0 : 0.0);
    }
    return g;
}

GradStore GradStore::zeros_like(const ModelBundle& model) {
    GradStore gs;
    gs.grads.resize(model.weights.size());
    for (std::size_t i = 0; i < model.weights.size(); ++i)
        for (const Tensor& t : model.weights[i])
            gs.grads[i].emplace_back(t.shape);
    return gs;
}

void GradStore::accumulate(const GradStore& other, double s) {
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t j = 0; j < grads[i].size(); ++j)
            for (std::size_t k = 0; k < grads[i][j].numel(); ++k)
                grads[i][j][k] += s * other.grads[i][j][k];
}

void GradStore::scale(double s) {
    for (auto& layer : grads)
        for (Tensor& t : layer)
            for (double& v : t.data) v *= s;
}

namespace {

Tensor dense_backward(const LayerSpec& l, const std::vector<Tensor>& w, const Tensor& x,
                      const Tensor& dy, std::vector<Tensor>* pg) {
    Tensor dx(x.shape);
    const double* W = w[0].data.data();
    for (std::size_t o = 0; o < l.out; ++o) {
        const double* row = W + o * l.in;
        double g = dy[o];
        for (std::size_t i = 0; i < l.in; ++i) dx[i] += row[i] * g;
    }
    if (pg) {
        Tensor& dW = (*pg)[0];
        Tensor& db = (*pg)[1];
        for (std::size_t o = 0; o < l.out; ++o) {
            double g = dy[o];
            db[o] += g;
            double* drow = dW.data.data() + o * l.in;
            for (std::size_t i = 0; i < l.in; ++i) drow[i] += g * x[i];
        }
    }
    return dx;
}

Tensor conv_backward(const LayerSpec& l, const std::vector<Tensor>& w, const Tensor& x,
                     const Tensor& dy, std::vector<Tensor>* pg) {
    Tensor dx(x.shape);
    const std::size_t H = x.shape[1], W = x.shape[2];
    const std::size_t OH = dy.shape[1], OW = dy.shape[2];
    const std::size_t K = l.kernel;
    const long P = static_cast<long>(l.padding);
    for (std::size_t oc = 0; oc < l.out_ch; ++oc) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                double g = dy.at(oc, oy, ox);
                if (pg) (*pg)[1][oc] += g;
                for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
                    for (std::size_t ky = 0; ky < K; ++ky) {
                        long iy = static_cast<long>(oy * l.stride + ky) - P;
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (std::size_t kx = 0; kx < K; ++kx) {
                            long ix = static_cast<long>(ox * l.stride + kx) - P;
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            std::size_t widx = ((oc * l.in_ch + ic) * K + ky) * K + kx;
                            dx.at(ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                                w[0].data[widx] * g;
                            if (pg)
                                (*pg)[0].data[widx] +=
                                    g * x.at(ic, static_cast<std::size_t>(iy),
                                             static_cast<std::size_t>(ix));
                        }
                    }
                }
            }
        }
    }
    return dx;
}

Tensor maxpool_backward(const LayerSpec& l, const Tensor& x, const Tensor& y, const Tensor& dy) {
    Tensor dx(x.shape);
    for (std::size_t c = 0; c < y.shape[0]; ++c) {
        for (std::size_t oy = 0; oy < y.shape[1]; ++oy) {
            for (std::size_t ox = 0; ox < y.shape[2]; ++ox) {
                double best = y.at(c, oy, ox);
                // route to the first row-major argmax
                bool done = false;
                for (std::size_t ky = 0; ky < l.kernel && !done; ++ky) {
                    for (std::size_t kx = 0; kx < l.kernel && !done; ++kx) {
                        if (x.at(c, oy * l.stride + ky, ox * l.stride + kx) == best) {
                            dx.at(c, oy * l.stride + ky, ox * l.stride + kx) += dy.at(c, oy, ox);
                            done = true;
                        }
                    }
                }
            }
        }
    }
    return dx;
}

}  // namespace

Tensor backprop(const ModelBundle& model, const ForwardTrace& trace, const Tensor& logit_grad,
                GradStore* param_grads) {
    Tensor grad = logit_grad;
    for (std::size_t ri = model.spec.size(); ri-- > 0;) {
        const LayerSpec& l = model.spec[ri];
        const Tensor& x = trace.activations[ri];
        const Tensor& y = trace.activations[ri + 1];
        std::vector<Tensor>* pg = param_grads ? &param_grads->grads[ri] : nullptr;
        switch (l.kind) {
            case LayerKind::Dense:
                grad = dense_backward(l, model.weights[ri], x, grad, pg);
                break;
            case LayerKind::Conv2d:
                grad = conv_backward(l, model.weights[ri], x, grad, pg);
                break;
            case LayerKind::ReLU: {
                Tensor dx(x.shape);
                for (std::size_t i = 0; i < x.numel(); ++i)
                    dx[i] = x[i] > 0.0 ? grad[i] : 0.0;
                grad = std::move(dx);
                break;
            }
            case LayerKind::MaxPool2d:
                grad = maxpool_backward(l, x, y, grad);
                break;
            case LayerKind::Flatten:
                grad = Tensor(x.shape, grad.data);
                break;
        }
    }
    return grad;
}

Tensor input_gradient(const ModelBundle& model, const Tensor& input, const Objective& obj) {
    ForwardTrace trace = forward(model, input);
    Tensor lg = objective_logit_gradient(obj, trace.logits(), model.meta.num_classes);
    return backprop(model, trace, lg);
}

}  // namespace trodo
