#include "trodo/risk.hpp"

#include <cmath>

namespace trodo {

double adversarial_risk_estimate(const ModelBundle& model, const Dataset& dataset, double alpha) {
    if (dataset.size() == 0) throw ConfigError("adversarial_risk_estimate: empty dataset");
    const std::size_t c = model.meta.num_classes;
    double sum = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        ForwardTrace trace = forward(model, dataset.images[i]);
        Tensor lg({c});
        lg[c == 1 ? 0 : dataset.labels[i]] = 1.0;  // raw logit, no softmax
        sum += backprop(model, trace, lg).l2_norm();
    }
    return alpha * sum / static_cast<double>(dataset.size());
}

ModelBundle fit_linear_least_squares(const RegressionSet& data, std::uint64_t seed) {
    if (data.inputs.empty() || data.inputs.size() != data.targets.size())
        throw ConfigError("fit_linear_least_squares: bad regression set");
    const std::size_t d = data.inputs[0].numel();
    const std::size_t m = d + 1;  // bias column

    // normal equations A w = b
    std::vector<double> A(m * m, 0.0), b(m, 0.0);
    for (std::size_t i = 0; i < data.inputs.size(); ++i) {
        const Tensor& x = data.inputs[i];
        auto feat = [&](std::size_t j) { return j < d ? x[j] : 1.0; };
        for (std::size_t r = 0; r < m; ++r) {
            b[r] += feat(r) * data.targets[i];
            for (std::size_t cidx = 0; cidx < m; ++cidx) A[r * m + cidx] += feat(r) * feat(cidx);
        }
    }

    // Gaussian elimination with partial pivoting
    std::vector<double> w(m, 0.0);
    for (std::size_t col = 0; col < m; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < m; ++r)
            if (std::fabs(A[r * m + col]) > std::fabs(A[piv * m + col])) piv = r;
        if (std::fabs(A[piv * m + col]) < 1e-12)
            throw NumericError("fit_linear_least_squares: singular normal equations");
        if (piv != col) {
            for (std::size_t cidx = 0; cidx < m; ++cidx)
                std::swap(A[piv * m + cidx], A[col * m + cidx]);
            std::swap(b[piv], b[col]);
        }
        for (std::size_t r = col + 1; r < m; ++r) {
            const double f = A[r * m + col] / A[col * m + col];
            for (std::size_t cidx = col; cidx < m; ++cidx) A[r * m + cidx] -= f * A[col * m + cidx];
            b[r] -= f * b[col];
        }
    }
    for (std::size_t col = m; col-- > 0;) {
        double acc = b[col];
        for (std::size_t cidx = col + 1; cidx < m; ++cidx) acc -= A[col * m + cidx] * w[cidx];
        w[col] = acc / A[col * m + col];
    }

    ModelBundle model = build_model({LayerSpec::dense(d, 1)}, {d}, 1, seed);
    for (std::size_t j = 0; j < d; ++j)
        model.weights[0][0][j] = static_cast<double>(static_cast<float>(w[j]));
    model.weights[0][1][0] = static_cast<double>(static_cast<float>(w[d]));
    return model;
}

}  // namespace trodo
