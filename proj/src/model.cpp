#include "clora/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace clora {

MlpBlock make_mlp_block(std::size_t d, std::size_t hidden, Rng& rng, bool identity_mlp) {
    if (d == 0 || hidden == 0) throw ShapeError("make_mlp_block: dimensions must be positive");
    MlpBlock b;
    b.W1 = gaussian_matrix(d, hidden, 0.0, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    if (identity_mlp) {
        b.b1 = Matrix(1, hidden);
        b.W2 = Matrix(hidden, d);
        b.b2 = Matrix(1, d);
    } else {
        b.b1 = gaussian_matrix(1, hidden, 0.0, 0.1, rng);
        b.W2 = gaussian_matrix(hidden, d, 0.0, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
        b.b2 = gaussian_matrix(1, d, 0.0, 0.1, rng);
    }
    return b;
}

static void add_row_bias(Matrix& m, const Matrix& bias) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) row[j] += bias(0, j);
    }
}

Matrix mlp_forward(const MlpBlock& block, const Matrix& x) {
    if (x.cols() != block.dim())
        throw ShapeError("mlp_forward: input has " + std::to_string(x.cols()) +
                         " columns, block expects " + std::to_string(block.dim()));
    Matrix h = matmul(x, block.W1);
    add_row_bias(h, block.b1);
    for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
    Matrix out = matmul(h, block.W2);
    add_row_bias(out, block.b2);
    return out;
}

// ---------------------------------------------------------------- head

std::size_t CosineHead::row_of(int label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end())
        throw std::out_of_range("CosineHead: class " + std::to_string(label) + " is not in the head");
    return static_cast<std::size_t>(it - labels.begin());
}

bool CosineHead::has_class(int label) const noexcept {
    return std::find(labels.begin(), labels.end(), label) != labels.end();
}

void extend_head(CosineHead& head, std::span<const int> new_labels, std::size_t d, double std,
                 Rng& rng) {
    if (head.num_classes() > 0 && head.weights.cols() != d)
        throw ShapeError("extend_head: head dimension mismatch");
    for (int label : new_labels)
        if (head.has_class(label))
            throw std::invalid_argument("extend_head: class " + std::to_string(label) +
                                        " already present");
    const std::size_t old_rows = head.num_classes();
    Matrix grown(old_rows + new_labels.size(), d);
    std::copy(head.weights.data().begin(), head.weights.data().end(), grown.data().begin());
    for (std::size_t i = 0; i < new_labels.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) grown(old_rows + i, j) = rng.normal(0.0, std);
    head.weights = std::move(grown);
    head.labels.insert(head.labels.end(), new_labels.begin(), new_labels.end());
}

static double norm_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

std::vector<double> cosine_logits(const CosineHead& head, std::span<const double> f) {
    if (f.size() != head.weights.cols())
        throw ShapeError("cosine_logits: feature length " + std::to_string(f.size()) +
                         " does not match head dimension " + std::to_string(head.weights.cols()));
    const double nf = norm_of(f);
    std::vector<double> z(head.num_classes());
    for (std::size_t l = 0; l < z.size(); ++l) {
        const auto w = head.weights.row(l);
        double dot = 0.0;
        for (std::size_t j = 0; j < f.size(); ++j) dot += w[j] * f[j];
        z[l] = head.scale * dot / std::max(norm_of(w) * nf, kCosineEpsilon);
    }
    return z;
}

Matrix cosine_logits(const CosineHead& head, const Matrix& features) {
    Matrix z(features.rows(), head.num_classes());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto row = cosine_logits(head, features.row(i));
        std::copy(row.begin(), row.end(), z.row(i).begin());
    }
    return z;
}

HeadGrads cosine_backward(const CosineHead& head, const Matrix& features, const Matrix& dlogits) {
    const std::size_t n = features.rows(), d = features.cols(), C = head.num_classes();
    require_shape(dlogits, n, C, "cosine_backward dlogits");
    require_shape(head.weights, C, d, "cosine_backward weights");

    std::vector<double> wnorm(C);
    for (std::size_t l = 0; l < C; ++l) wnorm[l] = norm_of(head.weights.row(l));

    HeadGrads g{Matrix(n, d), Matrix(C, d)};
    const double s = head.scale;
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = features.row(i);
        const double nf = norm_of(f);
        auto df = g.dfeatures.row(i);
        for (std::size_t l = 0; l < C; ++l) {
            const double gl = dlogits(i, l);
            if (gl == 0.0) continue;
            const auto w = head.weights.row(l);
            auto dw = g.dweights.row(l);
            const double denom = wnorm[l] * nf;
            if (denom <= kCosineEpsilon) {
                // Clamped denominator: the logit is linear in both arguments.
                for (std::size_t j = 0; j < d; ++j) {
                    df[j] += gl * s * w[j] / kCosineEpsilon;
                    dw[j] += gl * s * f[j] / kCosineEpsilon;
                }
                continue;
            }
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += w[j] * f[j];
            const double cos = dot / denom;
            for (std::size_t j = 0; j < d; ++j) {
                df[j] += gl * s * (w[j] / denom - cos * f[j] / (nf * nf));
                dw[j] += gl * s * (f[j] / denom - cos * w[j] / (wnorm[l] * wnorm[l]));
            }
        }
    }
    return g;
}

CrossEntropy cross_entropy(std::span<const double> logits, std::size_t true_index) {
    if (logits.empty()) throw std::invalid_argument("cross_entropy: empty logits");
    if (true_index >= logits.size())
        throw std::out_of_range("cross_entropy: class index " + std::to_string(true_index) +
                                " outside " + std::to_string(logits.size()) + " logits");
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    CrossEntropy ce;
    ce.loss = std::log(sum) - (logits[true_index] - zmax);
    ce.dlogits.resize(logits.size());
    for (std::size_t l = 0; l < logits.size(); ++l)
        ce.dlogits[l] = std::exp(logits[l] - zmax) / sum;
    ce.dlogits[true_index] -= 1.0;
    return ce;
}

BatchCrossEntropy batch_cross_entropy(const Matrix& logits, std::span<const std::size_t> targets) {
    const std::size_t n = logits.rows();
    if (targets.size() != n)
        throw ShapeError("batch_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(n) + " rows");
    if (n == 0) throw std::invalid_argument("batch_cross_entropy: empty batch");
    BatchCrossEntropy out{0.0, Matrix(n, logits.cols())};
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ce = cross_entropy(logits.row(i), targets[i]);
        out.loss += ce.loss;
        for (std::size_t l = 0; l < ce.dlogits.size(); ++l) out.dlogits(i, l) = ce.dlogits[l] * inv_n;
    }
    out.loss *= inv_n;
    return out;
}

// ---------------------------------------------------------------- model

BlockForward block_forward(const IncrementalModel& m, const Matrix& x) {
    if (x.cols() != m.dim())
        throw ShapeError("block_forward: input has " + std::to_string(x.cols()) +
                         " columns, model dimension is " + std::to_string(m.dim()));
    BlockForward out;
    out.cache.x = x;
    out.cache.down = down_project(m.adapter, x);
    out.cache.version = m.version;
    out.features = x;
    out.features += mlp_forward(m.block, x);
    out.features += forward(m.adapter, out.cache.down.z);
    return out;
}

ModelGrads model_backward(const IncrementalModel& m, const BlockCache& cache,
                          const Matrix& features, const Matrix& dlogits, double lambda_orth) {
    if (cache.version != m.version)
        throw StateError("model_backward: cache was produced by model version " +
                         std::to_string(cache.version) + ", model is at " +
                         std::to_string(m.version));
    require_shape(features, cache.x.rows(), m.dim(), "model_backward features");

    HeadGrads hg = cosine_backward(m.head, features, dlogits);
    // Residual and frozen MLP paths end at frozen parameters; only the adapter
    // branch carries gradient back from the features.
    ModelGrads g;
    g.adapter = backward(m.adapter, cache.down.z, cache.x, hg.dfeatures, cache.down.mask);
    g.head = std::move(hg.dweights);
    if (lambda_orth != 0.0) {
        const auto orth = orthogonality_loss(m.adapter);
        g.orth_loss = orth.loss;
        g.adapter.dR_delta.axpy(lambda_orth, orth.dR_delta);
    }
    return g;
}

std::vector<int> predict(const IncrementalModel& m, const Matrix& x) {
    if (m.head.num_classes() == 0) throw StateError("predict: head has no classes");
    const Matrix logits = cosine_logits(m.head, block_forward(m, x).features);
    std::vector<int> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto row = logits.row(i);
        const auto best = std::max_element(row.begin(), row.end()) - row.begin();
        out[i] = m.head.labels[static_cast<std::size_t>(best)];
    }
    return out;
}

}  // namespace clora
