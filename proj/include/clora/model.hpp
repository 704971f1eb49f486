#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "clora/adapter.hpp"
#include "clora/linalg.hpp"

namespace clora {

/// Frozen two-layer MLP, relu(x W1 + b1) W2 + b2. Stands in for a pre-trained
/// block; its parameters never change after construction.
struct MlpBlock {
    Matrix W1;  ///< d x h
    Matrix b1;  ///< 1 x h
    Matrix W2;  ///< h x d
    Matrix b2;  ///< 1 x d

    std::size_t dim() const noexcept { return W1.rows(); }
    std::size_t hidden() const noexcept { return W1.cols(); }

    friend bool operator==(const MlpBlock&, const MlpBlock&) = default;
};

/// Seeded random surrogate. With `identity_mlp` the second layer and biases are
/// zero so the block reduces to x + adapter(x).
MlpBlock make_mlp_block(std::size_t d, std::size_t hidden, Rng& rng, bool identity_mlp = false);

/// relu(x W1 + b1) W2 + b2
Matrix mlp_forward(const MlpBlock& block, const Matrix& x);

/// Scaled cosine classifier. Row i of `weights` belongs to class `labels[i]`;
/// rows are appended as sessions introduce classes.
struct CosineHead {
    Matrix weights;           ///< C x d
    std::vector<int> labels;  ///< C entries
    double scale = 16.0;

    std::size_t num_classes() const noexcept { return labels.size(); }
    /// Row index of a class label; throws std::out_of_range if unseen.
    std::size_t row_of(int label) const;
    bool has_class(int label) const noexcept;

    friend bool operator==(const CosineHead&, const CosineHead&) = default;
};

/// Denominator guard used by the cosine logits.
inline constexpr double kCosineEpsilon = 1e-12;

/// Append one N(0, std) row per new label.
void extend_head(CosineHead& head, std::span<const int> new_labels, std::size_t d, double std,
                 Rng& rng);

/// s * w_l^T f / max(||w_l|| ||f||, eps) for every class l.
std::vector<double> cosine_logits(const CosineHead& head, std::span<const double> f);
/// Row-wise cosine_logits over a feature batch (n x C).
Matrix cosine_logits(const CosineHead& head, const Matrix& features);

struct HeadGrads {
    Matrix dfeatures;  ///< n x d
    Matrix dweights;   ///< C x d
};
/// Backpropagates dlogits (n x C) through the cosine normalization.
HeadGrads cosine_backward(const CosineHead& head, const Matrix& features, const Matrix& dlogits);

struct CrossEntropy {
    double loss;
    std::vector<double> dlogits;  ///< softmax(z) - onehot(c*)
};
/// -log softmax(z)[c*] with max subtraction.
CrossEntropy cross_entropy(std::span<const double> logits, std::size_t true_index);

struct BatchCrossEntropy {
    double loss;      ///< mean over rows
    Matrix dlogits;   ///< gradient of the mean loss
};
BatchCrossEntropy batch_cross_entropy(const Matrix& logits, std::span<const std::size_t> targets);

struct IncrementalModel {
    MlpBlock block;
    CLoraAdapter adapter;
    CosineHead head;
    /// Bumped by every parameter update; caches from older versions are stale.
    std::uint64_t version = 0;

    std::size_t dim() const noexcept { return block.dim(); }
};

struct BlockCache {
    Matrix x;
    DownProjection down;
    std::uint64_t version = 0;
};

struct BlockForward {
    Matrix features;  ///< x + MLP(x) + C-LoRA(x)
    BlockCache cache;
};

BlockForward block_forward(const IncrementalModel& m, const Matrix& x);

struct ModelGrads {
    AdapterGrads adapter;
    Matrix head;             ///< C x d
    double orth_loss = 0.0;  ///< value of the orthogonality term (unscaled)
};

/// Gradients of  CE(features) + lambda * L_orth  given dlogits for the batch
/// that produced `cache`. The frozen block has no gradient slot. With
/// lambda == 0 the orthogonality term is skipped entirely.
ModelGrads model_backward(const IncrementalModel& m, const BlockCache& cache,
                          const Matrix& features, const Matrix& dlogits, double lambda_orth);

/// Predicted labels (argmax of cosine logits, lowest row on ties).
std::vector<int> predict(const IncrementalModel& m, const Matrix& x);

}  // namespace clora
