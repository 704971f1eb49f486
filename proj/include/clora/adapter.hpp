#pragma once

#include <optional>
#include <span>
#include <stdexcept>

#include "clora/linalg.hpp"

namespace clora {

/// Raised when an operation needs state that has not been set up yet.
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Single low-rank adapter with a decomposed routing matrix.
///
/// The adapted update is  A (R_old + R_delta) B  with A: d x r, B: r x k and
/// both routing parts r x r. R_old is frozen during training; only
/// consolidate() changes it. A_snapshot is the copy of A taken at the start of
/// the current session and anchors the orthogonality penalty.
struct CLoraAdapter {
    Matrix A;
    Matrix B;
    Matrix R_old;
    Matrix R_delta;
    std::optional<Matrix> A_snapshot;

    std::size_t d() const noexcept { return A.rows(); }
    std::size_t k() const noexcept { return B.cols(); }
    std::size_t rank() const noexcept { return A.cols(); }

    /// Throws ShapeError if the matrices are mutually inconsistent.
    void validate() const;

    friend bool operator==(const CLoraAdapter&, const CLoraAdapter&) = default;
};

struct AdapterInit {
    double a_std = -1.0;        ///< < 0 means 1/sqrt(r)
    double b_std = -1.0;        ///< < 0 means 1/sqrt(r)
    double r_delta_std = 1e-3;
};

/// A, B ~ N(0, 1/sqrt(r)), R_old = 0, R_delta ~ N(0, 1e-3) by default;
/// A_snapshot is set to the initial A.
CLoraAdapter make_adapter(std::size_t d, std::size_t k, std::size_t r, Rng& rng,
                          const AdapterInit& init = {});

/// Gradients for the trainable parts only. R_old has no entry: it sits behind a
/// stop-gradient and its gradient is zero by construction.
struct AdapterGrads {
    Matrix dA;
    Matrix dB;
    Matrix dR_delta;
};

/// Block-diagonal routing diag(w_1 I, ..., w_h I) with blocks of size r / h.
Matrix routing_from_moe(std::span<const double> weights, std::size_t r);

/// A (R_old + R_delta) B.
Matrix effective_weight(const CLoraAdapter& ad);

/// Pre-activation x A and the ReLU output / derivative mask.
struct DownProjection {
    Matrix pre;   ///< x A
    Matrix z;     ///< relu(x A)
    Matrix mask;  ///< 1 where x A > 0, else 0
};
DownProjection down_project(const CLoraAdapter& ad, const Matrix& x);

/// z R_old B + z R_delta B, evaluated as z (R_old + R_delta) B. The
/// stop-gradient on the R_old path only matters for backward().
Matrix forward(const CLoraAdapter& ad, const Matrix& z);

/// Gradients of <G_out, forward(ad, relu(x A))> through the R_delta path only.
/// `activation_grad_mask` is the derivative of the activation at x A.
AdapterGrads backward(const CLoraAdapter& ad, const Matrix& z, const Matrix& x,
                      const Matrix& G_out, const Matrix& activation_grad_mask);

/// R_old += R_delta, R_delta ~ N(0, init_std), A_snapshot = A.
CLoraAdapter consolidate(const CLoraAdapter& ad, Rng& rng, double init_std);

struct OrthogonalityLoss {
    double loss;
    Matrix dR_delta;
};

/// || A_snapshot^T A R_delta ||_F^2 and its gradient in R_delta. Neither A nor
/// the snapshot receive gradient. Throws StateError when no snapshot is set.
OrthogonalityLoss orthogonality_loss(const CLoraAdapter& ad);

}  // namespace clora
