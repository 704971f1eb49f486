#include "clora/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace clora {

void CLoraAdapter::validate() const {
    const std::size_t r = A.cols();
    if (r == 0) throw ShapeError("adapter: rank must be positive");
    require_shape(B, r, B.cols(), "adapter B");
    require_shape(R_old, r, r, "adapter R_old");
    require_shape(R_delta, r, r, "adapter R_delta");
    if (A_snapshot) require_shape(*A_snapshot, A.rows(), r, "adapter A_snapshot");
    if (r > std::min(A.rows(), B.cols()))
        throw ShapeError("adapter: rank " + std::to_string(r) + " exceeds min(d, k)");
}

CLoraAdapter make_adapter(std::size_t d, std::size_t k, std::size_t r, Rng& rng,
                          const AdapterInit& init) {
    if (r == 0 || r > std::min(d, k))
        throw ShapeError("make_adapter: need 1 <= r <= min(d, k), got r=" + std::to_string(r));
    const double default_std = 1.0 / std::sqrt(static_cast<double>(r));
    CLoraAdapter ad;
    ad.A = gaussian_matrix(d, r, 0.0, init.a_std < 0 ? default_std : init.a_std, rng);
    ad.B = gaussian_matrix(r, k, 0.0, init.b_std < 0 ? default_std : init.b_std, rng);
    ad.R_old = Matrix(r, r);
    ad.R_delta = gaussian_matrix(r, r, 0.0, init.r_delta_std, rng);
    ad.A_snapshot = ad.A;
    return ad;
}

Matrix routing_from_moe(std::span<const double> weights, std::size_t r) {
    const std::size_t h = weights.size();
    if (h == 0) throw std::invalid_argument("routing_from_moe: need at least one expert weight");
    if (r == 0 || r % h != 0)
        throw std::invalid_argument("routing_from_moe: rank " + std::to_string(r) +
                                    " is not divisible by expert count " + std::to_string(h));
    const std::size_t block = r / h;
    Matrix R(r, r);
    for (std::size_t e = 0; e < h; ++e)
        for (std::size_t i = 0; i < block; ++i) R(e * block + i, e * block + i) = weights[e];
    return R;
}

Matrix effective_weight(const CLoraAdapter& ad) {
    ad.validate();
    return matmul(matmul(ad.A, ad.R_old + ad.R_delta), ad.B);
}

DownProjection down_project(const CLoraAdapter& ad, const Matrix& x) {
    DownProjection out;
    out.pre = matmul(x, ad.A);
    out.z = out.pre;
    out.mask = Matrix(out.pre.rows(), out.pre.cols());
    for (std::size_t i = 0; i < out.pre.size(); ++i) {
        const bool on = out.pre.data()[i] > 0.0;
        out.z.data()[i] = on ? out.pre.data()[i] : 0.0;
        out.mask.data()[i] = on ? 1.0 : 0.0;
    }
    return out;
}

Matrix forward(const CLoraAdapter& ad, const Matrix& z) {
    ad.validate();
    if (z.cols() != ad.rank())
        throw ShapeError("forward: z has " + std::to_string(z.cols()) + " columns, rank is " +
                         std::to_string(ad.rank()));
    // Summing the routing parts before the product keeps outputs bit-identical
    // across consolidate(init_std = 0), which moves R_delta into R_old.
    return matmul(matmul(z, ad.R_old + ad.R_delta), ad.B);
}

AdapterGrads backward(const CLoraAdapter& ad, const Matrix& z, const Matrix& x,
                      const Matrix& G_out, const Matrix& activation_grad_mask) {
    ad.validate();
    const std::size_t n = z.rows();
    require_shape(z, n, ad.rank(), "backward z");
    require_shape(x, n, ad.d(), "backward x");
    require_shape(G_out, n, ad.k(), "backward G_out");
    require_shape(activation_grad_mask, n, ad.rank(), "backward activation mask");

    const Matrix zt = transpose(z);
    const Matrix G_Bt = matmul(G_out, transpose(ad.B));  // n x r

    AdapterGrads g;
    g.dR_delta = matmul(zt, G_Bt);
    g.dB = matmul(transpose(ad.R_delta), matmul(zt, G_out));
    const Matrix dz = matmul(G_Bt, transpose(ad.R_delta));
    g.dA = matmul(transpose(x), hadamard(dz, activation_grad_mask));
    return g;
}

CLoraAdapter consolidate(const CLoraAdapter& ad, Rng& rng, double init_std) {
    ad.validate();
    CLoraAdapter next = ad;
    next.R_old += ad.R_delta;
    next.R_delta = gaussian_matrix(ad.rank(), ad.rank(), 0.0, init_std, rng);
    next.A_snapshot = ad.A;
    return next;
}

OrthogonalityLoss orthogonality_loss(const CLoraAdapter& ad) {
    ad.validate();
    if (!ad.A_snapshot) throw StateError("orthogonality_loss: A snapshot has not been taken");
    const Matrix P = matmul(transpose(*ad.A_snapshot), ad.A);  // r x r
    const Matrix proj = matmul(P, ad.R_delta);
    OrthogonalityLoss out{frobenius_norm_sq(proj), matmul(transpose(P), proj)};
    out.dR_delta *= 2.0;
    return out;
}

}  // namespace clora
