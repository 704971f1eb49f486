#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "clora/linalg.hpp"

namespace clora {

/// One draw of the quantities in the gradient-bound claim: adapter factors,
/// a surrogate gradient G = dy/dW (d x k) and the two routing parts.
struct TheoremInstance {
    Matrix A;        ///< d x r
    Matrix B;        ///< r x k
    Matrix G;        ///< d x k
    Matrix R_old;    ///< r x r
    Matrix R_delta;  ///< r x r

    void validate() const;
};

/// Hypothesis 1: the symmetric part of R_old^T R_delta is positive definite.
bool routing_product_positive_definite(const TheoremInstance& inst);
/// Hypothesis 2: B G^T != 0 and G^T A != 0.
bool gradient_products_nonzero(const TheoremInstance& inst);
bool satisfies_hypotheses(const TheoremInstance& inst);

class SamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Draws Gaussian instances until both hypotheses hold. R_delta is built as
/// R_old P + 0.1 N(0, 1) with P = Q Q^T / r + I/2, which keeps the acceptance
/// rate bounded as r grows. Throws SamplingError after `max_attempts`.
TheoremInstance sample_instance(std::size_t d, std::size_t k, std::size_t r, Rng& rng,
                                std::size_t max_attempts = 10000);

/// Squared Frobenius norms of the A- and B-gradients with the full routing
/// (R_old + R_delta) and with the stop-gradient split (R_delta only):
///   dA = G B^T R^T,  dB = R^T A^T G.
struct GradNorms {
    double nA_full;
    double nA_dec;
    double nB_full;
    double nB_dec;
};
GradNorms grad_norms(const TheoremInstance& inst);

/// Closed forms of the two norm gaps:
///   A: Tr[(R_old^T R_old + 2 R_old^T R_delta)(B G^T G B^T)]
///   B: Tr[(R_old R_old^T + 2 R_delta R_old^T)(A^T G G^T A)]
double trace_gap_A(const TheoremInstance& inst);
double trace_gap_B(const TheoremInstance& inst);

struct TrialResult {
    GradNorms norms;
    bool in_hypothesis;
    bool a_holds;  ///< strict, with margin 1e-12 * max(norm, 1)
    bool b_holds;
    double residual_A;  ///< |gap - trace form| relative to the full norm
    double residual_B;
};
TrialResult evaluate_instance(const TheoremInstance& inst);

struct TheoremFailure {
    std::size_t trial;
    TheoremInstance instance;
    TrialResult result;
};

struct TheoremReport {
    std::size_t trials = 0;
    std::size_t held = 0;  ///< trials where both inequalities held strictly
    std::size_t held_A = 0;
    std::size_t held_B = 0;
    std::size_t out_of_hypothesis = 0;
    double min_gap_A = 0.0;  ///< smallest nA_full - nA_dec over in-hypothesis trials
    double min_gap_B = 0.0;
    double max_residual_A = 0.0;
    double max_residual_B = 0.0;
    std::vector<double> residuals_A;
    std::vector<double> residuals_B;
    std::vector<TheoremFailure> failures;

    bool passed(double residual_tol = 1e-8) const noexcept {
        return failures.empty() && held == trials - out_of_hypothesis &&
               max_residual_A <= residual_tol && max_residual_B <= residual_tol;
    }
};

/// Associative merge (counts add, gaps take the minimum, residuals concatenate).
TheoremReport merge(TheoremReport a, const TheoremReport& b);

/// Adds one evaluated trial to a report.
void record_trial(TheoremReport& report, std::size_t trial, const TheoremInstance& inst,
                  const TrialResult& res);

/// Samples `trials` hypothesis-satisfying instances (trial i uses its own
/// generator derived from `seed`) and checks both strict inequalities plus the
/// trace identities. Violations are reported, not thrown.
TheoremReport verify_theorem(std::size_t trials, std::size_t d, std::size_t k, std::size_t r,
                             std::uint64_t seed);

std::string describe(const TheoremInstance& inst);
std::string format_report(const TheoremReport& report);

}  // namespace clora
