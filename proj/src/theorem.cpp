#include "clora/theorem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace clora {

void TheoremInstance::validate() const {
    const std::size_t d = A.rows(), r = A.cols(), k = B.cols();
    require_shape(B, r, k, "theorem B");
    require_shape(G, d, k, "theorem G");
    require_shape(R_old, r, r, "theorem R_old");
    require_shape(R_delta, r, r, "theorem R_delta");
}

bool routing_product_positive_definite(const TheoremInstance& inst) {
    return min_symmetric_eigenvalue(matmul(transpose(inst.R_old), inst.R_delta)) > 0.0;
}

bool gradient_products_nonzero(const TheoremInstance& inst) {
    return frobenius_norm_sq(matmul(inst.B, transpose(inst.G))) > 0.0 &&
           frobenius_norm_sq(matmul(transpose(inst.G), inst.A)) > 0.0;
}

bool satisfies_hypotheses(const TheoremInstance& inst) {
    return routing_product_positive_definite(inst) && gradient_products_nonzero(inst);
}

TheoremInstance sample_instance(std::size_t d, std::size_t k, std::size_t r, Rng& rng,
                                std::size_t max_attempts) {
    if (r == 0 || d < r || k < r)
        throw std::invalid_argument("sample_instance: need d, k >= r >= 1");
    double best_eig = -std::numeric_limits<double>::infinity();
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        TheoremInstance inst;
        inst.R_old = gaussian_matrix(r, r, 0.0, 1.0, rng);
        const Matrix Q = gaussian_matrix(r, r, 0.0, 1.0, rng);
        Matrix P = matmul(Q, transpose(Q));
        P *= 1.0 / static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i) P(i, i) += 0.5;
        inst.R_delta = matmul(inst.R_old, P) + gaussian_matrix(r, r, 0.0, 0.1, rng);
        inst.A = gaussian_matrix(d, r, 0.0, 1.0, rng);
        inst.B = gaussian_matrix(r, k, 0.0, 1.0, rng);
        inst.G = gaussian_matrix(d, k, 0.0, 1.0, rng);
        const double eig = min_symmetric_eigenvalue(matmul(transpose(inst.R_old), inst.R_delta));
        best_eig = std::max(best_eig, eig);
        if (eig > 0.0 && gradient_products_nonzero(inst)) return inst;
    }
    std::ostringstream os;
    os << "sample_instance: no hypothesis-satisfying instance in " << max_attempts
       << " attempts (d=" << d << ", k=" << k << ", r=" << r
       << ", best min eigenvalue of sym(R_old^T R_delta) = " << best_eig << ")";
    throw SamplingError(os.str());
}

GradNorms grad_norms(const TheoremInstance& inst) {
    inst.validate();
    const Matrix R = inst.R_old + inst.R_delta;
    const Matrix GBt = matmul(inst.G, transpose(inst.B));  // d x r
    const Matrix AtG = matmul(transpose(inst.A), inst.G);  // r x k
    return {frobenius_norm_sq(matmul(GBt, transpose(R))),
            frobenius_norm_sq(matmul(GBt, transpose(inst.R_delta))),
            frobenius_norm_sq(matmul(transpose(R), AtG)),
            frobenius_norm_sq(matmul(transpose(inst.R_delta), AtG))};
}

double trace_gap_A(const TheoremInstance& inst) {
    inst.validate();
    const Matrix Rot = transpose(inst.R_old);
    Matrix S = matmul(Rot, inst.R_old);
    S.axpy(2.0, matmul(Rot, inst.R_delta));
    const Matrix GBt = matmul(inst.G, transpose(inst.B));
    return trace(matmul(S, matmul(transpose(GBt), GBt)));
}

double trace_gap_B(const TheoremInstance& inst) {
    inst.validate();
    const Matrix Rot = transpose(inst.R_old);
    Matrix S = matmul(inst.R_old, Rot);
    S.axpy(2.0, matmul(inst.R_delta, Rot));
    const Matrix AtG = matmul(transpose(inst.A), inst.G);
    return trace(matmul(S, matmul(AtG, transpose(AtG))));
}

static bool strictly_greater(double full, double dec) {
    return full - dec > 1e-12 * std::max(full, 1.0);
}

TrialResult evaluate_instance(const TheoremInstance& inst) {
    TrialResult res;
    res.norms = grad_norms(inst);
    res.in_hypothesis = satisfies_hypotheses(inst);
    res.a_holds = strictly_greater(res.norms.nA_full, res.norms.nA_dec);
    res.b_holds = strictly_greater(res.norms.nB_full, res.norms.nB_dec);
    const double gapA = res.norms.nA_full - res.norms.nA_dec;
    const double gapB = res.norms.nB_full - res.norms.nB_dec;
    const double tiny = std::numeric_limits<double>::min();
    res.residual_A = std::abs(gapA - trace_gap_A(inst)) /
                     std::max({res.norms.nA_full, res.norms.nA_dec, tiny});
    res.residual_B = std::abs(gapB - trace_gap_B(inst)) /
                     std::max({res.norms.nB_full, res.norms.nB_dec, tiny});
    return res;
}

void record_trial(TheoremReport& report, std::size_t trial, const TheoremInstance& inst,
                  const TrialResult& res) {
    const bool first_in_hypothesis = report.trials == report.out_of_hypothesis;
    ++report.trials;
    report.residuals_A.push_back(res.residual_A);
    report.residuals_B.push_back(res.residual_B);
    report.max_residual_A = std::max(report.max_residual_A, res.residual_A);
    report.max_residual_B = std::max(report.max_residual_B, res.residual_B);
    if (!res.in_hypothesis) {
        ++report.out_of_hypothesis;
        return;
    }
    const double gapA = res.norms.nA_full - res.norms.nA_dec;
    const double gapB = res.norms.nB_full - res.norms.nB_dec;
    report.min_gap_A = first_in_hypothesis ? gapA : std::min(report.min_gap_A, gapA);
    report.min_gap_B = first_in_hypothesis ? gapB : std::min(report.min_gap_B, gapB);
    report.held_A += res.a_holds;
    report.held_B += res.b_holds;
    if (res.a_holds && res.b_holds)
        ++report.held;
    else
        report.failures.push_back({trial, inst, res});
}

TheoremReport merge(TheoremReport a, const TheoremReport& b) {
    const std::size_t a_in = a.trials - a.out_of_hypothesis;
    const std::size_t b_in = b.trials - b.out_of_hypothesis;
    if (a_in == 0) {
        a.min_gap_A = b.min_gap_A;
        a.min_gap_B = b.min_gap_B;
    } else if (b_in > 0) {
        a.min_gap_A = std::min(a.min_gap_A, b.min_gap_A);
        a.min_gap_B = std::min(a.min_gap_B, b.min_gap_B);
    }
    a.trials += b.trials;
    a.held += b.held;
    a.held_A += b.held_A;
    a.held_B += b.held_B;
    a.out_of_hypothesis += b.out_of_hypothesis;
    a.max_residual_A = std::max(a.max_residual_A, b.max_residual_A);
    a.max_residual_B = std::max(a.max_residual_B, b.max_residual_B);
    a.residuals_A.insert(a.residuals_A.end(), b.residuals_A.begin(), b.residuals_A.end());
    a.residuals_B.insert(a.residuals_B.end(), b.residuals_B.begin(), b.residuals_B.end());
    a.failures.insert(a.failures.end(), b.failures.begin(), b.failures.end());
    return a;
}

static std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
    // splitmix64 finalizer over (seed, trial)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(trial) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

TheoremReport verify_theorem(std::size_t trials, std::size_t d, std::size_t k, std::size_t r,
                             std::uint64_t seed) {
    if (trials == 0) throw std::invalid_argument("verify_theorem: trials must be >= 1");
    TheoremReport report;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng(trial_seed(seed, t));
        const TheoremInstance inst = sample_instance(d, k, r, rng);
        record_trial(report, t, inst, evaluate_instance(inst));
    }
    return report;
}

static void dump_matrix(std::ostringstream& os, const char* name, const Matrix& m) {
    os << "  " << name << " (" << m.shape_string() << "):\n";
    os.precision(17);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        os << "   ";
        for (std::size_t j = 0; j < m.cols(); ++j) os << ' ' << m(i, j);
        os << '\n';
    }
}

std::string describe(const TheoremInstance& inst) {
    std::ostringstream os;
    dump_matrix(os, "A", inst.A);
    dump_matrix(os, "B", inst.B);
    dump_matrix(os, "G", inst.G);
    dump_matrix(os, "R_old", inst.R_old);
    dump_matrix(os, "R_delta", inst.R_delta);
    return os.str();
}

std::string format_report(const TheoremReport& rep) {
    std::ostringstream os;
    const std::size_t in_h = rep.trials - rep.out_of_hypothesis;
    os << "trials: " << rep.trials << " (in hypothesis: " << in_h << ")\n";
    os << "both strict inequalities held: " << rep.held << "/" << in_h << "\n";
    os << "A-side held: " << rep.held_A << "/" << in_h << "  B-side held: " << rep.held_B << "/"
       << in_h << "\n";
    os.precision(6);
    os << std::scientific;
    os << "min gap A: " << rep.min_gap_A << "  min gap B: " << rep.min_gap_B << "\n";
    os << "max trace-identity residual A: " << rep.max_residual_A
       << "  B: " << rep.max_residual_B << "\n";
    for (const auto& f : rep.failures) {
        os << "VIOLATION at trial " << f.trial << ": nA_full=" << f.result.norms.nA_full
           << " nA_dec=" << f.result.norms.nA_dec << " nB_full=" << f.result.norms.nB_full
           << " nB_dec=" << f.result.norms.nB_dec << "\n"
           << describe(f.instance);
    }
    return os.str();
}

}  // namespace clora
