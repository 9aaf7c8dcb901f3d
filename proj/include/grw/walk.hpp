#pragma once

#include <cstddef>
#include <vector>

#include "grw/linalg.hpp"
#include "grw/matrix.hpp"

namespace grw {

namespace testing {
// Verification harness hook: lets the mutation test prove the gradient
// suite catches a broken backward pass. Never set outside tests/verify.
inline bool flip_walk_backward_sign = false;
} // namespace testing

// Logit used to mask self-transitions before the row softmax; exp() of it
// underflows to exactly zero, so the diagonal carries no probability mass
// and the rows still sum to one.
inline constexpr double kDiagMaskLogit = -1e9;

// The three row-stochastic transition matrices of one random walk:
// class centers -> samples, samples -> samples (masked diagonal),
// samples -> class centers. Inputs are cached for the backward pass.
struct TransitionTriple {
    ProbMatrix p_cx; // N_s x N_h
    ProbMatrix p_xx; // N_h x N_h
    ProbMatrix p_xc; // N_h x N_s

    Matrix centers, samples;
    Matrix sim_cx, sim_xx, sim_xc; // similarity logits (sim_xx diagonal masked)
};

inline TransitionTriple build_transitions(const Matrix& centers, const Matrix& samples) {
    if (centers.cols() != samples.cols())
        throw ShapeError("build_transitions: feature width mismatch");
    if (centers.rows() < 2 || samples.rows() < 2)
        throw InvalidInputError("build_transitions: need at least 2 centers and 2 samples");
    TransitionTriple t;
    t.centers = centers;
    t.samples = samples;
    t.sim_cx = neg_sq_dist_matrix(centers, samples);
    t.sim_xx = neg_sq_dist_matrix(samples, samples);
    for (std::size_t i = 0; i < t.sim_xx.rows(); ++i) t.sim_xx(i, i) = kDiagMaskLogit;
    t.sim_xc = neg_sq_dist_matrix(samples, centers);
    t.p_cx = row_softmax(t.sim_cx);
    t.p_xx = row_softmax(t.sim_xx);
    t.p_xc = row_softmax(t.sim_xc);
    return t;
}

// Landing distributions over seen classes after r = 0..R steps inside the
// sample set, plus the visit distribution over samples. Intermediate powers
// of p_xx are kept for the backward pass.
struct WalkResult {
    std::vector<ProbMatrix> landings; // landings[r] = p_cx (p_xx)^r p_xc, N_s x N_s
    Matrix visit;                     // 1 x N_h, column mean of p_cx
    std::vector<Matrix> pxx_powers;   // (p_xx)^0 .. (p_xx)^R
};

inline WalkResult walk_landing(const TransitionTriple& t, std::size_t steps) {
    WalkResult result;
    const std::size_t n_h = t.p_xx.rows();
    result.pxx_powers.reserve(steps + 1);
    result.pxx_powers.push_back(identity(n_h));
    for (std::size_t r = 1; r <= steps; ++r)
        result.pxx_powers.push_back(matmul(result.pxx_powers.back(), t.p_xx.inner()));

    // left = p_cx (p_xx)^r built incrementally
    Matrix left = t.p_cx.inner();
    result.landings.reserve(steps + 1);
    for (std::size_t r = 0; r <= steps; ++r) {
        if (r > 0) left = matmul(left, t.p_xx.inner());
        result.landings.push_back(ProbMatrix::adopt(matmul(left, t.p_xc.inner())));
    }

    result.visit = col_sums(t.p_cx.inner());
    for (double& v : result.visit.data()) v /= static_cast<double>(t.p_cx.rows());
    return result;
}

// sum_r gamma^r CE(landings[r], target) + CE(visit, uniform over samples).
inline double grw_objective(const WalkResult& result, const TargetDistribution& target,
                            double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw InvalidInputError("grw_objective: gamma must be in (0, 1]");
    double total = 0.0;
    double decay = 1.0;
    for (const ProbMatrix& landing : result.landings) {
        total += decay * cross_entropy_to_target(landing, target);
        decay *= gamma;
    }
    total += cross_entropy_to_target(ProbMatrix::adopt(result.visit),
                                     TargetDistribution::uniform());
    return total;
}

struct WalkGrad {
    Matrix d_centers;
    Matrix d_samples;
};

// Gradient of scale * grw_objective w.r.t. the centers and samples that
// produced the triple. Matrix powers are differentiated with the product
// rule: d(A^r) contracted with G gives sum_k (A^k)^T G (A^(r-1-k))^T.
inline WalkGrad grw_backward(const TransitionTriple& t, const WalkResult& result,
                             const TargetDistribution& target, double gamma,
                             double scale = 1.0) {
    const std::size_t n_s = t.p_cx.rows();
    const std::size_t n_h = t.p_xx.rows();
    const std::size_t steps = result.landings.size() - 1;

    Matrix d_pcx(n_s, n_h), d_pxx(n_h, n_h), d_pxc(n_h, n_s);

    double decay = scale;
    for (std::size_t r = 0; r <= steps; ++r) {
        Matrix d_landing = scaled(cross_entropy_backward(result.landings[r], target), decay);
        decay *= gamma;

        const Matrix& power = result.pxx_powers[r];
        // landing_r = p_cx power p_xc
        Matrix power_pxc = matmul(power, t.p_xc.inner());
        axpy(d_pcx, matmul(d_landing, transpose(power_pxc)), 1.0);
        Matrix pcx_power = matmul(t.p_cx.inner(), power);
        axpy(d_pxc, matmul(transpose(pcx_power), d_landing), 1.0);
        if (r > 0) {
            Matrix d_power = matmul(matmul(transpose(t.p_cx.inner()), d_landing),
                                    transpose(t.p_xc.inner()));
            for (std::size_t k = 0; k < r; ++k) {
                Matrix term = matmul(matmul(transpose(result.pxx_powers[k]), d_power),
                                     transpose(result.pxx_powers[r - 1 - k]));
                axpy(d_pxx, term, 1.0);
            }
        }
    }

    // visit = column mean of p_cx; CE(visit, uniform)
    Matrix d_visit = cross_entropy_backward(ProbMatrix::adopt(result.visit),
                                            TargetDistribution::uniform());
    for (std::size_t i = 0; i < n_s; ++i)
        for (std::size_t j = 0; j < n_h; ++j)
            d_pcx(i, j) += scale * d_visit(0, j) / static_cast<double>(n_s);

    Matrix d_sim_cx = row_softmax_backward(t.p_cx, d_pcx);
    Matrix d_sim_xx = row_softmax_backward(t.p_xx, d_pxx);
    Matrix d_sim_xc = row_softmax_backward(t.p_xc, d_pxc);
    // the masked diagonal is a constant, not a function of the samples
    for (std::size_t i = 0; i < n_h; ++i) d_sim_xx(i, i) = 0.0;

    WalkGrad grad;
    grad.d_centers = Matrix(t.centers.rows(), t.centers.cols());
    grad.d_samples = Matrix(t.samples.rows(), t.samples.cols());
    neg_sq_dist_backward(t.centers, t.samples, d_sim_cx, grad.d_centers, grad.d_samples);
    neg_sq_dist_backward(t.samples, t.samples, d_sim_xx, grad.d_samples, grad.d_samples);
    neg_sq_dist_backward(t.samples, t.centers, d_sim_xc, grad.d_samples, grad.d_centers);

    if (testing::flip_walk_backward_sign) {
        for (double& v : grad.d_samples.data()) v = -v;
    }
    return grad;
}

struct DiversityDiagnostics {
    double det_pxx = 0.0;
    double diag_mass_landing = 0.0;
};

// Determinant of the sample-to-sample transition matrix and the mean
// diagonal of the final landing distribution. Diagnostics only; nothing
// differentiates through these.
inline DiversityDiagnostics diversity_diagnostics(const TransitionTriple& t,
                                                  std::size_t steps) {
    DiversityDiagnostics d;
    d.det_pxx = lu_determinant(t.p_xx.inner());
    WalkResult w = walk_landing(t, steps);
    const ProbMatrix& last = w.landings.back();
    double sum = 0.0;
    for (std::size_t i = 0; i < last.rows(); ++i) sum += last(i, i);
    d.diag_mass_landing = sum / static_cast<double>(last.rows());
    return d;
}

} // namespace grw
