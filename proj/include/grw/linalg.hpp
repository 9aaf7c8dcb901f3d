#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "grw/matrix.hpp"

namespace grw {

// Guards against log(0) and zero-norm cosine denominators; the formulas
// upstream never define those corners.
inline constexpr double kEpsLog = 1e-12;
inline constexpr double kEpsNorm = 1e-12;
inline constexpr double kRowSumTol = 1e-9;

// A matrix whose rows are probability distributions. Constructed through
// row_softmax or adopt(); both enforce the row-stochastic invariant.
class ProbMatrix {
public:
    ProbMatrix() = default;

    static ProbMatrix adopt(Matrix m) {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < m.cols(); ++j) {
                double v = m(i, j);
                if (!(v >= 0.0 && v <= 1.0 + kRowSumTol))
                    throw InvalidInputError("ProbMatrix: entry outside [0,1]");
                sum += v;
            }
            if (std::fabs(sum - 1.0) > kRowSumTol)
                throw InvalidInputError("ProbMatrix: row does not sum to 1");
        }
        ProbMatrix p;
        p.inner_ = std::move(m);
        return p;
    }

    const Matrix& inner() const { return inner_; }
    std::size_t rows() const { return inner_.rows(); }
    std::size_t cols() const { return inner_.cols(); }
    double operator()(std::size_t i, std::size_t j) const { return inner_(i, j); }

private:
    friend ProbMatrix row_softmax(const Matrix&);
    Matrix inner_;
};

// Row-wise softmax with max-subtraction for stability.
inline ProbMatrix row_softmax(const Matrix& logits) {
    if (logits.rows() == 0 || logits.cols() == 0)
        throw InvalidInputError("row_softmax: empty input");
    require_finite(logits, "row_softmax");
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* in = logits.row(i);
        double* o = out.row(i);
        double mx = in[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) o[j] /= sum;
    }
    ProbMatrix p;
    p.inner_ = std::move(out);
    return p;
}

// d(loss)/d(logits) given p = row_softmax(logits) and upstream = d(loss)/dp.
inline Matrix row_softmax_backward(const ProbMatrix& p, const Matrix& upstream) {
    require_same_shape(p.inner(), upstream, "row_softmax_backward");
    Matrix out(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) inner += upstream(i, j) * p(i, j);
        for (std::size_t j = 0; j < p.cols(); ++j)
            out(i, j) = p(i, j) * (upstream(i, j) - inner);
    }
    return out;
}

// S(i,j) = -||A_i - B_j||^2
inline Matrix neg_sq_dist_matrix(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw ShapeError("neg_sq_dist_matrix: dimension mismatch");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < a.cols(); ++t) {
                double d = a(i, t) - b(j, t);
                s += d * d;
            }
            out(i, j) = -s;
        }
    return out;
}

// Accumulates gradients of S = neg_sq_dist_matrix(a, b) into da, db.
inline void neg_sq_dist_backward(const Matrix& a, const Matrix& b,
                                 const Matrix& upstream, Matrix& da, Matrix& db) {
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double u = upstream(i, j);
            if (u == 0.0) continue;
            for (std::size_t t = 0; t < a.cols(); ++t) {
                double d = a(i, t) - b(j, t);
                da(i, t) += u * (-2.0) * d;
                db(j, t) += u * 2.0 * d;
            }
        }
}

// C(i,j) = <A_i, B_j> / (||A_i|| ||B_j|| + eps)
inline Matrix cosine_sim_matrix(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw ShapeError("cosine_sim_matrix: dimension mismatch");
    std::vector<double> na(a.rows()), nb(b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) na[i] = row_norm(a, i);
    for (std::size_t j = 0; j < b.rows(); ++j) nb[j] = row_norm(b, j);
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j)
            out(i, j) = dot_rows(a, i, b, j) / (na[i] * nb[j] + kEpsNorm);
    return out;
}

inline void cosine_sim_backward(const Matrix& a, const Matrix& b,
                                const Matrix& upstream, Matrix& da, Matrix& db) {
    std::vector<double> na(a.rows()), nb(b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) na[i] = row_norm(a, i);
    for (std::size_t j = 0; j < b.rows(); ++j) nb[j] = row_norm(b, j);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double u = upstream(i, j);
            if (u == 0.0) continue;
            double denom = na[i] * nb[j] + kEpsNorm;
            double c = dot_rows(a, i, b, j) / denom;
            // unit rows; a zero row has zero direction and contributes nothing
            double inv_na = na[i] > 0.0 ? 1.0 / na[i] : 0.0;
            double inv_nb = nb[j] > 0.0 ? 1.0 / nb[j] : 0.0;
            for (std::size_t t = 0; t < a.cols(); ++t) {
                da(i, t) += u * (b(j, t) - c * nb[j] * a(i, t) * inv_na) / denom;
                db(j, t) += u * (a(i, t) - c * na[i] * b(j, t) * inv_nb) / denom;
            }
        }
    }
}

struct TargetDistribution {
    enum class Kind { Uniform, Identity, Labels };
    Kind kind = Kind::Uniform;
    std::vector<std::size_t> labels;

    static TargetDistribution uniform() { return {Kind::Uniform, {}}; }
    static TargetDistribution identity() { return {Kind::Identity, {}}; }
    static TargetDistribution of_labels(std::vector<std::size_t> l) {
        return {Kind::Labels, std::move(l)};
    }
};

inline void check_target(const ProbMatrix& pred, const TargetDistribution& target) {
    if (target.kind == TargetDistribution::Kind::Identity && pred.rows() != pred.cols())
        throw ShapeError("cross_entropy_to_target: identity target needs a square matrix");
    if (target.kind == TargetDistribution::Kind::Labels) {
        if (target.labels.size() != pred.rows())
            throw ShapeError("cross_entropy_to_target: one label per row required");
        for (std::size_t y : target.labels)
            if (y >= pred.cols())
                throw ShapeError("cross_entropy_to_target: label out of range");
    }
}

// Mean over rows of -sum_j target_j log(pred_j + eps).
inline double cross_entropy_to_target(const ProbMatrix& pred, const TargetDistribution& target) {
    check_target(pred, target);
    const std::size_t n = pred.rows(), k = pred.cols();
    double total = 0.0;
    switch (target.kind) {
    case TargetDistribution::Kind::Uniform:
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j)
                total -= std::log(pred(i, j) + kEpsLog) / static_cast<double>(k);
        break;
    case TargetDistribution::Kind::Identity:
        for (std::size_t i = 0; i < n; ++i)
            total -= std::log(pred(i, i) + kEpsLog);
        break;
    case TargetDistribution::Kind::Labels:
        for (std::size_t i = 0; i < n; ++i)
            total -= std::log(pred(i, target.labels[i]) + kEpsLog);
        break;
    }
    return total / static_cast<double>(n);
}

// d(ce)/d(pred), same shape as pred.
inline Matrix cross_entropy_backward(const ProbMatrix& pred, const TargetDistribution& target) {
    check_target(pred, target);
    const std::size_t n = pred.rows(), k = pred.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix out(n, k);
    switch (target.kind) {
    case TargetDistribution::Kind::Uniform:
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j)
                out(i, j) = -inv_n / (static_cast<double>(k) * (pred(i, j) + kEpsLog));
        break;
    case TargetDistribution::Kind::Identity:
        for (std::size_t i = 0; i < n; ++i)
            out(i, i) = -inv_n / (pred(i, i) + kEpsLog);
        break;
    case TargetDistribution::Kind::Labels:
        for (std::size_t i = 0; i < n; ++i)
            out(i, target.labels[i]) = -inv_n / (pred(i, target.labels[i]) + kEpsLog);
        break;
    }
    return out;
}

inline double frobenius_sq_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "frobenius_sq_diff");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return s;
}

// Determinant by LU decomposition with partial pivoting.
inline double lu_determinant(const Matrix& m) {
    if (m.rows() != m.cols())
        throw ShapeError("lu_determinant: square matrix required");
    const std::size_t n = m.rows();
    Matrix lu = m;
    double det = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(lu(r, col)) > std::fabs(lu(pivot, col))) pivot = r;
        if (lu(pivot, col) == 0.0) return 0.0;
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(pivot, j), lu(col, j));
            det = -det;
        }
        det *= lu(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = lu(r, col) / lu(col, col);
            for (std::size_t j = col; j < n; ++j) lu(r, j) -= f * lu(col, j);
        }
    }
    return det;
}

} // namespace grw
