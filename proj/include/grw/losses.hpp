#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "grw/linalg.hpp"
#include "grw/matrix.hpp"

namespace grw {

struct LossWeights {
    double lambda_cls = 1.0;
    double lambda_c = 1.0;
    double lambda_i = 1.0;
    double lambda_rd = 1.0;
    double lambda_rg = 1.0;
    double tau = 10.0;   // cosine-logit scale
    double gamma = 0.7;  // walk decay
    std::size_t walk_steps = 3;
    double sal_margin = 0.1;
    std::size_t sal_neighbors = 3;

    void validate() const {
        for (double w : {lambda_cls, lambda_c, lambda_i, lambda_rd, lambda_rg})
            if (!(w >= 0.0) || !std::isfinite(w))
                throw InvalidInputError("LossWeights: weights must be finite and >= 0");
        if (!(tau > 0.0)) throw InvalidInputError("LossWeights: tau must be > 0");
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw InvalidInputError("LossWeights: gamma must be in (0, 1]");
        if (!(sal_margin >= 0.0)) throw InvalidInputError("LossWeights: sal_margin must be >= 0");
        if (sal_neighbors < 1) throw InvalidInputError("LossWeights: sal_neighbors must be >= 1");
    }
};

namespace detail {

// cos(a_i, b_i) for row-aligned matrices.
inline std::vector<double> row_pair_cosine(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "row_pair_cosine");
    std::vector<double> out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        out[i] = dot_rows(a, i, b, i) / (row_norm(a, i) * row_norm(b, i) + kEpsNorm);
    return out;
}

// d(cos(a_i, b_i)) contributions for row i; adds u * grad into da_i and db_i.
inline void row_pair_cosine_backward(const Matrix& a, const Matrix& b, std::size_t i,
                                     double u, Matrix* da, Matrix* db) {
    double na = row_norm(a, i), nb = row_norm(b, i);
    double denom = na * nb + kEpsNorm;
    double c = dot_rows(a, i, b, i) / denom;
    double inv_na = na > 0.0 ? 1.0 / na : 0.0;
    double inv_nb = nb > 0.0 ? 1.0 / nb : 0.0;
    for (std::size_t t = 0; t < a.cols(); ++t) {
        if (da) (*da)(i, t) += u * (b(i, t) - c * nb * a(i, t) * inv_na) / denom;
        if (db) (*db)(i, t) += u * (a(i, t) - c * na * b(i, t) * inv_nb) / denom;
    }
}

// Maps a cosine similarity into the (0, 1] log domain.
inline double squash(double c) {
    return std::clamp((c + 1.0) / 2.0, kEpsLog, 1.0);
}

inline double squash_deriv(double c) {
    double s = (c + 1.0) / 2.0;
    return (s > kEpsLog && s < 1.0) ? 0.5 : 0.0;
}

} // namespace detail

// GAN real/fake term: mean log s(cos(real_i, emb_i)) - mean log s(cos(fake_i, emb_i)),
// where emb holds the embedded conditioning attribute of each row.
inline double real_fake_loss(const Matrix& real_x, const Matrix& fake_x, const Matrix& emb) {
    require_same_shape(real_x, emb, "real_fake_loss");
    require_same_shape(fake_x, emb, "real_fake_loss");
    auto real_cos = detail::row_pair_cosine(real_x, emb);
    auto fake_cos = detail::row_pair_cosine(fake_x, emb);
    double total = 0.0;
    for (std::size_t i = 0; i < real_cos.size(); ++i)
        total += std::log(detail::squash(real_cos[i])) - std::log(detail::squash(fake_cos[i]));
    return total / static_cast<double>(real_cos.size());
}

// Accumulates d(scale * loss) into d_fake and d_emb (the real batch is data).
inline void real_fake_backward(const Matrix& real_x, const Matrix& fake_x, const Matrix& emb,
                               double scale, Matrix* d_fake, Matrix* d_emb) {
    auto real_cos = detail::row_pair_cosine(real_x, emb);
    auto fake_cos = detail::row_pair_cosine(fake_x, emb);
    const double inv_n = 1.0 / static_cast<double>(real_cos.size());
    for (std::size_t i = 0; i < real_cos.size(); ++i) {
        double u_real = scale * inv_n * detail::squash_deriv(real_cos[i]) /
                        detail::squash(real_cos[i]);
        double u_fake = -scale * inv_n * detail::squash_deriv(fake_cos[i]) /
                        detail::squash(fake_cos[i]);
        if (u_real != 0.0)
            detail::row_pair_cosine_backward(real_x, emb, i, u_real, nullptr, d_emb);
        if (u_fake != 0.0)
            detail::row_pair_cosine_backward(fake_x, emb, i, u_fake, d_fake, d_emb);
    }
}

// Cross-entropy over temperature-scaled cosine logits against an embedded
// bank of one row per seen class so far.
struct ClassificationEval {
    double value = 0.0;
    ProbMatrix probs;
};

inline ClassificationEval classification_loss(const Matrix& x, const std::vector<std::size_t>& labels,
                                              const Matrix& emb_bank, double tau) {
    if (labels.size() != x.rows())
        throw ShapeError("classification_loss: one label per row required");
    for (std::size_t y : labels)
        if (y >= emb_bank.rows())
            throw InvalidLabelError("classification_loss: label " + std::to_string(y) +
                                    " out of range for " + std::to_string(emb_bank.rows()) +
                                    " classes");
    ClassificationEval eval;
    eval.probs = row_softmax(scaled(cosine_sim_matrix(x, emb_bank), tau));
    eval.value = cross_entropy_to_target(eval.probs, TargetDistribution::of_labels(labels));
    return eval;
}

inline void classification_backward(const ClassificationEval& eval, const Matrix& x,
                                    const std::vector<std::size_t>& labels,
                                    const Matrix& emb_bank, double tau, double scale,
                                    Matrix* d_x, Matrix* d_bank) {
    Matrix d_probs = scaled(
        cross_entropy_backward(eval.probs, TargetDistribution::of_labels(labels)), scale);
    Matrix d_cos = scaled(row_softmax_backward(eval.probs, d_probs), tau);
    Matrix dx_local(x.rows(), x.cols());
    Matrix db_local(emb_bank.rows(), emb_bank.cols());
    cosine_sim_backward(x, emb_bank, d_cos, dx_local, db_local);
    if (d_x) axpy(*d_x, dx_local, 1.0);
    if (d_bank) axpy(*d_bank, db_local, 1.0);
}

// KL(softmax of seen-class logits || uniform) averaged over hallucinated
// samples; zero exactly when every sample is equally close to all classes.
struct CreativityEval {
    double value = 0.0;
    ProbMatrix probs;
};

inline CreativityEval creativity_loss(const Matrix& fake_h, const Matrix& emb_bank, double tau) {
    if (emb_bank.rows() < 2)
        throw InsufficientClassesError("creativity_loss: need at least 2 seen classes");
    CreativityEval eval;
    eval.probs = row_softmax(scaled(cosine_sim_matrix(fake_h, emb_bank), tau));
    const std::size_t n = eval.probs.rows(), k = eval.probs.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
            total += eval.probs(i, j) *
                     std::log((eval.probs(i, j) + kEpsLog) * static_cast<double>(k));
    eval.value = total / static_cast<double>(n);
    return eval;
}

inline void creativity_backward(const CreativityEval& eval, const Matrix& fake_h,
                                const Matrix& emb_bank, double tau, double scale,
                                Matrix* d_fake_h, Matrix* d_bank) {
    const std::size_t n = eval.probs.rows(), k = eval.probs.cols();
    Matrix d_probs(n, k);
    const double inv_n = scale / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double p = eval.probs(i, j);
            d_probs(i, j) = inv_n * (std::log((p + kEpsLog) * static_cast<double>(k)) +
                                     p / (p + kEpsLog));
        }
    Matrix d_cos = scaled(row_softmax_backward(eval.probs, d_probs), tau);
    Matrix dx_local(fake_h.rows(), fake_h.cols());
    Matrix db_local(emb_bank.rows(), emb_bank.cols());
    cosine_sim_backward(fake_h, emb_bank, d_cos, dx_local, db_local);
    if (d_fake_h) axpy(*d_fake_h, dx_local, 1.0);
    if (d_bank) axpy(*d_bank, db_local, 1.0);
}

// ||D(A) - C||_F^2: keeps the embedded attributes near the real class centers.
inline double discriminator_regularizer(const Matrix& embedded_attrs,
                                        const Matrix& real_class_centers) {
    return frobenius_sq_diff(embedded_attrs, real_class_centers);
}

inline void discriminator_regularizer_backward(const Matrix& embedded_attrs,
                                               const Matrix& real_class_centers,
                                               double scale, Matrix& d_embedded) {
    for (std::size_t i = 0; i < embedded_attrs.size(); ++i)
        d_embedded.data()[i] +=
            scale * 2.0 * (embedded_attrs.data()[i] - real_class_centers.data()[i]);
}

// Attribute-cosine nearest neighbors of each class, self excluded.
inline std::vector<std::vector<std::size_t>> semantic_neighbor_sets(const Matrix& attrs,
                                                                    std::size_t k) {
    const std::size_t n = attrs.rows();
    if (k >= n)
        throw InvalidInputError("semantic_neighbor_sets: k must be < number of classes");
    Matrix sim = cosine_sim_matrix(attrs, attrs);
    std::vector<std::vector<std::size_t>> sets(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> order;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) order.push_back(j);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (sim(i, a) != sim(i, b)) return sim(i, a) > sim(i, b);
            return a < b;
        });
        sets[i].assign(order.begin(), order.begin() + k);
    }
    return sets;
}

struct GeneratorRegEval {
    double value = 0.0;   // nuclear + sal
    double nuclear = 0.0;
    double sal = 0.0;
};

// Nuclear term ||C_s - C_sg||_F^2 plus the bidirectional semantic alignment
// hinges: center cosines of each class against its attribute neighbors must
// stay within +-margin of the attribute cosines.
inline GeneratorRegEval generator_regularizer(const Matrix& real_centers,
                                              const Matrix& gen_centers, const Matrix& attrs,
                                              const LossWeights& weights) {
    require_same_shape(real_centers, gen_centers, "generator_regularizer");
    if (attrs.rows() != real_centers.rows())
        throw ShapeError("generator_regularizer: one attribute row per class required");
    GeneratorRegEval eval;
    eval.nuclear = frobenius_sq_diff(real_centers, gen_centers);

    auto neighbors = semantic_neighbor_sets(attrs, weights.sal_neighbors);
    Matrix attr_cos = cosine_sim_matrix(attrs, attrs);
    const std::size_t n = attrs.rows();
    double sal = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j : neighbors[i]) {
            double center_cos = dot_rows(real_centers, j, gen_centers, i) /
                                (row_norm(real_centers, j) * row_norm(gen_centers, i) + kEpsNorm);
            double upper = std::max(0.0, center_cos - (attr_cos(i, j) + weights.sal_margin));
            double lower = std::max(0.0, (attr_cos(i, j) - weights.sal_margin) - center_cos);
            sal += upper * upper + lower * lower;
        }
    }
    eval.sal = sal / static_cast<double>(n);
    eval.value = eval.nuclear + eval.sal;
    return eval;
}

inline void nuclear_backward(const Matrix& real_centers, const Matrix& gen_centers,
                             double scale, Matrix& d_gen_centers) {
    for (std::size_t i = 0; i < gen_centers.size(); ++i)
        d_gen_centers.data()[i] +=
            scale * 2.0 * (gen_centers.data()[i] - real_centers.data()[i]);
}

inline void semantic_alignment_backward(const Matrix& real_centers, const Matrix& gen_centers,
                                        const Matrix& attrs, const LossWeights& weights,
                                        double scale, Matrix& d_gen_centers) {
    auto neighbors = semantic_neighbor_sets(attrs, weights.sal_neighbors);
    Matrix attr_cos = cosine_sim_matrix(attrs, attrs);
    const std::size_t n = attrs.rows();
    const double inv_n = scale / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j : neighbors[i]) {
            double nr = row_norm(real_centers, j), ng = row_norm(gen_centers, i);
            double denom = nr * ng + kEpsNorm;
            double center_cos = dot_rows(real_centers, j, gen_centers, i) / denom;
            double upper = std::max(0.0, center_cos - (attr_cos(i, j) + weights.sal_margin));
            double lower = std::max(0.0, (attr_cos(i, j) - weights.sal_margin) - center_cos);
            double u = inv_n * (2.0 * upper - 2.0 * lower);
            if (u == 0.0) continue;
            double inv_ng = ng > 0.0 ? 1.0 / ng : 0.0;
            for (std::size_t t = 0; t < gen_centers.cols(); ++t)
                d_gen_centers(i, t) +=
                    u * (real_centers(j, t) - center_cos * nr * gen_centers(i, t) * inv_ng) /
                    denom;
        }
    }
}

inline void generator_regularizer_backward(const Matrix& real_centers, const Matrix& gen_centers,
                                           const Matrix& attrs, const LossWeights& weights,
                                           double scale, Matrix& d_gen_centers) {
    nuclear_backward(real_centers, gen_centers, scale, d_gen_centers);
    semantic_alignment_backward(real_centers, gen_centers, attrs, weights, scale,
                                d_gen_centers);
}

struct DiscriminatorLossParts {
    double real_fake = 0.0;
    double classification = 0.0;
    double regularizer = 0.0;
};

inline double compose_discriminator_loss(const DiscriminatorLossParts& p,
                                         const LossWeights& w) {
    return -p.real_fake + w.lambda_cls * p.classification + w.lambda_rd * p.regularizer;
}

struct GeneratorLossParts {
    double real_fake = 0.0;
    double classification = 0.0;
    double creativity = 0.0;
    double grw_loss = 0.0;
    double grw_reg = 0.0;
    double regularizer = 0.0;
};

inline double compose_generator_loss(const GeneratorLossParts& p, const LossWeights& w) {
    double inductive = w.lambda_c * p.creativity + w.lambda_i * p.grw_loss + w.lambda_i * p.grw_reg;
    return p.real_fake + w.lambda_cls * p.classification + inductive + w.lambda_rg * p.regularizer;
}

} // namespace grw
