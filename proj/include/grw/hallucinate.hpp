#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "grw/matrix.hpp"
#include "grw/rng.hpp"

namespace grw {

// Attribute vectors standing in for the unknown unseen classes, with the
// provenance needed to route gradients (dictionary picks) and to audit
// interpolations.
struct HallucinatedBatch {
    enum class Source { Interpolated, Dictionary };
    Matrix attributes; // N_h x d_a
    Source source = Source::Interpolated;
    std::vector<std::pair<std::size_t, std::size_t>> parent_pairs;
    std::vector<double> alphas;
    std::vector<std::size_t> indices; // dictionary entries picked per row
};

// Blend of two distinct seen attributes with alpha ~ U(0.2, 0.8); the bounds
// keep the result away from both parents.
inline HallucinatedBatch interpolate_attributes(const Matrix& seen_attrs, std::size_t n,
                                                Rng& rng) {
    if (seen_attrs.rows() < 2)
        throw InsufficientClassesError("interpolate_attributes: need at least 2 seen classes");
    HallucinatedBatch batch;
    batch.source = HallucinatedBatch::Source::Interpolated;
    batch.attributes = Matrix(n, seen_attrs.cols());
    batch.parent_pairs.reserve(n);
    batch.alphas.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t a = rng.index(seen_attrs.rows());
        std::size_t b = rng.index(seen_attrs.rows() - 1);
        if (b >= a) ++b;
        double alpha = rng.uniform(0.2, 0.8);
        for (std::size_t t = 0; t < seen_attrs.cols(); ++t)
            batch.attributes(i, t) =
                alpha * seen_attrs(a, t) + (1.0 - alpha) * seen_attrs(b, t);
        batch.parent_pairs.emplace_back(a, b);
        batch.alphas.push_back(alpha);
    }
    return batch;
}

// Learnable pool of hallucinated attributes, one entry per seen class at
// (re)initialization. Updated by plain gradient steps on the generator loss.
struct AttributeDictionary {
    Matrix entries; // N_dict x d_a
    Matrix grad;    // accumulated, same shape

    std::size_t size() const { return entries.rows(); }

    void zero_grad() { grad.fill(0.0); }

    void apply_sgd(double lr) {
        axpy(entries, grad, -lr);
        grad.fill(0.0);
        if (!entries.all_finite())
            throw NumericError("AttributeDictionary: entries became non-finite");
    }
};

inline AttributeDictionary dictionary_init(const Matrix& seen_attrs, Rng& rng) {
    HallucinatedBatch seeded = interpolate_attributes(seen_attrs, seen_attrs.rows(), rng);
    AttributeDictionary dict;
    dict.entries = std::move(seeded.attributes);
    dict.grad = Matrix(dict.entries.rows(), dict.entries.cols());
    return dict;
}

inline HallucinatedBatch dictionary_sample(const AttributeDictionary& dict, std::size_t n,
                                           Rng& rng) {
    if (dict.size() == 0)
        throw StateError("dictionary_sample: dictionary not initialized");
    HallucinatedBatch batch;
    batch.source = HallucinatedBatch::Source::Dictionary;
    batch.attributes = Matrix(n, dict.entries.cols());
    batch.indices.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pick = rng.index(dict.size());
        batch.indices.push_back(pick);
        for (std::size_t t = 0; t < dict.entries.cols(); ++t)
            batch.attributes(i, t) = dict.entries(pick, t);
    }
    return batch;
}

// Scatter per-row attribute gradients back onto the picked entries.
inline void dictionary_accumulate(AttributeDictionary& dict, const HallucinatedBatch& batch,
                                  const Matrix& d_attributes) {
    if (batch.source != HallucinatedBatch::Source::Dictionary)
        throw StateError("dictionary_accumulate: batch was not drawn from the dictionary");
    require_same_shape(batch.attributes, d_attributes, "dictionary_accumulate");
    for (std::size_t i = 0; i < batch.indices.size(); ++i)
        for (std::size_t t = 0; t < dict.entries.cols(); ++t)
            dict.grad(batch.indices[i], t) += d_attributes(i, t);
}

} // namespace grw
