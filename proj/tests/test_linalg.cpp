#include <catch2/catch.hpp>

#include <cmath>

#include "grw/linalg.hpp"
#include "grw/rng.hpp"

using namespace grw;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data()) v = scale * rng.normal();
    return m;
}

// Straight exp/normalize reimplementation, no max subtraction.
Matrix softmax_oracle(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(logits(i, j));
        for (std::size_t j = 0; j < logits.cols(); ++j)
            out(i, j) = std::exp(logits(i, j)) / sum;
    }
    return out;
}

} // namespace

TEST_CASE("row_softmax closed forms") {
    auto p = row_softmax(Matrix::from_rows({{0.0, 0.0, 0.0}}));
    for (std::size_t j = 0; j < 3; ++j)
        REQUIRE(p(0, j) == Approx(1.0 / 3.0).epsilon(1e-14));

    auto q = row_softmax(Matrix::from_rows({{std::log(2.0), 0.0}}));
    REQUIRE(q(0, 0) == Approx(2.0 / 3.0).epsilon(1e-14));
    REQUIRE(q(0, 1) == Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("row_softmax matches exp-normalize oracle") {
    Rng rng(11);
    Matrix logits = random_matrix(3, 4, rng, 2.0);
    auto p = row_softmax(logits);
    Matrix expected = softmax_oracle(logits);
    REQUIRE(max_abs_diff(p.inner(), expected) < 1e-12);
    for (std::size_t i = 0; i < 3; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 4; ++j) sum += p(i, j);
        REQUIRE(sum == Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("row_softmax survives extreme logits") {
    Matrix logits = Matrix::from_rows({{1e4, -1e4, 0.0}, {-1e4, -1e4, -1e4}});
    auto p = row_softmax(logits);
    for (std::size_t i = 0; i < 2; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            REQUIRE(std::isfinite(p(i, j)));
            sum += p(i, j);
        }
        REQUIRE(sum == Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("row_softmax rejects non-finite input") {
    Matrix bad = Matrix::from_rows({{1.0, std::nan("")}});
    REQUIRE_THROWS_AS(row_softmax(bad), InvalidInputError);
}

TEST_CASE("row_softmax is deterministic") {
    Rng rng(3);
    Matrix logits = random_matrix(4, 5, rng);
    auto a = row_softmax(logits);
    auto b = row_softmax(logits);
    REQUIRE(a.inner() == b.inner());
}

TEST_CASE("neg_sq_dist_matrix closed forms") {
    Matrix a = Matrix::from_rows({{0.0, 0.0}});
    Matrix b = Matrix::from_rows({{3.0, 4.0}});
    REQUIRE(neg_sq_dist_matrix(a, b)(0, 0) == Approx(-25.0));

    Rng rng(5);
    Matrix m = random_matrix(4, 3, rng);
    Matrix d = neg_sq_dist_matrix(m, m);
    for (std::size_t i = 0; i < 4; ++i) {
        REQUIRE(d(i, i) == 0.0);
        for (std::size_t j = 0; j < 4; ++j)
            REQUIRE(d(i, j) == Approx(d(j, i)).margin(1e-15));
    }
}

TEST_CASE("neg_sq_dist_matrix matches loop oracle") {
    Rng rng(7);
    Matrix a = random_matrix(4, 3, rng);
    Matrix b = random_matrix(5, 3, rng);
    Matrix d = neg_sq_dist_matrix(a, b);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < 3; ++t) {
                double diff = a(i, t) - b(j, t);
                s += diff * diff;
            }
            REQUIRE(d(i, j) == Approx(-s).margin(1e-12));
        }
    REQUIRE_THROWS_AS(neg_sq_dist_matrix(a, random_matrix(2, 4, rng)), ShapeError);
}

TEST_CASE("cosine_sim_matrix closed forms and oracle") {
    Matrix a = Matrix::from_rows({{1.0, 2.0, 0.0}});
    REQUIRE(cosine_sim_matrix(a, a)(0, 0) == Approx(1.0).margin(1e-9));

    Matrix u = Matrix::from_rows({{1.0, 0.0}});
    Matrix v = Matrix::from_rows({{0.0, 1.0}});
    REQUIRE(cosine_sim_matrix(u, v)(0, 0) == Approx(0.0).margin(1e-15));

    Rng rng(9);
    Matrix x = random_matrix(3, 5, rng);
    Matrix y = random_matrix(4, 5, rng);
    Matrix c = cosine_sim_matrix(x, y);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double dot = 0.0, nx = 0.0, ny = 0.0;
            for (std::size_t t = 0; t < 5; ++t) {
                dot += x(i, t) * y(j, t);
                nx += x(i, t) * x(i, t);
                ny += y(j, t) * y(j, t);
            }
            double expected = dot / (std::sqrt(nx) * std::sqrt(ny) + 1e-12);
            REQUIRE(c(i, j) == Approx(expected).margin(1e-12));
            REQUIRE(c(i, j) >= -1.0 - 1e-9);
            REQUIRE(c(i, j) <= 1.0 + 1e-9);
        }
    REQUIRE_THROWS_AS(cosine_sim_matrix(x, random_matrix(4, 6, rng)), ShapeError);
}

TEST_CASE("cosine_sim_matrix tolerates zero rows") {
    Matrix z = Matrix::from_rows({{0.0, 0.0}});
    Matrix v = Matrix::from_rows({{1.0, 1.0}});
    REQUIRE(cosine_sim_matrix(z, v)(0, 0) == 0.0);
}

TEST_CASE("cross_entropy_to_target closed forms") {
    auto half = ProbMatrix::adopt(Matrix::from_rows({{0.5, 0.5}}));
    REQUIRE(cross_entropy_to_target(half, TargetDistribution::uniform()) ==
            Approx(std::log(2.0)).margin(1e-9));

    auto eye = ProbMatrix::adopt(Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}));
    REQUIRE(cross_entropy_to_target(eye, TargetDistribution::identity()) ==
            Approx(0.0).margin(1e-9));

    auto p = ProbMatrix::adopt(Matrix::from_rows({{0.8, 0.2}}));
    REQUIRE(cross_entropy_to_target(p, TargetDistribution::of_labels({0})) ==
            Approx(-std::log(0.8)).margin(1e-9));
}

TEST_CASE("cross_entropy uniform floor") {
    Rng rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        auto p = row_softmax(random_matrix(3, 4, rng, 2.0));
        double ce = cross_entropy_to_target(p, TargetDistribution::uniform());
        REQUIRE(ce >= std::log(4.0) - 1e-9);
    }
    auto uni = ProbMatrix::adopt(Matrix(2, 4, 0.25));
    REQUIRE(cross_entropy_to_target(uni, TargetDistribution::uniform()) ==
            Approx(std::log(4.0)).margin(1e-9));
}

TEST_CASE("cross_entropy target mismatches are shape errors") {
    auto p = ProbMatrix::adopt(Matrix::from_rows({{0.5, 0.5}}));
    REQUIRE_THROWS_AS(cross_entropy_to_target(p, TargetDistribution::identity()), ShapeError);
    REQUIRE_THROWS_AS(cross_entropy_to_target(p, TargetDistribution::of_labels({2})), ShapeError);
    REQUIRE_THROWS_AS(cross_entropy_to_target(p, TargetDistribution::of_labels({0, 1})), ShapeError);
}

TEST_CASE("frobenius_sq_diff") {
    Matrix a = Matrix::from_rows({{1.0, 0.0}});
    REQUIRE(frobenius_sq_diff(a, a) == 0.0);
    REQUIRE(frobenius_sq_diff(a, Matrix::from_rows({{0.0, 1.0}})) == Approx(2.0));

    Rng rng(17);
    Matrix x = random_matrix(3, 4, rng);
    Matrix y = random_matrix(3, 4, rng);
    double expected = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x.data()[i] - y.data()[i];
        expected += d * d;
    }
    REQUIRE(frobenius_sq_diff(x, y) == Approx(expected).margin(1e-12));
    REQUIRE_THROWS_AS(frobenius_sq_diff(x, random_matrix(4, 3, rng)), ShapeError);
}

// Gradient micro-checks for the backward kernels: compare against central
// finite differences of a scalar probe sum(w .* f(x)).
namespace {

double fd_probe(const std::function<double()>& f, double& slot, double h = 1e-6) {
    double keep = slot;
    slot = keep + h;
    double up = f();
    slot = keep - h;
    double down = f();
    slot = keep;
    return (up - down) / (2.0 * h);
}

} // namespace

TEST_CASE("row_softmax_backward matches finite differences") {
    Rng rng(19);
    Matrix logits = random_matrix(3, 4, rng);
    Matrix w = random_matrix(3, 4, rng);
    auto probe = [&]() {
        auto p = row_softmax(logits);
        double s = 0.0;
        for (std::size_t i = 0; i < p.rows(); ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) s += w(i, j) * p(i, j);
        return s;
    };
    Matrix analytic = row_softmax_backward(row_softmax(logits), w);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double numeric = fd_probe(probe, logits.data()[i]);
        REQUIRE(analytic.data()[i] == Approx(numeric).margin(1e-7));
    }
}

TEST_CASE("neg_sq_dist_backward matches finite differences") {
    Rng rng(23);
    Matrix a = random_matrix(3, 2, rng);
    Matrix b = random_matrix(4, 2, rng);
    Matrix w = random_matrix(3, 4, rng);
    auto probe = [&]() {
        Matrix s = neg_sq_dist_matrix(a, b);
        double v = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) v += w.data()[i] * s.data()[i];
        return v;
    };
    Matrix da(3, 2), db(4, 2);
    neg_sq_dist_backward(a, b, w, da, db);
    for (std::size_t i = 0; i < a.size(); ++i)
        REQUIRE(da.data()[i] == Approx(fd_probe(probe, a.data()[i])).margin(1e-6));
    for (std::size_t i = 0; i < b.size(); ++i)
        REQUIRE(db.data()[i] == Approx(fd_probe(probe, b.data()[i])).margin(1e-6));
}

TEST_CASE("cosine_sim_backward matches finite differences") {
    Rng rng(29);
    Matrix a = random_matrix(3, 4, rng);
    Matrix b = random_matrix(2, 4, rng);
    Matrix w = random_matrix(3, 2, rng);
    auto probe = [&]() {
        Matrix c = cosine_sim_matrix(a, b);
        double v = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) v += w.data()[i] * c.data()[i];
        return v;
    };
    Matrix da(3, 4), db(2, 4);
    cosine_sim_backward(a, b, w, da, db);
    for (std::size_t i = 0; i < a.size(); ++i)
        REQUIRE(da.data()[i] == Approx(fd_probe(probe, a.data()[i])).margin(1e-6));
    for (std::size_t i = 0; i < b.size(); ++i)
        REQUIRE(db.data()[i] == Approx(fd_probe(probe, b.data()[i])).margin(1e-6));
}

TEST_CASE("lu_determinant basics") {
    REQUIRE(lu_determinant(identity(3)) == Approx(1.0));
    Matrix perm = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
    REQUIRE(lu_determinant(perm) == Approx(-1.0));
    Matrix rank1 = Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}});
    REQUIRE(lu_determinant(rank1) == Approx(0.0).margin(1e-15));
}
