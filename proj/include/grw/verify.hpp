#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "grw/config.hpp"
#include "grw/svg.hpp"
#include "grw/trainer.hpp"
#include "grw/walk.hpp"

namespace grw {

// --- gradient oracle ---------------------------------------------------------
//
// Each named loss is expressed as a deterministic scalar function of the
// network parameters (noise and data fixed) and its analytic gradients are
// compared against central finite differences. Sizes follow the verification
// contract: d_a=4, d_x=8, hidden=8, N_s=3, N_h=5, R=3.

struct GradCheckCase {
    std::string loss;
    double max_rel_error = 0.0;
};

namespace gradcheck {

struct Scenario {
    TwoLayerNet g, d;
    StepContext ctx;
    std::size_t n = 6;   // batch rows
    std::size_t d_x = 8;
    std::size_t d_a = 4;
};

// Central differences are only meaningful where the loss is differentiable;
// an instance whose forward pass sits on a LeakyReLU kink or a hinge corner
// is rejected and redrawn.
inline bool fd_safe(const Scenario& s) {
    const double margin = 1e-3;
    auto min_abs_pre1 = [&](const TwoLayerNet& net, const Matrix& in) {
        Matrix pre = matmul(in, net.w1);
        double worst = 1e300;
        for (std::size_t i = 0; i < pre.rows(); ++i)
            for (std::size_t j = 0; j < pre.cols(); ++j)
                worst = std::min(worst, std::fabs(pre(i, j) + net.b1(0, j)));
        return worst;
    };
    const StepContext& ctx = s.ctx;
    if (min_abs_pre1(s.d, ctx.attr_bank) < margin) return false;
    if (min_abs_pre1(s.g, detail::with_noise(ctx.attr_rows, ctx.z_sg)) < margin) return false;
    if (min_abs_pre1(s.g, detail::with_noise(ctx.halluc_attrs, ctx.z_h)) < margin)
        return false;
    Matrix center_in = detail::with_noise(
        detail::repeat_rows(ctx.attr_bank, ctx.center_samples), ctx.z_center);
    if (min_abs_pre1(s.g, center_in) < margin) return false;

    // semantic alignment hinge corners on the generated centers
    Matrix out = forward(s.g, center_in);
    const std::size_t m = ctx.center_samples;
    Matrix centers(ctx.attr_bank.rows(), out.cols());
    for (std::size_t c = 0; c < centers.rows(); ++c)
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t t = 0; t < out.cols(); ++t)
                centers(c, t) += out(c * m + k, t) / static_cast<double>(m);
    Matrix cur = take_rows(centers, ctx.cur_bank_rows);
    Matrix attr_cos = cosine_sim_matrix(ctx.attrs_cur, ctx.attrs_cur);
    auto neighbors = semantic_neighbor_sets(ctx.attrs_cur, ctx.weights.sal_neighbors);
    for (std::size_t i = 0; i < neighbors.size(); ++i)
        for (std::size_t j : neighbors[i]) {
            double center_cos =
                dot_rows(ctx.real_centers_cur, j, cur, i) /
                (row_norm(ctx.real_centers_cur, j) * row_norm(cur, i) + kEpsNorm);
            double upper = center_cos - (attr_cos(i, j) + ctx.weights.sal_margin);
            double lower = (attr_cos(i, j) - ctx.weights.sal_margin) - center_cos;
            if (std::fabs(upper) < margin || std::fabs(lower) < margin) return false;
        }
    return true;
}

inline Scenario make_scenario(std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Scenario s;
        Rng rng(seed + 7919 * attempt);
        s.g = make_net(s.d_a + s.d_a, 8, s.d_x, rng);
        s.d = make_net(s.d_a, 8, s.d_x, rng);

        auto rand_mat = [&](std::size_t r, std::size_t c, double scale) {
            Matrix m(r, c);
            for (double& v : m.data()) v = scale * rng.normal();
            return m;
        };
        StepContext& ctx = s.ctx;
        ctx.attr_bank = rand_mat(3, s.d_a, 1.0);
        ctx.bank_rows = {0, 1, 2, 0, 1, 2};
        ctx.rf_rows = {0, 1, 2, 3, 4, 5};
        ctx.attr_rows = take_rows(ctx.attr_bank, ctx.bank_rows);
        ctx.real_x = rand_mat(s.n, s.d_x, 1.0);
        ctx.real_centers_all = rand_mat(3, s.d_x, 1.0);
        ctx.cur_bank_rows = {0, 1, 2};
        ctx.real_centers_cur = ctx.real_centers_all;
        ctx.attrs_cur = ctx.attr_bank;
        ctx.halluc_attrs = rand_mat(5, s.d_a, 1.0);
        ctx.center_samples = 2;
        ctx.z_sg = rand_mat(s.n, s.d_a, 1.0);
        ctx.z_h = rand_mat(5, s.d_a, 1.0);
        ctx.z_center = rand_mat(3 * ctx.center_samples, s.d_a, 1.0);
        ctx.z_sg_d = rand_mat(s.n, s.d_a, 1.0);
        ctx.z_center_d = rand_mat(3 * ctx.center_samples, s.d_a, 1.0);
        ctx.weights = LossWeights{};
        ctx.weights.tau = 5.0;
        ctx.weights.gamma = 0.7;
        ctx.weights.walk_steps = 3;
        ctx.weights.sal_neighbors = 2;
        ctx.weights.sal_margin = 0.05;
        if (fd_safe(s)) return s;
    }
}

// Runs `compute` as a pure value under finite differences of each requested
// net and as a backward pass for the analytic gradients.
struct TapePair {
    GradTape* g = nullptr;
    GradTape* d = nullptr;
};

// Finite-difference noise for these losses (|loss| up to ~10, h = 1e-5) is
// of order 1e-10; gradients below 1e-9 on both sides are structural zeros.
inline constexpr double kFdZeroFloor = 1e-9;

template <typename Fn>
double check_nets(Scenario& s, bool wrt_g, bool wrt_d, Fn&& compute) {
    auto loss_fn = [&]() { return compute(TapePair{}); };
    double worst = 0.0;
    if (wrt_g) {
        GradTape tape;
        auto grad_fn = [&]() {
            tape.ensure_grad_shapes(s.g);
            tape.zero_grads();
            compute(TapePair{&tape, nullptr});
            return snapshot_grads(tape);
        };
        worst = std::max(worst, finite_diff_check(s.g, loss_fn, grad_fn, 1e-5, kFdZeroFloor));
    }
    if (wrt_d) {
        GradTape tape;
        auto grad_fn = [&]() {
            tape.ensure_grad_shapes(s.d);
            tape.zero_grads();
            compute(TapePair{nullptr, &tape});
            return snapshot_grads(tape);
        };
        worst = std::max(worst, finite_diff_check(s.d, loss_fn, grad_fn, 1e-5, kFdZeroFloor));
    }
    return worst;
}

// Generator forward over [halluc | center block] with per-class mean centers;
// shared by the walk and regularizer cases.
struct GenPieces {
    Matrix out;
    Matrix samples;     // leading rows
    Matrix centers;     // per-class means of the trailing block
    std::size_t lead = 0;
};

inline GenPieces gen_with_centers(Scenario& s, const Matrix& lead_attrs, const Matrix& lead_z,
                                  GradTape* tape) {
    GenPieces p;
    p.lead = lead_attrs.rows();
    Matrix in = concat_rows(
        detail::with_noise(lead_attrs, lead_z),
        detail::with_noise(detail::repeat_rows(s.ctx.attr_bank, s.ctx.center_samples),
                           s.ctx.z_center));
    p.out = forward(s.g, in, tape);
    p.samples = slice_rows(p.out, 0, p.lead);
    const std::size_t m = s.ctx.center_samples;
    p.centers = Matrix(s.ctx.attr_bank.rows(), p.out.cols());
    for (std::size_t c = 0; c < p.centers.rows(); ++c)
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t t = 0; t < p.out.cols(); ++t)
                p.centers(c, t) += p.out(p.lead + c * m + k, t) / static_cast<double>(m);
    return p;
}

inline void backprop_pieces(Scenario& s, GenPieces& p, const Matrix& d_samples,
                            const Matrix& d_centers, GradTape* tape) {
    const std::size_t m = s.ctx.center_samples;
    Matrix d_out(p.out.rows(), p.out.cols());
    for (std::size_t i = 0; i < p.lead; ++i)
        for (std::size_t t = 0; t < d_out.cols(); ++t) d_out(i, t) = d_samples(i, t);
    for (std::size_t c = 0; c < d_centers.rows(); ++c)
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t t = 0; t < d_out.cols(); ++t)
                d_out(p.lead + c * m + k, t) = d_centers(c, t) / static_cast<double>(m);
    backward(s.g, *tape, d_out);
}

inline double case_real_fake(Scenario& s) {
    return check_nets(s, true, true, [&](TapePair tapes) {
        Matrix bank = forward(s.d, s.ctx.attr_bank, tapes.d);
        Matrix emb = take_rows(bank, s.ctx.bank_rows);
        Matrix fake =
            forward(s.g, detail::with_noise(s.ctx.attr_rows, s.ctx.z_sg), tapes.g);
        double loss = real_fake_loss(s.ctx.real_x, fake, emb);
        if (tapes.g) {
            Matrix d_fake(fake.rows(), fake.cols());
            real_fake_backward(s.ctx.real_x, fake, emb, 1.0, &d_fake, nullptr);
            backward(s.g, *tapes.g, d_fake);
        }
        if (tapes.d) {
            Matrix d_emb(emb.rows(), emb.cols());
            real_fake_backward(s.ctx.real_x, fake, emb, 1.0, nullptr, &d_emb);
            Matrix d_bank(bank.rows(), bank.cols());
            for (std::size_t i = 0; i < s.ctx.bank_rows.size(); ++i)
                for (std::size_t t = 0; t < d_bank.cols(); ++t)
                    d_bank(s.ctx.bank_rows[i], t) += d_emb(i, t);
            backward(s.d, *tapes.d, d_bank);
        }
        return loss;
    });
}

inline double case_classification(Scenario& s) {
    return check_nets(s, true, true, [&](TapePair tapes) {
        Matrix bank = forward(s.d, s.ctx.attr_bank, tapes.d);
        Matrix fake =
            forward(s.g, detail::with_noise(s.ctx.attr_rows, s.ctx.z_sg), tapes.g);
        auto eval = classification_loss(fake, s.ctx.bank_rows, bank, s.ctx.weights.tau);
        if (tapes.g || tapes.d) {
            Matrix d_x(fake.rows(), fake.cols());
            Matrix d_bank(bank.rows(), bank.cols());
            classification_backward(eval, fake, s.ctx.bank_rows, bank, s.ctx.weights.tau,
                                    1.0, &d_x, &d_bank);
            if (tapes.g) backward(s.g, *tapes.g, d_x);
            if (tapes.d) backward(s.d, *tapes.d, d_bank);
        }
        return eval.value;
    });
}

inline double case_creativity(Scenario& s) {
    return check_nets(s, true, true, [&](TapePair tapes) {
        Matrix bank = forward(s.d, s.ctx.attr_bank, tapes.d);
        Matrix fake_h =
            forward(s.g, detail::with_noise(s.ctx.halluc_attrs, s.ctx.z_h), tapes.g);
        auto eval = creativity_loss(fake_h, bank, s.ctx.weights.tau);
        if (tapes.g || tapes.d) {
            Matrix d_x(fake_h.rows(), fake_h.cols());
            Matrix d_bank(bank.rows(), bank.cols());
            creativity_backward(eval, fake_h, bank, s.ctx.weights.tau, 1.0, &d_x, &d_bank);
            if (tapes.g) backward(s.g, *tapes.g, d_x);
            if (tapes.d) backward(s.d, *tapes.d, d_bank);
        }
        return eval.value;
    });
}

inline double case_grw(Scenario& s, const TargetDistribution& target) {
    const Matrix& lead_attrs = target.kind == TargetDistribution::Kind::Uniform
                                   ? s.ctx.halluc_attrs
                                   : s.ctx.attr_rows;
    const Matrix& lead_z =
        target.kind == TargetDistribution::Kind::Uniform ? s.ctx.z_h : s.ctx.z_sg;
    return check_nets(s, true, false, [&](TapePair tapes) {
        GenPieces p = gen_with_centers(s, lead_attrs, lead_z, tapes.g);
        TransitionTriple trip = build_transitions(p.centers, p.samples);
        WalkResult walk = walk_landing(trip, s.ctx.weights.walk_steps);
        double loss = grw_objective(walk, target, s.ctx.weights.gamma);
        if (tapes.g) {
            WalkGrad wg = grw_backward(trip, walk, target, s.ctx.weights.gamma, 1.0);
            backprop_pieces(s, p, wg.d_samples, wg.d_centers, tapes.g);
        }
        return loss;
    });
}

inline double case_nuclear(Scenario& s) {
    return check_nets(s, true, false, [&](TapePair tapes) {
        GenPieces p = gen_with_centers(s, s.ctx.halluc_attrs, s.ctx.z_h, tapes.g);
        Matrix cur = take_rows(p.centers, s.ctx.cur_bank_rows);
        double loss = frobenius_sq_diff(s.ctx.real_centers_cur, cur);
        if (tapes.g) {
            Matrix d_cur(cur.rows(), cur.cols());
            nuclear_backward(s.ctx.real_centers_cur, cur, 1.0, d_cur);
            Matrix d_centers(p.centers.rows(), p.centers.cols());
            for (std::size_t i = 0; i < s.ctx.cur_bank_rows.size(); ++i)
                for (std::size_t t = 0; t < d_centers.cols(); ++t)
                    d_centers(s.ctx.cur_bank_rows[i], t) += d_cur(i, t);
            backprop_pieces(s, p, Matrix(p.lead, p.out.cols()), d_centers, tapes.g);
        }
        return loss;
    });
}

inline double case_semantic_alignment(Scenario& s) {
    return check_nets(s, true, false, [&](TapePair tapes) {
        GenPieces p = gen_with_centers(s, s.ctx.halluc_attrs, s.ctx.z_h, tapes.g);
        Matrix cur = take_rows(p.centers, s.ctx.cur_bank_rows);
        double loss = generator_regularizer(s.ctx.real_centers_cur, cur, s.ctx.attrs_cur,
                                            s.ctx.weights)
                          .sal;
        if (tapes.g) {
            Matrix d_cur(cur.rows(), cur.cols());
            semantic_alignment_backward(s.ctx.real_centers_cur, cur, s.ctx.attrs_cur,
                                        s.ctx.weights, 1.0, d_cur);
            Matrix d_centers(p.centers.rows(), p.centers.cols());
            for (std::size_t i = 0; i < s.ctx.cur_bank_rows.size(); ++i)
                for (std::size_t t = 0; t < d_centers.cols(); ++t)
                    d_centers(s.ctx.cur_bank_rows[i], t) += d_cur(i, t);
            backprop_pieces(s, p, Matrix(p.lead, p.out.cols()), d_centers, tapes.g);
        }
        return loss;
    });
}

inline double case_composed_d(Scenario& s) {
    // generated samples are detached in the discriminator step, so the loss
    // is a function of D's parameters only
    return check_nets(s, false, true, [&](TapePair tapes) {
        return discriminator_step_loss(s.d, tapes.d, s.g, s.ctx);
    });
}

inline double case_composed_g(Scenario& s) {
    return check_nets(s, true, false, [&](TapePair tapes) {
        return generator_step_loss(s.g, tapes.g, s.d, s.ctx).loss;
    });
}

} // namespace gradcheck

inline std::vector<GradCheckCase> run_gradient_checks(std::size_t instances,
                                                      std::uint64_t seed0) {
    std::vector<GradCheckCase> cases = {
        {"real_fake"}, {"classification"}, {"creativity"},      {"grw_uniform"},
        {"grw_identity"}, {"nuclear"},     {"semantic_alignment"}, {"composed_L_D"},
        {"composed_L_G"},
    };
    for (std::size_t i = 0; i < instances; ++i) {
        gradcheck::Scenario s = gradcheck::make_scenario(seed0 + i);
        double errs[] = {
            gradcheck::case_real_fake(s),
            gradcheck::case_classification(s),
            gradcheck::case_creativity(s),
            gradcheck::case_grw(s, TargetDistribution::uniform()),
            gradcheck::case_grw(s, TargetDistribution::identity()),
            gradcheck::case_nuclear(s),
            gradcheck::case_semantic_alignment(s),
            gradcheck::case_composed_d(s),
            gradcheck::case_composed_g(s),
        };
        for (std::size_t c = 0; c < cases.size(); ++c)
            cases[c].max_rel_error = std::max(cases[c].max_rel_error, errs[c]);
    }
    return cases;
}

// --- property suites ---------------------------------------------------------

struct SuiteResult {
    std::string name;
    bool passed = true;
    std::string detail;
};

struct VerifyOptions {
    bool flip_walk_backward_sign = false; // mutation hook for the harness test
    std::size_t gradient_instances = 20;
};

namespace verify_detail {

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) sum += a(i, k) * b(k, j);
            out(i, j) = sum;
        }
    return out;
}

inline SuiteResult gradient_suite(const VerifyOptions& options) {
    SuiteResult result{"gradient", true, ""};
    testing::flip_walk_backward_sign = options.flip_walk_backward_sign;
    auto cases = run_gradient_checks(options.gradient_instances, 20250);
    testing::flip_walk_backward_sign = false;
    double worst = 0.0;
    std::string worst_name;
    for (const auto& c : cases) {
        if (c.max_rel_error > worst) {
            worst = c.max_rel_error;
            worst_name = c.loss;
        }
        if (c.max_rel_error >= 1e-4) result.passed = false;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "max rel err %.3e (%s)", worst, worst_name.c_str());
    result.detail = buf;
    return result;
}

inline SuiteResult walk_oracle_suite() {
    SuiteResult result{"walk_oracle", true, ""};
    Rng rng(777);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        std::size_t n_s = 2 + rng.index(3);  // <= 4
        std::size_t n_h = 2 + rng.index(5);  // <= 6
        std::size_t steps = rng.index(6);    // <= 5
        Matrix centers(n_s, 3), samples(n_h, 3);
        for (double& v : centers.data()) v = rng.normal();
        for (double& v : samples.data()) v = rng.normal();
        TransitionTriple trip = build_transitions(centers, samples);
        WalkResult walk = walk_landing(trip, steps);

        for (std::size_t i = 0; i < n_h; ++i)
            if (trip.p_xx(i, i) > 1e-6) result.passed = false;

        for (std::size_t r = 0; r <= steps; ++r) {
            Matrix expected = trip.p_cx.inner();
            for (std::size_t k = 0; k < r; ++k)
                expected = naive_matmul(expected, trip.p_xx.inner());
            expected = naive_matmul(expected, trip.p_xc.inner());
            worst = std::max(worst, max_abs_diff(walk.landings[r].inner(), expected));
            for (std::size_t i = 0; i < n_s; ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < n_s; ++j) sum += walk.landings[r](i, j);
                if (std::fabs(sum - 1.0) > 1e-9) result.passed = false;
            }
        }
    }
    if (worst >= 1e-12) result.passed = false;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max landing deviation %.3e", worst);
    result.detail = buf;
    return result;
}

inline SuiteResult entropy_floor_suite() {
    SuiteResult result{"entropy_floor", true, ""};
    Rng rng(888);
    for (int rep = 0; rep < 50; ++rep) {
        std::size_t n_s = 2 + rng.index(3);
        std::size_t n_h = 2 + rng.index(5);
        std::size_t steps = rng.index(4);
        Matrix centers(n_s, 4), samples(n_h, 4);
        for (double& v : centers.data()) v = rng.normal();
        for (double& v : samples.data()) v = rng.normal();
        WalkResult walk = walk_landing(build_transitions(centers, samples), steps);
        double gamma = 0.7;
        double value = grw_objective(walk, TargetDistribution::uniform(), gamma);
        double floor = std::log(static_cast<double>(n_h));
        double decay = 1.0;
        for (std::size_t r = 0; r <= steps; ++r) {
            floor += decay * std::log(static_cast<double>(n_s));
            decay *= gamma;
        }
        if (value < floor - 1e-9) result.passed = false;

        // forced-uniform equality
        WalkResult uniform;
        for (std::size_t r = 0; r <= steps; ++r)
            uniform.landings.push_back(
                ProbMatrix::adopt(Matrix(n_s, n_s, 1.0 / static_cast<double>(n_s))));
        uniform.visit = Matrix(1, n_h, 1.0 / static_cast<double>(n_h));
        double attained = grw_objective(uniform, TargetDistribution::uniform(), gamma);
        if (std::fabs(attained - floor) > 1e-9) result.passed = false;
    }
    result.detail = "floor and equality over 50 random instances";
    return result;
}

inline SuiteResult replay_balance_suite() {
    SuiteResult result{"replay_balance", true, ""};
    Rng meta(999);
    for (int rep = 0; rep < 50 && result.passed; ++rep) {
        std::size_t budget = std::vector<std::size_t>{7, 10, 100}[meta.index(3)];
        ReplayBuffer buf(budget, ReplayBuffer::Mode::Real);
        Rng rng(5000 + rep);
        std::size_t next_class = 0;
        std::size_t tasks = 2 + meta.index(3);
        for (std::size_t t = 0; t < tasks; ++t) {
            TaskData task;
            std::size_t classes = 1 + meta.index(4);
            std::size_t per_class = budget + meta.index(25);
            task.features = Matrix(classes * per_class, 3);
            for (double& v : task.features.data()) v = rng.normal();
            task.class_attrs = Matrix(classes, 2);
            for (double& v : task.class_attrs.data()) v = rng.normal();
            for (std::size_t c = 0; c < classes; ++c) {
                task.class_ids.push_back(next_class);
                for (std::size_t i = 0; i < per_class; ++i)
                    task.labels.push_back(next_class);
                ++next_class;
            }
            buf.end_of_task_update(task, rng);
            if (buf.total_stored() > budget) result.passed = false;
            auto counts = buf.per_class_counts();
            std::size_t lo = budget, hi = 0;
            for (auto [cls, n] : counts) {
                lo = std::min(lo, n);
                hi = std::max(hi, n);
            }
            if (!counts.empty() && hi - lo > 1) result.passed = false;
        }
    }

    // quota example: B=10, four classes -> 3,3,2,2
    ReplayBuffer buf(10, ReplayBuffer::Mode::Real);
    Rng rng(6000);
    TaskData task;
    task.features = Matrix(4 * 20, 3);
    for (double& v : task.features.data()) v = rng.normal();
    task.class_attrs = Matrix(4, 2);
    for (std::size_t c = 0; c < 4; ++c) {
        task.class_ids.push_back(c);
        for (int i = 0; i < 20; ++i) task.labels.push_back(c);
    }
    buf.end_of_task_update(task, rng);
    auto counts = buf.per_class_counts();
    if (!(counts[0] == 3 && counts[1] == 3 && counts[2] == 2 && counts[3] == 2))
        result.passed = false;
    result.detail = "50 random sequences, quota example 3,3,2,2";
    return result;
}

inline SuiteResult metrics_suite() {
    SuiteResult result{"metrics", true, ""};
    if (harmonic_mean(0.6, 0.3) != 0.4) result.passed = false;
    if (harmonic_mean(0.0, 0.0) != 0.0) result.passed = false;

    StreamReport nf;
    nf.seen_acc = {0.5, 0.6, 0.7};
    nf.unseen_acc = {0.4, 0.3};
    nf.seen_matrix = {{0.5}, {0.5, 0.6}, {0.5, 0.6, 0.7}};
    aggregate_metrics(nf);
    if (std::fabs(nf.bwt) > 1e-15) result.passed = false;

    StreamReport two;
    two.seen_acc = {0.5, 0.6};
    two.unseen_acc = {0.5};
    two.seen_matrix = {{0.5}, {0.5, 0.6}};
    aggregate_metrics(two);
    if (std::fabs(two.msa - 0.55) > 1e-15) result.passed = false;
    if (std::fabs(two.mua - 0.5) > 1e-15) result.passed = false;
    if (std::fabs(two.mha - 0.5) > 1e-15) result.passed = false;
    result.detail = "harmonic mean, BWT, hand-aggregated example";
    return result;
}

inline TrainerConfig mini_benchmark_config(std::uint64_t seed) {
    TrainerConfig config;
    config.epochs = 8;
    config.batch_size = 32;
    config.g_hidden = 32;
    config.d_hidden = 32;
    config.buffer_capacity = 200;
    config.weights.walk_steps = 3;
    config.seed = seed;
    return config;
}

inline SyntheticSpec mini_benchmark_spec() {
    SyntheticSpec spec;
    spec.n_classes = 12;
    spec.attr_dim = 8;
    spec.feature_dim = 16;
    spec.samples_per_class = 30;
    spec.noise_sigma = 0.3;
    return spec;
}

inline SuiteResult determinism_suite() {
    SuiteResult result{"determinism", true, ""};
    Rng data_rng(31);
    auto synth = generate_synthetic(mini_benchmark_spec(), data_rng);
    TaskSchedule schedule = build_static_schedule(12, 3);
    auto run = [&]() {
        TrainerState state = make_trainer(mini_benchmark_config(2222), 8, 16);
        StreamReport report = train_task_stream(state, synth.data, schedule, 2);
        return summary_json_string(report, 1, 2222);
    };
    std::string a = run();
    std::string b = run();
    if (a != b) result.passed = false;
    result.detail = "two identical seeded runs, byte-identical summary";
    return result;
}

inline SuiteResult gdb_correlation_suite() {
    SuiteResult result{"gdb_correlation", true, ""};
    // benchmark-scale stream; smaller worlds bury the effect in noise
    SyntheticSpec spec;
    spec.n_classes = 20;
    spec.attr_dim = 16;
    spec.feature_dim = 32;
    spec.samples_per_class = 100;
    spec.noise_sigma = 0.3;
    Rng data_rng(1234);
    auto synth = generate_synthetic(spec, data_rng);
    TaskSchedule schedule = build_static_schedule(20, 5);
    TrainerConfig config;
    config.epochs = 6;
    config.batch_size = 64;
    config.g_hidden = 64;
    config.d_hidden = 64;
    config.buffer_capacity = 5000;
    config.seed = 2222;
    TrainerState state = make_trainer(config, 16, 32);
    StreamReport report = train_task_stream(state, synth.data, schedule, 6);
    std::vector<double> grw, gdb;
    for (const GdbPoint& p : report.gdb_trace) {
        grw.push_back(p.grw_loss);
        gdb.push_back(p.gdb);
    }
    LinearFit fit = linear_fit(grw, gdb);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "pearson r = %.3f over %zu points", fit.pearson_r,
                  grw.size());
    result.detail = buf;
    if (!(fit.pearson_r > 0.1)) result.passed = false;
    return result;
}

inline SuiteResult inductive_suite() {
    SuiteResult result{"inductive", true, ""};
    Rng data_rng(33);
    SyntheticSpec spec = mini_benchmark_spec();
    spec.samples_per_class = 12;
    auto synth = generate_synthetic(spec, data_rng);
    TaskSchedule schedule = build_static_schedule(12, 3);
    TrainerConfig config = mini_benchmark_config(2222);
    config.epochs = 1;
    TrainerState state = make_trainer(config, 8, 16);

    TrainerPhase phase = TrainerPhase::Training;
    state.phase_hook = [&](TrainerPhase p) { phase = p; };
    std::vector<std::size_t> row_class(synth.data.n_samples());
    for (std::size_t i = 0; i < synth.data.n_samples(); ++i)
        row_class[i] = synth.data.label(i);

    std::size_t current_task = 0;
    std::size_t violations = 0;
    synth.data.set_access_probe([&](DataAccess kind, std::size_t idx) {
        if (phase == TrainerPhase::Evaluation) return;
        std::size_t cls = kind == DataAccess::FeatureRow ? row_class[idx] : idx;
        auto seen = schedule.seen_through(current_task);
        if (std::find(seen.begin(), seen.end(), cls) == seen.end()) ++violations;
    });

    for (std::size_t t = 0; t < 3; ++t) {
        current_task = t;
        TaskRuntime rt = build_task_runtime(state, synth.data, schedule, t);
        train_epoch(state, rt);
        TaskData task_data;
        task_data.features = rt.task_features;
        task_data.labels = rt.task_labels;
        task_data.class_ids = rt.cur_classes;
        task_data.class_attrs = rt.attrs_cur;
        state.buffer.end_of_task_update(task_data, state.rng);
        evaluate_task(state, synth.data, schedule, t);
        phase = TrainerPhase::Training;
    }
    synth.data.clear_access_probe();
    if (violations != 0) result.passed = false;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu unseen reads during training", violations);
    result.detail = buf;
    return result;
}

} // namespace verify_detail

inline std::vector<SuiteResult> run_verify_suites(const VerifyOptions& options = {}) {
    std::vector<SuiteResult> results;
    results.push_back(verify_detail::gradient_suite(options));
    results.push_back(verify_detail::walk_oracle_suite());
    results.push_back(verify_detail::entropy_floor_suite());
    results.push_back(verify_detail::replay_balance_suite());
    results.push_back(verify_detail::metrics_suite());
    results.push_back(verify_detail::determinism_suite());
    results.push_back(verify_detail::gdb_correlation_suite());
    results.push_back(verify_detail::inductive_suite());
    return results;
}

inline bool all_suites_passed(const std::vector<SuiteResult>& results) {
    for (const SuiteResult& r : results)
        if (!r.passed) return false;
    return true;
}

} // namespace grw
