#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "grw/data.hpp"
#include "grw/hallucinate.hpp"
#include "grw/losses.hpp"
#include "grw/net.hpp"
#include "grw/replay.hpp"
#include "grw/rng.hpp"
#include "grw/walk.hpp"

namespace grw {

enum class HallucinationMode { Interpolation, Dictionary };

struct TrainerConfig {
    LossWeights weights;
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    std::size_t g_hidden = 128;
    std::size_t d_hidden = 128;
    std::size_t noise_dim = 0;   // 0 resolves to the attribute width
    double lr = 0.005;
    double weight_decay = 1e-5;
    double dict_lr = 0.0;        // 0 resolves to lr
    HallucinationMode hallucination = HallucinationMode::Interpolation;
    std::size_t center_samples = 2; // generated samples per class for walk centers
    std::size_t buffer_capacity = 5000;
    ReplayBuffer::Mode replay_mode = ReplayBuffer::Mode::Real;
    std::size_t generative_per_class = 200;
    bool eval_all_classes = true; // identical under a static schedule either way
    std::uint64_t seed = 2222;
};

enum class TrainerPhase { Training, Evaluation };

struct TrainerState {
    TrainerConfig config;
    TwoLayerNet g, d;
    GradTape tape_g, tape_d;
    AdamState opt_g, opt_d;
    std::optional<AttributeDictionary> dictionary;
    ReplayBuffer buffer;
    Rng rng;
    std::size_t task_index = 0;
    std::size_t noise_dim = 0;
    std::function<void(TrainerPhase)> phase_hook; // test instrumentation

    TrainerState(const TrainerConfig& cfg, Rng r) : config(cfg), rng(r) {}

    void set_phase(TrainerPhase phase) const {
        if (phase_hook) phase_hook(phase);
    }
};

inline TrainerState make_trainer(const TrainerConfig& config, std::size_t attr_dim,
                                 std::size_t feature_dim) {
    config.weights.validate();
    if (config.batch_size < 2)
        throw ConfigError("TrainerConfig: batch_size must be at least 2");
    TrainerState state(config, Rng(config.seed));
    state.noise_dim = config.noise_dim == 0 ? attr_dim : config.noise_dim;
    state.g = make_net(attr_dim + state.noise_dim, config.g_hidden, feature_dim, state.rng);
    state.d = make_net(attr_dim, config.d_hidden, feature_dim, state.rng);
    state.opt_g = make_adam(state.g, config.lr, config.weight_decay);
    state.opt_d = make_adam(state.d, config.lr, config.weight_decay);
    state.buffer = ReplayBuffer(config.buffer_capacity, config.replay_mode,
                                config.generative_per_class);
    return state;
}

namespace detail {

inline Matrix draw_noise(std::size_t rows, std::size_t dim, Rng& rng) {
    Matrix z(rows, dim);
    for (double& v : z.data()) v = rng.normal();
    return z;
}

inline Matrix with_noise(const Matrix& attrs, const Matrix& z) {
    Matrix out(attrs.rows(), attrs.cols() + z.cols());
    for (std::size_t i = 0; i < attrs.rows(); ++i) {
        std::copy(attrs.row(i), attrs.row(i) + attrs.cols(), out.row(i));
        std::copy(z.row(i), z.row(i) + z.cols(), out.row(i) + attrs.cols());
    }
    return out;
}

inline Matrix repeat_rows(const Matrix& m, std::size_t times) {
    Matrix out(m.rows() * times, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t k = 0; k < times; ++k)
            std::copy(m.row(i), m.row(i) + m.cols(), out.row(i * times + k));
    return out;
}

} // namespace detail

// Everything one optimizer step reads. Noise is pre-drawn so the loss is a
// deterministic function of the network parameters (the finite-difference
// suite relies on that).
struct StepContext {
    Matrix real_x;
    std::vector<std::size_t> bank_rows; // per-sample row into attr_bank
    std::vector<std::size_t> rf_rows;   // batch rows of current-task classes;
                                        // the real/fake term covers only these
    Matrix attr_rows;                   // per-sample conditioning attributes
    Matrix attr_bank;                   // all seen attributes, ascending class id
    Matrix real_centers_all;            // aligned with attr_bank rows
    std::vector<bool> center_available; // rows of real_centers_all with data behind them
    Matrix real_centers_cur;            // current-task classes only
    Matrix attrs_cur;                   // current-task attributes
    std::vector<std::size_t> cur_bank_rows;
    Matrix halluc_attrs;
    Matrix z_sg, z_h, z_center;     // generator-step noise
    Matrix z_sg_d, z_center_d;      // discriminator-step noise, drawn fresh
    std::size_t center_samples = 2;
    LossWeights weights;
};

namespace detail {

// Labels for the per-class generation block: every bank row, m samples each.
inline std::vector<std::size_t> center_block_labels(std::size_t n_classes, std::size_t m) {
    std::vector<std::size_t> labels(n_classes * m);
    for (std::size_t c = 0; c < n_classes; ++c)
        for (std::size_t k = 0; k < m; ++k) labels[c * m + k] = c;
    return labels;
}

} // namespace detail

// L_D = -L_real_fake + lambda_cls (L_cls_real + L_cls_gen) + lambda_rd R_D.
// Generated samples are held constant here; only D's parameters receive
// gradients (when a tape is supplied). The generated classification term
// covers the batch plus freshly generated samples of every class seen so
// far, so old classes are rehearsed from the generator each step.
inline double discriminator_step_loss(const TwoLayerNet& d_net, GradTape* tape,
                                      const TwoLayerNet& g_net, const StepContext& ctx) {
    const LossWeights& w = ctx.weights;
    Matrix bank_emb = forward(d_net, ctx.attr_bank, tape);
    Matrix emb_rows = take_rows(bank_emb, ctx.bank_rows);

    Matrix gen_in = concat_rows(
        detail::with_noise(ctx.attr_rows, ctx.z_sg_d),
        detail::with_noise(detail::repeat_rows(ctx.attr_bank, ctx.center_samples),
                           ctx.z_center_d));
    Matrix gen_out = forward(g_net, gen_in);
    Matrix fake = slice_rows(gen_out, 0, ctx.real_x.rows());

    std::vector<std::size_t> gen_labels = ctx.bank_rows;
    {
        auto block = detail::center_block_labels(ctx.attr_bank.rows(), ctx.center_samples);
        gen_labels.insert(gen_labels.end(), block.begin(), block.end());
    }

    Matrix rf_real = take_rows(ctx.real_x, ctx.rf_rows);
    Matrix rf_fake = take_rows(fake, ctx.rf_rows);
    Matrix rf_emb = take_rows(emb_rows, ctx.rf_rows);
    double rf = ctx.rf_rows.empty() ? 0.0 : real_fake_loss(rf_real, rf_fake, rf_emb);
    ClassificationEval cls_real =
        classification_loss(ctx.real_x, ctx.bank_rows, bank_emb, w.tau);
    ClassificationEval cls_gen = classification_loss(gen_out, gen_labels, bank_emb, w.tau);
    // classes with no stored features behind their center are skipped
    Matrix anchored_emb = bank_emb;
    if (!ctx.center_available.empty())
        for (std::size_t r = 0; r < anchored_emb.rows(); ++r)
            if (!ctx.center_available[r])
                for (std::size_t t = 0; t < anchored_emb.cols(); ++t)
                    anchored_emb(r, t) = ctx.real_centers_all(r, t);
    double r_d = discriminator_regularizer(anchored_emb, ctx.real_centers_all);
    double loss = compose_discriminator_loss(
        {rf, cls_real.value + cls_gen.value, r_d}, w);

    if (tape) {
        Matrix d_bank(bank_emb.rows(), bank_emb.cols());
        if (!ctx.rf_rows.empty()) {
            Matrix d_rf_emb(rf_emb.rows(), rf_emb.cols());
            real_fake_backward(rf_real, rf_fake, rf_emb, -1.0, nullptr, &d_rf_emb);
            for (std::size_t i = 0; i < ctx.rf_rows.size(); ++i)
                for (std::size_t t = 0; t < d_bank.cols(); ++t)
                    d_bank(ctx.bank_rows[ctx.rf_rows[i]], t) += d_rf_emb(i, t);
        }
        classification_backward(cls_real, ctx.real_x, ctx.bank_rows, bank_emb, w.tau,
                                w.lambda_cls, nullptr, &d_bank);
        classification_backward(cls_gen, gen_out, gen_labels, bank_emb, w.tau,
                                w.lambda_cls, nullptr, &d_bank);
        Matrix d_anchor(bank_emb.rows(), bank_emb.cols());
        discriminator_regularizer_backward(anchored_emb, ctx.real_centers_all, w.lambda_rd,
                                           d_anchor);
        for (std::size_t r = 0; r < d_bank.rows(); ++r) {
            if (!ctx.center_available.empty() && !ctx.center_available[r]) continue;
            for (std::size_t t = 0; t < d_bank.cols(); ++t) d_bank(r, t) += d_anchor(r, t);
        }
        backward(d_net, *tape, d_bank);
    }
    return loss;
}

struct GeneratorStepResult {
    double loss = 0.0;
    double grw_loss = 0.0; // unscaled walk loss, logged for the GDB trace
    Matrix d_halluc_attrs; // gradient w.r.t. hallucinated attributes (dictionary routing)
};

// L_G = L_real_fake + lambda_cls L_cls_gen + lambda_c L_creativity
//       + lambda_i (L_GRW + R_GRW) + lambda_rg (nuclear + sal).
// One concatenated generator forward covers the seen batch, the hallucinated
// batch, and the per-class center samples, so a single tape backward
// accumulates all parameter gradients. D is frozen here.
inline GeneratorStepResult generator_step_loss(const TwoLayerNet& g_net, GradTape* tape,
                                               const TwoLayerNet& d_net,
                                               const StepContext& ctx) {
    const LossWeights& w = ctx.weights;
    const std::size_t n = ctx.real_x.rows();
    const std::size_t n_h = ctx.halluc_attrs.rows();
    const std::size_t n_classes = ctx.attr_bank.rows();
    const std::size_t m = ctx.center_samples;

    Matrix bank_emb = forward(d_net, ctx.attr_bank);
    Matrix emb_rows = take_rows(bank_emb, ctx.bank_rows);

    Matrix g_in = concat_rows(
        concat_rows(detail::with_noise(ctx.attr_rows, ctx.z_sg),
                    detail::with_noise(ctx.halluc_attrs, ctx.z_h)),
        detail::with_noise(detail::repeat_rows(ctx.attr_bank, m), ctx.z_center));
    Matrix g_out = forward(g_net, g_in, tape);

    Matrix fake_sg = slice_rows(g_out, 0, n);
    Matrix fake_h = slice_rows(g_out, n, n_h);
    Matrix gen_centers(n_classes, g_out.cols());
    for (std::size_t c = 0; c < n_classes; ++c)
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t t = 0; t < g_out.cols(); ++t)
                gen_centers(c, t) += g_out(n + n_h + c * m + k, t) / static_cast<double>(m);

    // generated classification over the batch plus the per-class block; the
    // block rows double as walk-center samples
    std::vector<std::size_t> gen_labels = ctx.bank_rows;
    {
        auto block = detail::center_block_labels(n_classes, m);
        gen_labels.insert(gen_labels.end(), block.begin(), block.end());
    }
    Matrix cls_rows(n + n_classes * m, g_out.cols());
    for (std::size_t i = 0; i < n; ++i)
        std::copy(g_out.row(i), g_out.row(i) + g_out.cols(), cls_rows.row(i));
    for (std::size_t i = 0; i < n_classes * m; ++i)
        std::copy(g_out.row(n + n_h + i), g_out.row(n + n_h + i) + g_out.cols(),
                  cls_rows.row(n + i));

    Matrix rf_real = take_rows(ctx.real_x, ctx.rf_rows);
    Matrix rf_fake = take_rows(fake_sg, ctx.rf_rows);
    Matrix rf_emb = take_rows(emb_rows, ctx.rf_rows);
    double rf = ctx.rf_rows.empty() ? 0.0 : real_fake_loss(rf_real, rf_fake, rf_emb);
    ClassificationEval cls_gen = classification_loss(cls_rows, gen_labels, bank_emb, w.tau);
    CreativityEval creat = creativity_loss(fake_h, bank_emb, w.tau);

    TransitionTriple trip_h = build_transitions(gen_centers, fake_h);
    WalkResult walk_h = walk_landing(trip_h, w.walk_steps);
    double grw = grw_objective(walk_h, TargetDistribution::uniform(), w.gamma);

    TransitionTriple trip_s = build_transitions(gen_centers, fake_sg);
    WalkResult walk_s = walk_landing(trip_s, w.walk_steps);
    double grw_reg = grw_objective(walk_s, TargetDistribution::identity(), w.gamma);

    Matrix gen_centers_cur = take_rows(gen_centers, ctx.cur_bank_rows);
    GeneratorRegEval reg =
        generator_regularizer(ctx.real_centers_cur, gen_centers_cur, ctx.attrs_cur, w);

    GeneratorStepResult result;
    result.grw_loss = grw;
    result.loss = compose_generator_loss(
        {rf, cls_gen.value, creat.value, grw, grw_reg, reg.value}, w);

    if (tape) {
        Matrix d_sg(n, g_out.cols());
        Matrix d_h(n_h, g_out.cols());
        Matrix d_centers(n_classes, g_out.cols());
        Matrix d_block_rows(n_classes * m, g_out.cols()); // per-row, not through the mean

        if (!ctx.rf_rows.empty()) {
            Matrix d_rf_fake(rf_fake.rows(), rf_fake.cols());
            real_fake_backward(rf_real, rf_fake, rf_emb, 1.0, &d_rf_fake, nullptr);
            for (std::size_t i = 0; i < ctx.rf_rows.size(); ++i)
                for (std::size_t t = 0; t < d_sg.cols(); ++t)
                    d_sg(ctx.rf_rows[i], t) += d_rf_fake(i, t);
        }
        {
            Matrix d_cls(cls_rows.rows(), cls_rows.cols());
            classification_backward(cls_gen, cls_rows, gen_labels, bank_emb, w.tau,
                                    w.lambda_cls, &d_cls, nullptr);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t t = 0; t < d_sg.cols(); ++t) d_sg(i, t) += d_cls(i, t);
            for (std::size_t i = 0; i < n_classes * m; ++i)
                for (std::size_t t = 0; t < d_sg.cols(); ++t)
                    d_block_rows(i, t) += d_cls(n + i, t);
        }
        creativity_backward(creat, fake_h, bank_emb, w.tau, w.lambda_c, &d_h, nullptr);

        WalkGrad wg_h =
            grw_backward(trip_h, walk_h, TargetDistribution::uniform(), w.gamma, w.lambda_i);
        axpy(d_centers, wg_h.d_centers, 1.0);
        axpy(d_h, wg_h.d_samples, 1.0);

        WalkGrad wg_s = grw_backward(trip_s, walk_s, TargetDistribution::identity(), w.gamma,
                                     w.lambda_i);
        axpy(d_centers, wg_s.d_centers, 1.0);
        axpy(d_sg, wg_s.d_samples, 1.0);

        Matrix d_centers_cur(gen_centers_cur.rows(), gen_centers_cur.cols());
        generator_regularizer_backward(ctx.real_centers_cur, gen_centers_cur, ctx.attrs_cur,
                                       w, w.lambda_rg, d_centers_cur);
        for (std::size_t i = 0; i < ctx.cur_bank_rows.size(); ++i)
            for (std::size_t t = 0; t < d_centers.cols(); ++t)
                d_centers(ctx.cur_bank_rows[i], t) += d_centers_cur(i, t);

        Matrix d_out(g_out.rows(), g_out.cols());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < d_out.cols(); ++t) d_out(i, t) = d_sg(i, t);
        for (std::size_t i = 0; i < n_h; ++i)
            for (std::size_t t = 0; t < d_out.cols(); ++t) d_out(n + i, t) = d_h(i, t);
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t c = 0; c < n_classes; ++c)
            for (std::size_t k = 0; k < m; ++k)
                for (std::size_t t = 0; t < d_out.cols(); ++t)
                    d_out(n + n_h + c * m + k, t) =
                        d_centers(c, t) * inv_m + d_block_rows(c * m + k, t);

        Matrix d_in = backward(g_net, *tape, d_out);
        result.d_halluc_attrs = Matrix(n_h, ctx.halluc_attrs.cols());
        for (std::size_t i = 0; i < n_h; ++i)
            for (std::size_t t = 0; t < ctx.halluc_attrs.cols(); ++t)
                result.d_halluc_attrs(i, t) = d_in(n + i, t);
    }
    return result;
}

// Per-task constants: the training pool (current task + buffer), the seen
// attribute bank, and the real class centers feeding the regularizers.
struct TaskRuntime {
    std::size_t task = 0;
    Matrix pool_features;
    std::vector<std::size_t> pool_labels;
    Matrix attr_bank;
    std::vector<std::size_t> bank_ids; // ascending class ids
    std::unordered_map<std::size_t, std::size_t> bank_row_of;
    Matrix real_centers_all;
    std::vector<bool> center_available;
    Matrix real_centers_cur;
    Matrix attrs_cur;
    std::vector<std::size_t> cur_bank_rows;
    std::vector<std::size_t> cur_classes;
    Matrix task_features; // current task only, feeds the buffer update
    std::vector<std::size_t> task_labels;
};

inline TaskRuntime build_task_runtime(TrainerState& state, const Dataset& dataset,
                                      const TaskSchedule& schedule, std::size_t task) {
    TaskRuntime rt;
    rt.task = task;
    rt.cur_classes = schedule.task_classes.at(task);

    std::vector<std::size_t> task_rows;
    std::vector<bool> in_task(dataset.n_classes(), false);
    for (std::size_t c : rt.cur_classes) in_task[c] = true;
    for (std::size_t i = 0; i < dataset.n_samples(); ++i)
        if (in_task[dataset.label(i)]) task_rows.push_back(i);
    rt.task_features = dataset.features_of(task_rows);
    rt.task_labels.reserve(task_rows.size());
    for (std::size_t i : task_rows) rt.task_labels.push_back(dataset.label(i));

    // seen attribute bank: buffer classes plus current task, ascending id
    std::vector<std::size_t> seen = schedule.seen_through(task);
    std::sort(seen.begin(), seen.end());
    rt.bank_ids = seen;
    rt.attr_bank = dataset.attrs_of(seen);
    for (std::size_t row = 0; row < seen.size(); ++row) rt.bank_row_of[seen[row]] = row;

    // training pool = current task + replay buffer snapshot
    Matrix buffer_features;
    std::vector<std::size_t> buffer_labels;
    state.buffer.snapshot(buffer_features, buffer_labels);
    if (buffer_features.rows() > 0 && buffer_features.cols() != rt.task_features.cols())
        throw ShapeError("build_task_runtime: buffer feature width mismatch");
    rt.pool_features = buffer_features.rows() > 0
                           ? concat_rows(rt.task_features, buffer_features)
                           : rt.task_features;
    rt.pool_labels = rt.task_labels;
    rt.pool_labels.insert(rt.pool_labels.end(), buffer_labels.begin(), buffer_labels.end());

    // real class centers: current classes from task data, older classes from
    // the buffer's stored features
    rt.real_centers_all = Matrix(rt.bank_ids.size(), dataset.feature_dim());
    rt.center_available.assign(rt.bank_ids.size(), true);
    for (std::size_t row = 0; row < rt.bank_ids.size(); ++row) {
        std::size_t cls = rt.bank_ids[row];
        if (in_task[cls]) {
            std::size_t count = 0;
            for (std::size_t i = 0; i < rt.task_labels.size(); ++i)
                if (rt.task_labels[i] == cls) {
                    for (std::size_t t = 0; t < dataset.feature_dim(); ++t)
                        rt.real_centers_all(row, t) += rt.task_features(i, t);
                    ++count;
                }
            for (std::size_t t = 0; t < dataset.feature_dim(); ++t)
                rt.real_centers_all(row, t) /= static_cast<double>(count);
        } else {
            const auto& stored = state.buffer.stored_features(cls);
            if (!stored.empty()) {
                for (const auto& feat : stored)
                    for (std::size_t t = 0; t < dataset.feature_dim(); ++t)
                        rt.real_centers_all(row, t) += feat[t];
                for (std::size_t t = 0; t < dataset.feature_dim(); ++t)
                    rt.real_centers_all(row, t) /= static_cast<double>(stored.size());
            } else {
                rt.center_available[row] = false;
            }
        }
    }

    std::vector<std::size_t> cur_sorted = rt.cur_classes;
    std::sort(cur_sorted.begin(), cur_sorted.end());
    rt.cur_classes = cur_sorted;
    rt.attrs_cur = dataset.attrs_of(cur_sorted);
    rt.cur_bank_rows.clear();
    for (std::size_t cls : cur_sorted) rt.cur_bank_rows.push_back(rt.bank_row_of.at(cls));
    rt.real_centers_cur = take_rows(rt.real_centers_all, rt.cur_bank_rows);
    return rt;
}

struct EpochStats {
    double mean_loss_d = 0.0;
    double mean_loss_g = 0.0;
    double mean_grw = 0.0;
    std::size_t batches = 0;
};

struct BatchSetup {
    StepContext ctx;
    HallucinatedBatch halluc; // provenance, routes dictionary gradients
};

inline BatchSetup make_step_context(TrainerState& state, const TaskRuntime& rt,
                                    const std::vector<std::size_t>& batch_rows) {
    BatchSetup setup;
    StepContext& ctx = setup.ctx;
    ctx.weights = state.config.weights;
    // cap the neighbor count for small first tasks
    ctx.weights.sal_neighbors =
        std::min(ctx.weights.sal_neighbors, rt.cur_classes.size() - 1);
    ctx.center_samples = state.config.center_samples;

    ctx.real_x = Matrix(batch_rows.size(), rt.pool_features.cols());
    ctx.bank_rows.resize(batch_rows.size());
    for (std::size_t i = 0; i < batch_rows.size(); ++i) {
        std::copy(rt.pool_features.row(batch_rows[i]),
                  rt.pool_features.row(batch_rows[i]) + rt.pool_features.cols(),
                  ctx.real_x.row(i));
        ctx.bank_rows[i] = rt.bank_row_of.at(rt.pool_labels[batch_rows[i]]);
        // pool rows below the task size are current-task samples
        if (batch_rows[i] < rt.task_labels.size()) ctx.rf_rows.push_back(i);
    }
    ctx.attr_rows = take_rows(rt.attr_bank, ctx.bank_rows);
    ctx.attr_bank = rt.attr_bank;
    ctx.real_centers_all = rt.real_centers_all;
    ctx.center_available = rt.center_available;
    ctx.real_centers_cur = rt.real_centers_cur;
    ctx.attrs_cur = rt.attrs_cur;
    ctx.cur_bank_rows = rt.cur_bank_rows;

    const std::size_t n = batch_rows.size();
    if (state.config.hallucination == HallucinationMode::Dictionary && state.dictionary)
        setup.halluc = dictionary_sample(*state.dictionary, n, state.rng);
    else
        setup.halluc = interpolate_attributes(rt.attr_bank, n, state.rng);
    ctx.halluc_attrs = setup.halluc.attributes;

    ctx.z_sg_d = detail::draw_noise(n, state.noise_dim, state.rng);
    ctx.z_center_d = detail::draw_noise(rt.attr_bank.rows() * ctx.center_samples,
                                        state.noise_dim, state.rng);
    ctx.z_sg = detail::draw_noise(n, state.noise_dim, state.rng);
    ctx.z_h = detail::draw_noise(ctx.halluc_attrs.rows(), state.noise_dim, state.rng);
    ctx.z_center =
        detail::draw_noise(rt.attr_bank.rows() * ctx.center_samples, state.noise_dim,
                           state.rng);
    return setup;
}

// One pass over the pool: alternate one discriminator and one generator
// update per batch. Dictionary batches are re-sampled per step and their
// attribute gradients flow back into the picked entries.
inline EpochStats train_epoch(TrainerState& state, const TaskRuntime& rt) {
    state.set_phase(TrainerPhase::Training);
    const std::size_t pool = rt.pool_labels.size();
    std::vector<std::size_t> order(pool);
    for (std::size_t i = 0; i < pool; ++i) order[i] = i;
    for (std::size_t i = 0; i + 1 < pool; ++i) {
        std::size_t j = i + state.rng.index(pool - i);
        std::swap(order[i], order[j]);
    }

    EpochStats stats;
    for (std::size_t begin = 0; begin < pool; begin += state.config.batch_size) {
        std::size_t count = std::min(state.config.batch_size, pool - begin);
        if (count < 2) break; // transition matrices need at least two samples
        std::vector<std::size_t> batch(order.begin() + begin, order.begin() + begin + count);
        BatchSetup setup = make_step_context(state, rt, batch);
        const StepContext& ctx = setup.ctx;

        double loss_d = 0.0;
        GeneratorStepResult gen;
        try {
            loss_d = discriminator_step_loss(state.d, &state.tape_d, state.g, ctx);
            adam_step(state.d, state.tape_d, state.opt_d);
            gen = generator_step_loss(state.g, &state.tape_g, state.d, ctx);
            adam_step(state.g, state.tape_g, state.opt_g);
        } catch (const InvalidInputError& e) {
            // inputs were validated up front; a precondition failure mid-step
            // means an intermediate value overflowed
            throw NumericError(std::string("train_epoch: ") + e.what());
        }
        if (setup.halluc.source == HallucinatedBatch::Source::Dictionary &&
            state.dictionary) {
            dictionary_accumulate(*state.dictionary, setup.halluc, gen.d_halluc_attrs);
            double lr = state.config.dict_lr == 0.0 ? state.config.lr : state.config.dict_lr;
            state.dictionary->apply_sgd(lr);
        }

        if (!std::isfinite(loss_d) || !std::isfinite(gen.loss))
            throw NumericError("train_epoch: non-finite loss");
        stats.mean_loss_d += loss_d;
        stats.mean_loss_g += gen.loss;
        stats.mean_grw += gen.grw_loss;
        stats.batches += 1;
    }
    if (stats.batches > 0) {
        stats.mean_loss_d /= static_cast<double>(stats.batches);
        stats.mean_loss_g /= static_cast<double>(stats.batches);
        stats.mean_grw /= static_cast<double>(stats.batches);
    }
    return stats;
}

// --- evaluation -------------------------------------------------------------

inline std::vector<std::size_t> cosine_predict(const Matrix& features, const Matrix& emb_bank,
                                               double tau) {
    Matrix logits = scaled(cosine_sim_matrix(features, emb_bank), tau);
    std::vector<std::size_t> out(features.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        out[i] = best;
    }
    return out;
}

// Mean per-class accuracy over target_classes; every sample is classified
// against the full candidate space.
inline double per_class_accuracy(const TrainerState& state, const Dataset& dataset,
                                 const std::vector<std::size_t>& candidate_classes,
                                 const std::vector<std::size_t>& target_classes) {
    if (target_classes.empty()) return std::numeric_limits<double>::quiet_NaN();
    state.set_phase(TrainerPhase::Evaluation);
    Matrix bank_emb = forward(state.d, dataset.attrs_of(candidate_classes));

    std::vector<std::size_t> rows;
    std::vector<bool> wanted(dataset.n_classes(), false);
    for (std::size_t c : target_classes) wanted[c] = true;
    for (std::size_t i = 0; i < dataset.n_samples(); ++i)
        if (wanted[dataset.label(i)]) rows.push_back(i);

    Matrix features = dataset.features_of(rows);
    auto preds = cosine_predict(features, bank_emb, state.config.weights.tau);

    std::map<std::size_t, std::pair<std::size_t, std::size_t>> per_class; // correct, total
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::size_t truth = dataset.label(rows[i]);
        std::size_t predicted = candidate_classes[preds[i]];
        per_class[truth].second += 1;
        if (predicted == truth) per_class[truth].first += 1;
    }
    double mean = 0.0;
    for (std::size_t c : target_classes) {
        auto [correct, total] = per_class[c];
        mean += total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    }
    return mean / static_cast<double>(target_classes.size());
}

inline std::vector<std::size_t> evaluation_space(const TrainerState& state,
                                                 const Dataset& dataset,
                                                 const TaskSchedule& schedule,
                                                 std::size_t task) {
    std::vector<std::size_t> all;
    if (state.config.eval_all_classes) {
        all.resize(dataset.n_classes());
        for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
    } else {
        all = schedule.seen_through(task);
        auto unseen = schedule.unseen_after(task);
        all.insert(all.end(), unseen.begin(), unseen.end());
        std::sort(all.begin(), all.end());
    }
    return all;
}

// (S_t, U_t) with the current model after task t.
inline std::pair<double, double> evaluate_task(const TrainerState& state,
                                               const Dataset& dataset,
                                               const TaskSchedule& schedule,
                                               std::size_t task) {
    auto space = evaluation_space(state, dataset, schedule, task);
    double seen = per_class_accuracy(state, dataset, space, schedule.seen_through(task));
    double unseen = per_class_accuracy(state, dataset, space, schedule.unseen_after(task));
    return {seen, unseen};
}

// |accuracy on generated hallucinated samples - unseen accuracy|. The
// hallucinated classifier space is the embedded hallucinated attributes and
// the ground truth of each sample is its own conditioning row.
inline double gdb_estimate(TrainerState& state, const Dataset& dataset,
                           const TaskSchedule& schedule, std::size_t task,
                           const HallucinatedBatch& halluc) {
    if (halluc.attributes.rows() == 0)
        throw StateError("gdb_estimate: empty hallucinated batch");
    state.set_phase(TrainerPhase::Evaluation);
    Matrix z = detail::draw_noise(halluc.attributes.rows(), state.noise_dim, state.rng);
    Matrix fake_h = forward(state.g, detail::with_noise(halluc.attributes, z));
    Matrix halluc_emb = forward(state.d, halluc.attributes);
    auto preds = cosine_predict(fake_h, halluc_emb, state.config.weights.tau);
    double correct = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == i) correct += 1.0;
    double acc_h = correct / static_cast<double>(preds.size());

    auto space = evaluation_space(state, dataset, schedule, task);
    double acc_u = per_class_accuracy(state, dataset, space, schedule.unseen_after(task));
    return std::fabs(acc_h - acc_u);
}

// --- stream report ----------------------------------------------------------

struct GdbPoint {
    std::size_t task = 0;
    std::size_t epoch = 0;
    double grw_loss = 0.0;
    double gdb = 0.0;
};

struct StreamReport {
    std::vector<double> seen_acc;                  // S_t
    std::vector<double> unseen_acc;                // U_t for t < T-1
    std::vector<std::vector<double>> seen_matrix;  // seen_matrix[tau][t] = S_tau(D^{1:t})
    std::vector<GdbPoint> gdb_trace;
    std::vector<std::map<std::size_t, std::size_t>> buffer_counts;
    double msa = std::numeric_limits<double>::quiet_NaN();
    double mua = std::numeric_limits<double>::quiet_NaN();
    double mha = std::numeric_limits<double>::quiet_NaN();
    double bwt = std::numeric_limits<double>::quiet_NaN();
};

inline double harmonic_mean(double s, double u) {
    return (s + u) == 0.0 ? 0.0 : 2.0 * s * u / (s + u);
}

// mSA = mean S_t; mUA = mean U_t over the first T-1 tasks; mHA likewise over
// H(S_t, U_t); BWT = mean (S_T(D^{1:t}) - S_t(D^{1:t})).
inline void aggregate_metrics(StreamReport& report) {
    const std::size_t tasks = report.seen_acc.size();
    if (tasks == 0) throw StateError("aggregate_metrics: no tasks recorded");
    if (report.unseen_acc.size() + 1 != tasks)
        throw StateError("aggregate_metrics: need exactly T-1 unseen accuracies");
    if (report.seen_matrix.size() != tasks)
        throw StateError("aggregate_metrics: seen matrix incomplete");
    for (std::size_t tau = 0; tau < tasks; ++tau)
        if (report.seen_matrix[tau].size() != tau + 1)
            throw StateError("aggregate_metrics: seen matrix row " + std::to_string(tau) +
                             " incomplete");

    double msa = 0.0;
    for (double s : report.seen_acc) msa += s;
    report.msa = msa / static_cast<double>(tasks);

    if (tasks > 1) {
        double mua = 0.0, mha = 0.0;
        for (std::size_t t = 0; t + 1 < tasks; ++t) {
            mua += report.unseen_acc[t];
            mha += harmonic_mean(report.seen_acc[t], report.unseen_acc[t]);
        }
        report.mua = mua / static_cast<double>(tasks - 1);
        report.mha = mha / static_cast<double>(tasks - 1);

        double bwt = 0.0;
        for (std::size_t t = 0; t + 1 < tasks; ++t)
            bwt += report.seen_matrix[tasks - 1][t] - report.seen_matrix[t][t];
        report.bwt = bwt / static_cast<double>(tasks - 1);
    }
}

// Algorithm: per task, train E epochs on the pool (current task + buffer),
// log the walk loss and the empirical generative distance per epoch, update
// the replay buffer, then evaluate every seen prefix and the unseen rest.
inline StreamReport train_task_stream(TrainerState& state, const Dataset& dataset,
                                      const TaskSchedule& schedule, std::size_t epochs) {
    StreamReport report;
    const std::size_t tasks = schedule.n_tasks();
    for (std::size_t t = 0; t < tasks; ++t) {
        state.task_index = t;
        state.set_phase(TrainerPhase::Training);
        TaskRuntime rt = build_task_runtime(state, dataset, schedule, t);
        if (state.config.hallucination == HallucinationMode::Dictionary)
            state.dictionary = dictionary_init(rt.attr_bank, state.rng);

        for (std::size_t e = 0; e < epochs; ++e) {
            EpochStats stats = train_epoch(state, rt);
            if (t + 1 < tasks) {
                HallucinatedBatch halluc =
                    state.dictionary
                        ? dictionary_sample(*state.dictionary, state.config.batch_size,
                                            state.rng)
                        : interpolate_attributes(rt.attr_bank, state.config.batch_size,
                                                 state.rng);
                double gdb = gdb_estimate(state, dataset, schedule, t, halluc);
                report.gdb_trace.push_back({t, e, stats.mean_grw, gdb});
                state.set_phase(TrainerPhase::Training);
            }
        }

        // buffer update with the finished task's data
        TaskData task_data;
        task_data.features = rt.task_features;
        task_data.labels = rt.task_labels;
        task_data.class_ids = rt.cur_classes;
        task_data.class_attrs = rt.attrs_cur;
        if (state.config.replay_mode == ReplayBuffer::Mode::Generative) {
            Matrix bank_emb = forward(state.d, rt.attr_bank);
            GenerativeReplayHooks hooks;
            hooks.generate = [&](std::size_t cls, std::size_t count) {
                Matrix attr = take_rows(rt.attr_bank, {rt.bank_row_of.at(cls)});
                Matrix attrs = detail::repeat_rows(attr, count);
                Matrix z = detail::draw_noise(count, state.noise_dim, state.rng);
                return forward(state.g, detail::with_noise(attrs, z));
            };
            hooks.classify = [&](const Matrix& feats) {
                auto rows = cosine_predict(feats, bank_emb, state.config.weights.tau);
                for (std::size_t& r : rows) r = rt.bank_ids[r];
                return rows;
            };
            state.buffer.end_of_task_update(task_data, state.rng, &hooks);
        } else {
            state.buffer.end_of_task_update(task_data, state.rng);
        }
        report.buffer_counts.push_back(state.buffer.per_class_counts());

        // evaluation: every seen prefix plus the unseen remainder
        state.set_phase(TrainerPhase::Evaluation);
        auto space = evaluation_space(state, dataset, schedule, t);
        std::vector<double> row;
        for (std::size_t prefix = 0; prefix <= t; ++prefix)
            row.push_back(
                per_class_accuracy(state, dataset, space, schedule.seen_through(prefix)));
        report.seen_matrix.push_back(row);
        report.seen_acc.push_back(row.back());
        if (t + 1 < tasks)
            report.unseen_acc.push_back(
                per_class_accuracy(state, dataset, space, schedule.unseen_after(t)));
        state.set_phase(TrainerPhase::Training);
    }
    aggregate_metrics(report);
    return report;
}

// --- report files -----------------------------------------------------------

namespace detail {

inline nlohmann::json metric_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

} // namespace detail

inline std::string summary_json_string(const StreamReport& report, std::uint64_t config_hash,
                                       std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["mSA"] = detail::metric_or_null(report.msa);
    j["mUA"] = detail::metric_or_null(report.mua);
    j["mHA"] = detail::metric_or_null(report.mha);
    j["BWT"] = detail::metric_or_null(report.bwt);
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(config_hash));
    j["config_hash"] = hash_hex;
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

inline void write_report_files(const StreamReport& report, const std::string& dir,
                               std::uint64_t config_hash, std::uint64_t seed) {
    {
        std::ofstream os(dir + "/per_task.csv");
        if (!os) throw StateError("write_report_files: cannot open per_task.csv");
        os << "task,seen_acc,unseen_acc,harmonic\n";
        for (std::size_t t = 0; t < report.seen_acc.size(); ++t) {
            os << t << ',' << detail::format_double(report.seen_acc[t]) << ',';
            if (t < report.unseen_acc.size()) {
                os << detail::format_double(report.unseen_acc[t]) << ','
                   << detail::format_double(
                          harmonic_mean(report.seen_acc[t], report.unseen_acc[t]));
            } else {
                os << ",";
            }
            os << '\n';
        }
    }
    {
        std::ofstream os(dir + "/summary.json");
        if (!os) throw StateError("write_report_files: cannot open summary.json");
        os << summary_json_string(report, config_hash, seed);
    }
    {
        std::ofstream os(dir + "/gdb_trace.csv");
        if (!os) throw StateError("write_report_files: cannot open gdb_trace.csv");
        os << "task,epoch,grw_loss,gdb\n";
        for (const GdbPoint& p : report.gdb_trace)
            os << p.task << ',' << p.epoch << ',' << detail::format_double(p.grw_loss) << ','
               << detail::format_double(p.gdb) << '\n';
    }
    {
        std::ofstream os(dir + "/buffer_counts.csv");
        if (!os) throw StateError("write_report_files: cannot open buffer_counts.csv");
        os << "task,class_id,count\n";
        for (std::size_t t = 0; t < report.buffer_counts.size(); ++t)
            for (const auto& [cls, count] : report.buffer_counts[t])
                os << t << ',' << cls << ',' << count << '\n';
    }
}

} // namespace grw
