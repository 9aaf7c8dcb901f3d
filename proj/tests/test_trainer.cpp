#include <catch2/catch.hpp>

#include <cmath>
#include <set>

#include "grw/trainer.hpp"

using namespace grw;

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec spec;
    spec.n_classes = 8;
    spec.attr_dim = 6;
    spec.feature_dim = 10;
    spec.samples_per_class = 12;
    spec.noise_sigma = 0.3;
    return spec;
}

TrainerConfig small_config() {
    TrainerConfig config;
    config.epochs = 2;
    config.batch_size = 16;
    config.g_hidden = 16;
    config.d_hidden = 16;
    config.buffer_capacity = 40;
    config.weights.sal_neighbors = 1;
    config.seed = 77;
    return config;
}

// D that embeds an attribute exactly at M * a: the hidden layer carries
// [leaky(a), leaky(-a)] and the output layer reassembles a = (h1 - h2) / 1.2
// before applying the mixing matrix.
TwoLayerNet exact_embedder(const Matrix& mixing) {
    const std::size_t d_a = mixing.cols();
    const std::size_t d_x = mixing.rows();
    TwoLayerNet net;
    net.w1 = Matrix(d_a, 2 * d_a);
    for (std::size_t i = 0; i < d_a; ++i) {
        net.w1(i, i) = 1.0;
        net.w1(i, d_a + i) = -1.0;
    }
    net.b1 = Matrix(1, 2 * d_a);
    net.w2 = Matrix(2 * d_a, d_x);
    for (std::size_t i = 0; i < d_a; ++i)
        for (std::size_t o = 0; o < d_x; ++o) {
            net.w2(i, o) = mixing(o, i) / 1.2;
            net.w2(d_a + i, o) = -mixing(o, i) / 1.2;
        }
    net.b2 = Matrix(1, d_x);
    return net;
}

} // namespace

TEST_CASE("zero learning rate leaves parameters unchanged and losses finite") {
    Rng rng(1);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 4);
    TrainerConfig config = small_config();
    config.lr = 0.0;
    config.weight_decay = 0.0;
    TrainerState state = make_trainer(config, 6, 10);
    TwoLayerNet g_before = state.g, d_before = state.d;

    TaskRuntime rt = build_task_runtime(state, synth.data, schedule, 0);
    EpochStats stats = train_epoch(state, rt);
    REQUIRE(stats.batches > 0);
    REQUIRE(std::isfinite(stats.mean_loss_d));
    REQUIRE(std::isfinite(stats.mean_loss_g));
    REQUIRE(state.g.w1 == g_before.w1);
    REQUIRE(state.g.w2 == g_before.w2);
    REQUIRE(state.d.w1 == d_before.w1);
    REQUIRE(state.d.b2 == d_before.b2);
}

TEST_CASE("training stream is deterministic under the seed") {
    Rng rng(2);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 4);

    auto run = [&]() {
        TrainerState state = make_trainer(small_config(), 6, 10);
        return train_task_stream(state, synth.data, schedule, 2);
    };
    StreamReport a = run();
    StreamReport b = run();
    REQUIRE(a.seen_acc == b.seen_acc);
    REQUIRE(a.unseen_acc == b.unseen_acc);
    REQUIRE(a.seen_matrix == b.seen_matrix);
    REQUIRE(a.msa == b.msa);
    REQUIRE(a.mha == b.mha);
    REQUIRE(a.gdb_trace.size() == b.gdb_trace.size());
    for (std::size_t i = 0; i < a.gdb_trace.size(); ++i) {
        REQUIRE(a.gdb_trace[i].grw_loss == b.gdb_trace[i].grw_loss);
        REQUIRE(a.gdb_trace[i].gdb == b.gdb_trace[i].gdb);
    }
    REQUIRE(summary_json_string(a, 1, 2) == summary_json_string(b, 1, 2));
}

TEST_CASE("dictionary mode trains deterministically too") {
    Rng rng(3);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 2);
    TrainerConfig config = small_config();
    config.hallucination = HallucinationMode::Dictionary;
    auto run = [&]() {
        TrainerState state = make_trainer(config, 6, 10);
        return train_task_stream(state, synth.data, schedule, 2);
    };
    StreamReport a = run();
    StreamReport b = run();
    REQUIRE(a.seen_acc == b.seen_acc);
    REQUIRE(a.mha == b.mha);
}

TEST_CASE("single-task stream reports only the seen accuracy") {
    Rng rng(4);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 1);
    TrainerState state = make_trainer(small_config(), 6, 10);
    StreamReport report = train_task_stream(state, synth.data, schedule, 1);
    REQUIRE(report.seen_acc.size() == 1);
    REQUIRE(report.unseen_acc.empty());
    REQUIRE(report.msa == Approx(report.seen_acc[0]));
    REQUIRE(std::isnan(report.mua));
    REQUIRE(std::isnan(report.mha));
    REQUIRE(std::isnan(report.bwt));
    std::string json = summary_json_string(report, 0, 0);
    REQUIRE(json.find("\"mUA\": null") != std::string::npos);
}

TEST_CASE("perfect embedder on noiseless data scores 1 everywhere") {
    SyntheticSpec spec = small_spec();
    spec.noise_sigma = 1e-9;
    Rng rng(5);
    auto synth = generate_synthetic(spec, rng);
    TaskSchedule schedule = build_static_schedule(8, 4);
    TrainerState state = make_trainer(small_config(), 6, 10);
    state.d = exact_embedder(synth.mixing);
    auto [seen, unseen] = evaluate_task(state, synth.data, schedule, 1);
    REQUIRE(seen == Approx(1.0));
    REQUIRE(unseen == Approx(1.0));
}

TEST_CASE("random embedder sits near chance level") {
    Rng rng(6);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 4);
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        TrainerConfig config = small_config();
        config.seed = 100 + seed;
        TrainerState state = make_trainer(config, 6, 10);
        auto [seen, unseen] = evaluate_task(state, synth.data, schedule, 3);
        mean += seen;
    }
    mean /= 5.0;
    // 1/K = 0.125; wide Monte-Carlo bound for an untrained embedding
    REQUIRE(mean > 0.0);
    REQUIRE(mean < 0.4);
}

TEST_CASE("evaluation predictions are scale invariant") {
    Rng rng(7);
    SyntheticSpec spec = small_spec();
    auto synth = generate_synthetic(spec, rng);
    TrainerState state = make_trainer(small_config(), 6, 10);
    Matrix bank = forward(state.d, synth.data.attrs_of({0, 1, 2, 3, 4, 5, 6, 7}));
    Matrix features = synth.data.features_of({0, 13, 26, 39});
    auto a = cosine_predict(features, bank, 10.0);
    auto b = cosine_predict(scaled(features, 3.0), bank, 10.0);
    REQUIRE(a == b);
}

TEST_CASE("metric aggregation closed forms") {
    REQUIRE(harmonic_mean(0.6, 0.3) == Approx(0.4));
    REQUIRE(harmonic_mean(0.0, 0.0) == 0.0);

    // no-forgetting case: final seen accuracies equal per-task values
    StreamReport nf;
    nf.seen_acc = {0.5, 0.6, 0.7};
    nf.unseen_acc = {0.4, 0.3};
    nf.seen_matrix = {{0.5}, {0.5, 0.6}, {0.5, 0.6, 0.7}};
    aggregate_metrics(nf);
    REQUIRE(nf.bwt == Approx(0.0).margin(1e-15));

    // hand-aggregated two-task example
    StreamReport two;
    two.seen_acc = {0.5, 0.6};
    two.unseen_acc = {0.5};
    two.seen_matrix = {{0.5}, {0.5, 0.6}};
    aggregate_metrics(two);
    REQUIRE(two.msa == Approx(0.55));
    REQUIRE(two.mua == Approx(0.5));
    REQUIRE(two.mha == Approx(0.5));

    StreamReport bad;
    bad.seen_acc = {0.5, 0.6};
    bad.unseen_acc = {};
    bad.seen_matrix = {{0.5}, {0.5, 0.6}};
    REQUIRE_THROWS_AS(aggregate_metrics(bad), StateError);
}

TEST_CASE("mHA respects the harmonic upper bound per task") {
    Rng rng(8);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 4);
    TrainerState state = make_trainer(small_config(), 6, 10);
    StreamReport report = train_task_stream(state, synth.data, schedule, 2);
    for (std::size_t t = 0; t < report.unseen_acc.size(); ++t) {
        double h = harmonic_mean(report.seen_acc[t], report.unseen_acc[t]);
        REQUIRE(h <= 2.0 * std::min(report.seen_acc[t], report.unseen_acc[t]) + 1e-12);
        REQUIRE(report.seen_acc[t] >= 0.0);
        REQUIRE(report.seen_acc[t] <= 1.0);
        REQUIRE(report.unseen_acc[t] >= 0.0);
        REQUIRE(report.unseen_acc[t] <= 1.0);
    }
}

TEST_CASE("gdb_estimate is the absolute accuracy gap") {
    Rng rng(9);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 4);
    TrainerConfig config = small_config();
    TrainerState state = make_trainer(config, 6, 10);
    TaskRuntime rt = build_task_runtime(state, synth.data, schedule, 0);
    train_epoch(state, rt);

    Rng halluc_rng(42);
    HallucinatedBatch halluc = interpolate_attributes(rt.attr_bank, 16, halluc_rng);

    TrainerState copy_a = state;
    double gdb = gdb_estimate(copy_a, synth.data, schedule, 0, halluc);

    // recompute both sides with an identical state copy and noise stream
    TrainerState copy_b = state;
    Matrix z(16, copy_b.noise_dim);
    for (double& v : z.data()) v = copy_b.rng.normal();
    Matrix fake(16, 10);
    {
        Matrix joined(16, 6 + copy_b.noise_dim);
        for (std::size_t i = 0; i < 16; ++i) {
            for (std::size_t t = 0; t < 6; ++t) joined(i, t) = halluc.attributes(i, t);
            for (std::size_t t = 0; t < copy_b.noise_dim; ++t) joined(i, 6 + t) = z(i, t);
        }
        fake = forward(copy_b.g, joined);
    }
    Matrix halluc_emb = forward(copy_b.d, halluc.attributes);
    auto preds = cosine_predict(fake, halluc_emb, config.weights.tau);
    double acc_h = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == i) acc_h += 1.0;
    acc_h /= static_cast<double>(preds.size());
    std::vector<std::size_t> space(8);
    for (std::size_t c = 0; c < 8; ++c) space[c] = c;
    double acc_u = per_class_accuracy(copy_b, synth.data, space, schedule.unseen_after(0));
    REQUIRE(gdb == Approx(std::fabs(acc_h - acc_u)).margin(1e-15));

    HallucinatedBatch empty;
    empty.attributes = Matrix(0, 6);
    REQUIRE_THROWS_AS(gdb_estimate(state, synth.data, schedule, 0, empty), StateError);
}

TEST_CASE("training never reads unseen features or attributes") {
    Rng rng(10);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 4);
    TrainerState state = make_trainer(small_config(), 6, 10);

    TrainerPhase phase = TrainerPhase::Training;
    state.phase_hook = [&](TrainerPhase p) { phase = p; };

    // which rows belong to which class
    std::vector<std::size_t> row_class(synth.data.n_samples());
    for (std::size_t i = 0; i < synth.data.n_samples(); ++i)
        row_class[i] = synth.data.label(i);

    std::size_t training_unseen_reads = 0;
    std::size_t evaluation_reads = 0;
    std::size_t current_task = 0;
    synth.data.set_access_probe([&](DataAccess kind, std::size_t idx) {
        if (phase == TrainerPhase::Evaluation) {
            ++evaluation_reads;
            return;
        }
        std::size_t cls = kind == DataAccess::FeatureRow ? row_class[idx] : idx;
        auto seen = schedule.seen_through(current_task);
        if (std::find(seen.begin(), seen.end(), cls) == seen.end()) ++training_unseen_reads;
    });

    // drive the stream manually so the probe knows the current task
    for (std::size_t t = 0; t < 4; ++t) {
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

    REQUIRE(training_unseen_reads == 0);
    REQUIRE(evaluation_reads > 0); // evaluation legitimately reads everything
}

TEST_CASE("disabling the inductive terms reduces to the baseline loss") {
    Rng rng(11);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 4);
    TrainerConfig config = small_config();
    config.weights.lambda_c = 0.0;
    config.weights.lambda_i = 0.0;
    TrainerState state = make_trainer(config, 6, 10);
    TaskRuntime rt = build_task_runtime(state, synth.data, schedule, 0);
    BatchSetup setup = make_step_context(state, rt, {0, 1, 2, 3, 4, 5, 6, 7});
    const StepContext& ctx = setup.ctx;

    GeneratorStepResult gen = generator_step_loss(state.g, nullptr, state.d, ctx);

    // reproduce the baseline parts with the same fixed noise
    Matrix bank_emb = forward(state.d, ctx.attr_bank);
    Matrix emb_rows = take_rows(bank_emb, ctx.bank_rows);
    Matrix fake_sg = forward(state.g, detail::with_noise(ctx.attr_rows, ctx.z_sg));
    double rf = real_fake_loss(ctx.real_x, fake_sg, emb_rows);

    Matrix center_in = detail::with_noise(detail::repeat_rows(ctx.attr_bank, 2), ctx.z_center);
    Matrix center_out = forward(state.g, center_in);
    Matrix gen_centers(ctx.attr_bank.rows(), 10);
    for (std::size_t c = 0; c < gen_centers.rows(); ++c)
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t t = 0; t < 10; ++t)
                gen_centers(c, t) += center_out(c * 2 + k, t) / 2.0;
    Matrix gen_cur = take_rows(gen_centers, ctx.cur_bank_rows);
    double reg =
        generator_regularizer(ctx.real_centers_cur, gen_cur, ctx.attrs_cur, ctx.weights).value;

    // classification covers the batch plus the per-class generation block
    Matrix cls_rows = concat_rows(fake_sg, center_out);
    std::vector<std::size_t> cls_labels = ctx.bank_rows;
    for (std::size_t c = 0; c < ctx.attr_bank.rows(); ++c)
        for (std::size_t k = 0; k < 2; ++k) cls_labels.push_back(c);
    double cls = classification_loss(cls_rows, cls_labels, bank_emb, ctx.weights.tau).value;

    double baseline = rf + ctx.weights.lambda_cls * cls + ctx.weights.lambda_rg * reg;
    REQUIRE(gen.loss == Approx(baseline).margin(1e-12));
}

TEST_CASE("dictionary entries move during training") {
    Rng rng(13);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 2);
    TrainerConfig config = small_config();
    config.hallucination = HallucinationMode::Dictionary;
    TrainerState state = make_trainer(config, 6, 10);
    TaskRuntime rt = build_task_runtime(state, synth.data, schedule, 0);
    state.dictionary = dictionary_init(rt.attr_bank, state.rng);
    Matrix before = state.dictionary->entries;
    train_epoch(state, rt);
    REQUIRE(!(state.dictionary->entries == before));
    REQUIRE(state.dictionary->entries.all_finite());
}

TEST_CASE("buffer counts land in the report after every task") {
    Rng rng(12);
    auto synth = generate_synthetic(small_spec(), rng);
    TaskSchedule schedule = build_static_schedule(8, 2);
    TrainerConfig config = small_config();
    config.buffer_capacity = 10;
    TrainerState state = make_trainer(config, 6, 10);
    StreamReport report = train_task_stream(state, synth.data, schedule, 1);
    REQUIRE(report.buffer_counts.size() == 2);
    std::size_t total = 0;
    for (auto [cls, n] : report.buffer_counts[1]) total += n;
    REQUIRE(total <= 10);
}
