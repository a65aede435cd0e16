#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "desmil/synth.hpp"
#include "desmil/train.hpp"

using namespace desmil;

namespace {

// Small synthetic corpus plus a validation protocol, sized for seconds-scale
// training runs.
struct SmokeData {
    SequenceDataset train;
    std::vector<EvalPair> valid;
};

SmokeData smoke_data(std::size_t users, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.num_users = users;
    cfg.num_items = 60;
    cfg.seq_len_min = 12;
    cfg.seq_len_max = 20;
    cfg.seed = seed;
    SynthOutput out = generate(cfg);
    return SmokeData{out.train, eval_pairs_by_fraction(out.test, 0.8)};
}

TrainConfig smoke_config() {
    TrainConfig cfg;
    cfg.d = 8;
    cfg.d_hat = 16;
    cfg.c = 2;
    cfg.batch_size = 8;
    cfg.k_neg = 5;
    cfg.l_max = 10;
    cfg.max_epochs = 1;
    cfg.eval_every = 1000000; // only the final batch gets scored
    return cfg;
}

bool params_bitwise_equal(const ModelParams& a, const ModelParams& b) {
    return bitwise_equal(a.item_embeddings, b.item_embeddings) &&
           bitwise_equal(a.position_embeddings, b.position_embeddings) &&
           bitwise_equal(a.attention_w1, b.attention_w1) &&
           bitwise_equal(a.attention_w2, b.attention_w2);
}

} // namespace

TEST_CASE("glorot init stays in bound with near-zero mean") {
    TrainConfig cfg;
    cfg.d = 16;
    cfg.l_max = 8;
    ModelParams p = init_params(cfg, 700);

    const struct {
        const Matrix* m;
    } tensors[] = {{&p.item_embeddings}, {&p.position_embeddings}, {&p.attention_w1},
                   {&p.attention_w2}};
    for (const auto& t : tensors) {
        const double limit = std::sqrt(6.0 / static_cast<double>(t.m->rows() + t.m->cols()));
        for (double x : t.m->values()) {
            CHECK(x >= -limit);
            CHECK(x <= limit);
        }
    }

    // 700*16 = 11200 draws; uniform(-a, a) has sd a/sqrt(3).
    const Matrix& items = p.item_embeddings;
    const double a = std::sqrt(6.0 / static_cast<double>(items.rows() + items.cols()));
    double mean = 0.0;
    for (std::size_t r = 0; r + 1 < items.rows(); ++r) // skip the pad row
        for (std::size_t k = 0; k < items.cols(); ++k) mean += items(r, k);
    const double n = static_cast<double>((items.rows() - 1) * items.cols());
    mean /= n;
    CHECK(std::abs(mean) < 3.0 * a / std::sqrt(3.0 * n));

    // Pad row pinned at zero.
    for (std::size_t k = 0; k < items.cols(); ++k) CHECK(items(700, k) == 0.0);
}

TEST_CASE("init is a pure function of the seed") {
    TrainConfig cfg;
    cfg.d = 8;
    ModelParams a = init_params(cfg, 50);
    ModelParams b = init_params(cfg, 50);
    CHECK(params_bitwise_equal(a, b));
    cfg.seed = 43;
    ModelParams c = init_params(cfg, 50);
    CHECK_FALSE(params_bitwise_equal(a, c));
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
    TrainConfig cfg;
    cfg.d = 4;
    ModelParams p = init_params(cfg, 10);
    ModelParams before = p;
    AdamState state = make_adam_state(p);
    ParamGrads grads = zero_grads(p);
    for (int i = 0; i < 5; ++i) adam_step(p, grads, state, 0.01);
    CHECK(params_bitwise_equal(p, before));
    CHECK(state.t == 5);
}

TEST_CASE("adam first step is close to a signed step of size lr") {
    TrainConfig cfg;
    cfg.d = 4;
    cfg.l_max = 3;
    ModelParams p = init_params(cfg, 6);
    ModelParams before = p;
    ParamGrads grads = zero_grads(p);
    Rng rng(11);
    for (std::size_t r = 0; r < grads.attention_w1.rows(); ++r)
        for (std::size_t c = 0; c < grads.attention_w1.cols(); ++c)
            grads.attention_w1(r, c) = rng.uniform(0.5, 2.0) * (rng.next_below(2) ? 1.0 : -1.0);

    AdamState state = make_adam_state(p);
    const double lr = 0.01;
    adam_step(p, grads, state, lr);
    for (std::size_t r = 0; r < p.attention_w1.rows(); ++r)
        for (std::size_t c = 0; c < p.attention_w1.cols(); ++c) {
            const double moved = p.attention_w1(r, c) - before.attention_w1(r, c);
            const double expected = -lr * (grads.attention_w1(r, c) > 0 ? 1.0 : -1.0);
            CHECK(moved == doctest::Approx(expected).epsilon(1e-4));
        }
    // Tensors with zero gradient did not move.
    CHECK(bitwise_equal(p.item_embeddings, before.item_embeddings));
}

TEST_CASE("adam walks a quadratic bowl to its minimum") {
    TrainConfig cfg;
    cfg.d = 4;
    cfg.d_hat = 3;
    ModelParams p = init_params(cfg, 5);
    p.attention_w1.fill(0.0);
    Matrix target(3, 4);
    Rng rng(17);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) target(r, c) = rng.uniform(-0.2, 0.2);

    AdamState state = make_adam_state(p);
    for (int step = 0; step < 100; ++step) {
        ParamGrads grads = zero_grads(p);
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 4; ++c)
                grads.attention_w1(r, c) = 2.0 * (p.attention_w1(r, c) - target(r, c));
        adam_step(p, grads, state, 0.01);
    }
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(std::abs(p.attention_w1(r, c) - target(r, c)) < 1e-3);
}

TEST_CASE("adam rejects mismatched gradient shapes") {
    TrainConfig cfg;
    cfg.d = 4;
    ModelParams p = init_params(cfg, 5);
    AdamState state = make_adam_state(p);
    ParamGrads grads = zero_grads(p);
    grads.attention_w2 = Matrix(1, 1);
    CHECK_THROWS_AS(adam_step(p, grads, state, 0.01), std::invalid_argument);
}

TEST_CASE("trace rows serialize with an empty recall field between evaluations") {
    TraceRecord r;
    r.step = 3;
    r.loss = 1.5;
    r.hsic = 0.25;
    CHECK(trace_csv_line(r) == "3,1.5,0.25,");
    r.recall50 = 33.5;
    CHECK(trace_csv_line(r) == "3,1.5,0.25,33.5");
    CHECK(std::string(kTraceCsvHeader) == "step,loss,hsic,recall50");
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.lambda = -0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    CHECK(cfg.attention_hidden() == 4 * cfg.d);
    cfg.d_hat = 5;
    CHECK(cfg.attention_hidden() == 5);
}

TEST_CASE("training on a small corpus reduces the loss") {
    SmokeData data = smoke_data(60, 7);
    TrainConfig cfg = smoke_config();
    cfg.max_epochs = 2;

    TrainResult result = train(data.train, data.valid, cfg);
    REQUIRE(result.traces.size() >= 200);
    CHECK(result.traces[199].loss < result.traces[0].loss);

    // Trace invariants: strictly increasing steps, nonnegative dependence.
    for (std::size_t i = 0; i < result.traces.size(); ++i) {
        CHECK(result.traces[i].step == i + 1);
        CHECK(result.traces[i].hsic >= 0.0);
    }
    CHECK(result.steps == result.traces.size());
}

TEST_CASE("training is deterministic for a fixed seed") {
    SmokeData data = smoke_data(12, 3);
    TrainConfig cfg = smoke_config();
    TrainResult a = train(data.train, data.valid, cfg);
    TrainResult b = train(data.train, data.valid, cfg);
    CHECK(params_bitwise_equal(a.params, b.params));
    REQUIRE(a.traces.size() == b.traces.size());
    for (std::size_t i = 0; i < a.traces.size(); ++i) {
        CHECK(a.traces[i].loss == b.traces[i].loss);
        CHECK(a.traces[i].hsic == b.traces[i].hsic);
    }
    CHECK(a.weights.w == b.weights.w);
}

TEST_CASE("a zero-lambda run is bit-identical to the unweighted baseline") {
    SmokeData data = smoke_data(15, 5);
    TrainConfig cfg = smoke_config();

    cfg.lambda = 0.0;
    cfg.weighting_enabled = true;
    TrainResult weighted = train(data.train, data.valid, cfg);

    cfg.weighting_enabled = false;
    TrainResult baseline = train(data.train, data.valid, cfg);

    CHECK(params_bitwise_equal(weighted.params, baseline.params));
    REQUIRE(weighted.traces.size() == baseline.traces.size());
    for (std::size_t i = 0; i < weighted.traces.size(); ++i) {
        CHECK(weighted.traces[i].loss == baseline.traces[i].loss);
        CHECK(weighted.traces[i].hsic == baseline.traces[i].hsic);
    }
    // And every weight stayed at exactly 1.
    for (double w : weighted.weights.w) CHECK(w == 1.0);
}

TEST_CASE("a positive-lambda run keeps weights inside the unit interval") {
    SmokeData data = smoke_data(15, 9);
    TrainConfig cfg = smoke_config();
    cfg.lambda = 10.0;
    TrainResult result = train(data.train, data.valid, cfg);
    REQUIRE(result.weights.size() > 0);
    bool any_moved = false;
    for (double w : result.weights.w) {
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
        if (w != 1.0) any_moved = true;
    }
    CHECK(any_moved);
}

TEST_CASE("the returned checkpoint is the best evaluation, not the last") {
    SmokeData data = smoke_data(20, 21);
    TrainConfig cfg = smoke_config();
    cfg.max_epochs = 2;
    cfg.eval_every = 25;
    cfg.patience = 1000; // never stop early, collect many evaluations

    TrainResult result = train(data.train, data.valid, cfg);
    double best = -1.0;
    std::size_t best_step = 0;
    std::size_t evals = 0;
    for (const TraceRecord& r : result.traces) {
        if (!r.recall50.has_value()) continue;
        ++evals;
        if (*r.recall50 > best) {
            best = *r.recall50;
            best_step = r.step;
        }
    }
    REQUIRE(evals >= 3);
    CHECK(result.best_recall50 == best);
    CHECK(result.best_step == best_step);
}

TEST_CASE("early stopping halts after patience stale evaluations") {
    SmokeData data = smoke_data(20, 33);
    TrainConfig cfg = smoke_config();
    cfg.max_epochs = 50; // far more than patience will allow
    cfg.eval_every = 10;
    cfg.patience = 3;

    TrainResult result = train(data.train, data.valid, cfg);
    // The run must have ended on a stale evaluation streak, well before the
    // epoch bound could have produced this few steps.
    const std::size_t full_run_steps = 50 * ((result.weights.size() + 7) / 8);
    CHECK(result.steps < full_run_steps);
    std::size_t stale_tail = 0;
    for (auto it = result.traces.rbegin(); it != result.traces.rend(); ++it) {
        if (!it->recall50.has_value()) continue;
        if (*it->recall50 > result.best_recall50) break;
        if (it->step == result.best_step) break;
        ++stale_tail;
    }
    CHECK(stale_tail >= 3);
}

TEST_CASE("training rejects empty inputs") {
    SmokeData data = smoke_data(10, 2);
    TrainConfig cfg = smoke_config();
    std::vector<EvalPair> no_pairs;
    CHECK_THROWS_AS(train(data.train, no_pairs, cfg), std::invalid_argument);

    SequenceDataset empty;
    CHECK_THROWS_AS(train(empty, data.valid, cfg), std::invalid_argument);
}

TEST_CASE("a diverging run aborts with a diagnostic naming the step") {
    SmokeData data = smoke_data(10, 2);
    TrainConfig cfg = smoke_config();
    cfg.lr = 1e300; // first update overflows the parameters
    CHECK_THROWS_WITH_AS(train(data.train, data.valid, cfg),
                         doctest::Contains("non-finite loss at step"), std::runtime_error);
}
