#include "desmil/train.hpp"

#include <cassert>
#include <charconv>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "desmil/evaluate.hpp"
#include "desmil/rng.hpp"

namespace desmil {
namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-8;
constexpr std::uint64_t kInitTag = 0x696e6974ULL;
constexpr std::uint64_t kNegTag = 0x6e6567ULL;

void glorot_fill(Matrix& m, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
}

void append_number(std::string& out, double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    out.append(buf, ptr);
}

// One Adam tensor update; rows at or past `frozen_from` stay untouched.
void adam_tensor(Matrix& p, const Matrix& g, Matrix& m, Matrix& v, double lr, double bc1,
                 double bc2, std::size_t frozen_from) {
    for (std::size_t r = 0; r < p.rows(); ++r) {
        if (r >= frozen_from) break;
        for (std::size_t c = 0; c < p.cols(); ++c) {
            const double grad = g(r, c);
            m(r, c) = kBeta1 * m(r, c) + (1.0 - kBeta1) * grad;
            v(r, c) = kBeta2 * v(r, c) + (1.0 - kBeta2) * grad * grad;
            const double m_hat = m(r, c) / bc1;
            const double v_hat = v(r, c) / bc2;
            p(r, c) -= lr * m_hat / (std::sqrt(v_hat) + kEpsilon);
        }
    }
}

#ifndef NDEBUG
std::uint64_t hash_doubles(std::uint64_t h, const Matrix& m) {
    return fnv1a64(
        std::string_view(reinterpret_cast<const char*>(m.data()), m.size() * sizeof(double)), h);
}

std::uint64_t hash_params(const ModelParams& p) {
    std::uint64_t h = hash_doubles(1469598103934665603ULL, p.item_embeddings);
    h = hash_doubles(h, p.position_embeddings);
    h = hash_doubles(h, p.attention_w1);
    return hash_doubles(h, p.attention_w2);
}

std::uint64_t hash_weights(const SampleWeightTable& t) {
    return fnv1a64(
        std::string_view(reinterpret_cast<const char*>(t.w.data()), t.w.size() * sizeof(double)));
}
#endif

} // namespace

void TrainConfig::validate() const {
    if (d == 0 || c == 0 || batch_size == 0 || k_neg == 0 || l_max == 0 || patience == 0 ||
        max_epochs == 0 || eval_every == 0)
        throw std::invalid_argument("train config: size fields must be positive");
    if (lambda < 0.0) throw std::invalid_argument("train config: lambda must be nonnegative");
    if (lr <= 0.0 || eta_w <= 0.0)
        throw std::invalid_argument("train config: step sizes must be positive");
}

std::string trace_csv_line(const TraceRecord& record) {
    std::string out = std::to_string(record.step);
    out += ',';
    append_number(out, record.loss);
    out += ',';
    append_number(out, record.hsic);
    out += ',';
    if (record.recall50.has_value()) append_number(out, *record.recall50);
    return out;
}

ModelParams init_params(const TrainConfig& cfg, std::size_t num_items) {
    if (num_items == 0) throw std::invalid_argument("init_params: no items");
    ModelParams p;
    p.item_embeddings = Matrix(num_items + 1, cfg.d);
    p.position_embeddings = Matrix(cfg.l_max, cfg.d);
    p.attention_w1 = Matrix(cfg.attention_hidden(), cfg.d);
    p.attention_w2 = Matrix(cfg.c, cfg.attention_hidden());

    Rng rng(hash_combine(cfg.seed, kInitTag));
    glorot_fill(p.item_embeddings, rng);
    glorot_fill(p.position_embeddings, rng);
    glorot_fill(p.attention_w1, rng);
    glorot_fill(p.attention_w2, rng);
    for (std::size_t k = 0; k < cfg.d; ++k) p.item_embeddings(num_items, k) = 0.0;
    return p;
}

ParamGrads zero_grads(const ModelParams& params) {
    return ParamGrads{
        Matrix(params.item_embeddings.rows(), params.item_embeddings.cols()),
        Matrix(params.position_embeddings.rows(), params.position_embeddings.cols()),
        Matrix(params.attention_w1.rows(), params.attention_w1.cols()),
        Matrix(params.attention_w2.rows(), params.attention_w2.cols()),
    };
}

AdamState make_adam_state(const ModelParams& params) {
    return AdamState{zero_grads(params), zero_grads(params), 0};
}

void adam_step(ModelParams& params, const ParamGrads& grads, AdamState& state, double lr) {
    if (!params.item_embeddings.same_shape(grads.item_embeddings) ||
        !params.position_embeddings.same_shape(grads.position_embeddings) ||
        !params.attention_w1.same_shape(grads.attention_w1) ||
        !params.attention_w2.same_shape(grads.attention_w2))
        throw std::invalid_argument("adam_step: gradient shapes disagree with parameters");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
    adam_tensor(params.item_embeddings, grads.item_embeddings, state.m.item_embeddings,
                state.v.item_embeddings, lr, bc1, bc2, params.num_items());
    adam_tensor(params.position_embeddings, grads.position_embeddings,
                state.m.position_embeddings, state.v.position_embeddings, lr, bc1, bc2,
                params.position_embeddings.rows());
    adam_tensor(params.attention_w1, grads.attention_w1, state.m.attention_w1,
                state.v.attention_w1, lr, bc1, bc2, params.attention_w1.rows());
    adam_tensor(params.attention_w2, grads.attention_w2, state.m.attention_w2,
                state.v.attention_w2, lr, bc1, bc2, params.attention_w2.rows());
}

TrainResult train(const SequenceDataset& train_ds, const std::vector<EvalPair>& valid_pairs,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (valid_pairs.empty()) throw std::invalid_argument("train: empty validation set");
    const std::vector<TrainingExample> examples = make_examples(train_ds, cfg.l_max);
    if (examples.empty()) throw std::invalid_argument("train: no training examples");

    ModelParams params = init_params(cfg, train_ds.num_items());
    AdamState adam = make_adam_state(params);
    TrainResult result;
    result.weights = SampleWeightTable(examples.size());

    result.params = params;
    result.best_recall50 = -1.0;
    std::size_t stale_evals = 0;
    std::size_t step = 0;
    bool stop = false;

    auto run_eval = [&](TraceRecord& record) {
        const MetricsReport report = evaluate_model(params, valid_pairs, 20, 50);
        record.recall50 = report.recall50;
        if (report.recall50 > result.best_recall50) {
            result.best_recall50 = report.recall50;
            result.best_step = record.step;
            result.params = params;
            stale_evals = 0;
        } else {
            ++stale_evals;
        }
    };

    for (std::size_t epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
        const std::vector<Batch> batches = make_batches(examples, cfg.batch_size, cfg.seed, epoch,
                                                        cfg.l_max, train_ds.pad_index());
        for (std::size_t b = 0; b < batches.size() && !stop; ++b) {
            const Batch& batch = batches[b];
            ++step;

#ifndef NDEBUG
            const std::uint64_t weights_hash = hash_weights(result.weights);
#endif
            ParamGrads grads = zero_grads(params);
            std::vector<Matrix> interest_snapshots(batch.batch_size);
            double raw_loss_sum = 0.0;

            for (std::size_t r = 0; r < batch.batch_size; ++r) {
                const std::size_t sample_id = batch.sample_ids[r];
                Rng neg_rng(hash_combine(cfg.seed,
                                         hash_combine(kNegTag, hash_combine(step, sample_id))));
                const std::vector<std::uint32_t> negatives =
                    sample_negatives(neg_rng, batch.targets[r], train_ds.num_items(), cfg.k_neg);

                Tape tape;
                ModelVars vars = lift_params(tape, params);
                const std::span<const std::uint32_t> prefix(batch.prefixes.data() + r * batch.l_max,
                                                            batch.l_max);
                ExampleForward fw =
                    forward_example(tape, vars, prefix, batch.valid_lengths[r], batch.targets[r],
                                    negatives, result.weights.w[sample_id]);
                tape.backward(fw.loss);

                grads.item_embeddings += tape.adjoint_of(vars.item_embeddings);
                grads.position_embeddings += tape.adjoint_of(vars.position_embeddings);
                grads.attention_w1 += tape.adjoint_of(vars.attention_w1);
                grads.attention_w2 += tape.adjoint_of(vars.attention_w2);

                raw_loss_sum += fw.raw_loss.value()(0, 0);
                interest_snapshots[r] = fw.interests.value();
            }

            const double inv = 1.0 / static_cast<double>(batch.batch_size);
            grads.item_embeddings *= inv;
            grads.position_embeddings *= inv;
            grads.attention_w1 *= inv;
            grads.attention_w2 *= inv;

            const double mean_loss = raw_loss_sum * inv;
            if (!std::isfinite(mean_loss))
                throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                         " (epoch " + std::to_string(epoch) + ", batch " +
                                         std::to_string(b) + ")");

            adam_step(params, grads, adam, cfg.lr);
#ifndef NDEBUG
            assert(hash_weights(result.weights) == weights_hash);
            const std::uint64_t theta_hash = hash_params(params);
#endif
            if (cfg.weighting_enabled)
                update_sample_weights(batch.sample_ids, interest_snapshots, result.weights,
                                      cfg.lambda, cfg.eta_w, step, cfg.kernel, cfg.axis);
#ifndef NDEBUG
            assert(hash_params(params) == theta_hash);
#endif

            double dependence_sum = 0.0;
            for (const Matrix& m : interest_snapshots)
                dependence_sum += interest_dependence(m, cfg.kernel);

            TraceRecord record;
            record.step = step;
            record.loss = mean_loss;
            record.hsic = dependence_sum * inv;
            // The very last batch is scored too, so a run shorter than
            // eval_every still returns a validated checkpoint.
            const bool last_batch = epoch + 1 == cfg.max_epochs && b + 1 == batches.size();
            if (step % cfg.eval_every == 0 || last_batch) {
                run_eval(record);
                if (stale_evals >= cfg.patience) stop = true;
            }
            if (hooks.on_trace) hooks.on_trace(record);
            result.traces.push_back(record);
        }
    }

    result.steps = step;
    return result;
}

} // namespace desmil
