#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "desmil/data.hpp"
#include "desmil/decorrelate.hpp"
#include "desmil/model.hpp"

namespace desmil {

struct TrainConfig {
    std::size_t d = 64;
    std::size_t d_hat = 0; // 0 means 4*d
    std::size_t c = 4;
    double lambda = 1.0;
    std::size_t batch_size = 128;
    double lr = 0.001;
    std::size_t k_neg = 10;
    std::size_t l_max = 20;
    std::size_t patience = 5;
    std::size_t max_epochs = 10;
    std::uint64_t seed = 42;
    std::size_t eval_every = 500;
    double eta_w = 0.01;
    bool weighting_enabled = true; // false runs the plain unweighted baseline
    KernelConfig kernel;
    DependenceAxis axis = DependenceAxis::coordinates;

    std::size_t attention_hidden() const { return d_hat == 0 ? 4 * d : d_hat; }
    void validate() const;
};

/// One per-step trace row. The loss is the batch-mean unweighted loss and the
/// dependence is measured on the raw interest matrices, so weighted and
/// unweighted runs stay directly comparable.
struct TraceRecord {
    std::size_t step = 0;
    double loss = 0.0;
    double hsic = 0.0;
    std::optional<double> recall50;
};

inline constexpr const char* kTraceCsvHeader = "step,loss,hsic,recall50";

/// `step,loss,hsic,recall50` with the recall field empty on non-eval steps.
std::string trace_csv_line(const TraceRecord& record);

struct TrainHooks {
    std::function<void(const TraceRecord&)> on_trace;
};

struct TrainResult {
    ModelParams params; // the best-validation checkpoint, not the final state
    SampleWeightTable weights;
    std::vector<TraceRecord> traces;
    double best_recall50 = 0.0;
    std::size_t best_step = 0;
    std::size_t steps = 0;
};

/// Glorot uniform init for all four tensors, pad row zeroed afterwards.
ModelParams init_params(const TrainConfig& cfg, std::size_t num_items);

/// Gradient accumulator mirroring the parameter tensors.
struct ParamGrads {
    Matrix item_embeddings;
    Matrix position_embeddings;
    Matrix attention_w1;
    Matrix attention_w2;
};

ParamGrads zero_grads(const ModelParams& params);

struct AdamState {
    ParamGrads m;
    ParamGrads v;
    std::size_t t = 0;
};

AdamState make_adam_state(const ModelParams& params);

/// One bias-corrected Adam update (beta1 0.9, beta2 0.999, eps 1e-8). The pad
/// embedding row is left untouched.
void adam_step(ModelParams& params, const ParamGrads& grads, AdamState& state, double lr);

/// Alternating optimization: per batch, one Adam step on the parameters under
/// fixed sample weights, then one projected weight step under fixed
/// parameters. Validation Recall@50 every eval_every steps decides the
/// returned checkpoint and early stopping.
TrainResult train(const SequenceDataset& train_ds, const std::vector<EvalPair>& valid_pairs,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

} // namespace desmil
