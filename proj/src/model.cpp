#include "desmil/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace desmil {
namespace {

constexpr double kMaskLogit = -1e9;

} // namespace

void ModelParams::validate() const {
    if (item_embeddings.rows() < 2 || dim() == 0)
        throw std::invalid_argument("ModelParams: item table must hold at least one item plus pad");
    if (position_embeddings.cols() != dim() || attention_w1.cols() != dim() ||
        attention_w2.cols() != attention_w1.rows())
        throw std::invalid_argument("ModelParams: parameter shapes do not compose");
    if (position_embeddings.rows() == 0 || attention_w1.rows() == 0 || attention_w2.rows() == 0)
        throw std::invalid_argument("ModelParams: empty parameter matrix");
    for (const Matrix* m : {&item_embeddings, &position_embeddings, &attention_w1, &attention_w2})
        if (!m->all_finite()) throw std::invalid_argument("ModelParams: non-finite entry");
    for (std::size_t j = 0; j < dim(); ++j)
        if (item_embeddings(num_items(), j) != 0.0)
            throw std::invalid_argument("ModelParams: pad embedding row must stay zero");
}

ModelVars lift_params(Tape& tape, const ModelParams& params) {
    return ModelVars{tape.leaf(params.item_embeddings), tape.leaf(params.position_embeddings),
                     tape.leaf(params.attention_w1), tape.leaf(params.attention_w2)};
}

Var build_input_embedding(Tape& tape, const ModelVars& vars, std::span<const std::uint32_t> prefix,
                          std::size_t valid_length) {
    const std::size_t t = prefix.size();
    const std::size_t l_max = vars.position_embeddings.value().rows();
    if (t == 0 || valid_length == 0)
        throw std::invalid_argument("build_input_embedding: empty prefix");
    if (valid_length > t)
        throw std::invalid_argument("build_input_embedding: valid_length exceeds prefix length");
    if (t > l_max)
        throw std::invalid_argument("build_input_embedding: prefix length " + std::to_string(t) +
                                    " exceeds the " + std::to_string(l_max) + " position rows");
    std::vector<std::size_t> item_rows(t), pos_rows(t);
    for (std::size_t k = 0; k < t; ++k) {
        item_rows[k] = prefix[k];
        pos_rows[k] = k;
    }
    return tape.add(tape.gather_rows(vars.item_embeddings, item_rows),
                    tape.gather_rows(vars.position_embeddings, pos_rows));
}

Var extract_interests(Tape& tape, const ModelVars& vars, Var input_embedding,
                      std::size_t valid_length) {
    const std::size_t t = input_embedding.value().rows();
    const std::size_t c = vars.attention_w2.value().rows();
    if (valid_length == 0 || valid_length > t)
        throw std::invalid_argument("extract_interests: valid_length must lie in [1, rows]");

    Var hidden = tape.tanh(tape.matmul(vars.attention_w1, tape.transpose(input_embedding)));
    Var logits = tape.matmul(vars.attention_w2, hidden); // c x t

    if (valid_length < t) {
        Matrix bias(c, t);
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t k = valid_length; k < t; ++k) bias(i, k) = kMaskLogit;
        logits = tape.add(logits, tape.constant(std::move(bias)));
    }
    Var attention = tape.softmax_rows(logits);
    return tape.matmul(attention, input_embedding);
}

std::size_t select_interest(const Matrix& interests, std::span<const double> target_embedding) {
    if (interests.cols() != target_embedding.size())
        throw std::invalid_argument("select_interest: dimension mismatch");
    std::size_t best = 0;
    double best_score = 0.0;
    for (std::size_t i = 0; i < interests.rows(); ++i) {
        double score = 0.0;
        for (std::size_t j = 0; j < interests.cols(); ++j)
            score += interests(i, j) * target_embedding[j];
        if (i == 0 || score > best_score) {
            best = i;
            best_score = score;
        }
    }
    return best;
}

Var sampled_softmax_loss(Tape& tape, const ModelVars& vars, Var selected, std::uint32_t target,
                         std::span<const std::uint32_t> negatives, std::uint32_t pad_index) {
    if (target >= pad_index)
        throw std::invalid_argument("sampled_softmax_loss: target is not a real item");
    std::vector<std::size_t> candidates;
    candidates.reserve(negatives.size() + 1);
    candidates.push_back(target);
    for (std::uint32_t n : negatives) {
        if (n == target)
            throw std::invalid_argument("sampled_softmax_loss: target present among negatives");
        if (n >= pad_index)
            throw std::invalid_argument("sampled_softmax_loss: pad or out-of-range negative");
        candidates.push_back(n);
    }
    Var cand = tape.gather_rows(vars.item_embeddings, candidates);     // (k+1) x d
    Var logits = tape.matmul(selected, tape.transpose(cand));          // 1 x (k+1)
    return tape.neg_log_softmax_at(logits, 0);
}

Var weighted_loss(Tape& tape, Var loss, double sample_weight) {
    if (!(sample_weight >= 0.0 && sample_weight <= 1.0))
        throw std::invalid_argument("weighted_loss: sample weight outside [0, 1]");
    return tape.scale(loss, sample_weight);
}

std::vector<std::uint32_t> sample_negatives(Rng& rng, std::uint32_t target, std::size_t num_items,
                                            std::size_t k) {
    if (num_items < 2)
        throw std::invalid_argument("sample_negatives: need at least two items");
    std::vector<std::uint32_t> out;
    out.reserve(k);
    while (out.size() < k) {
        // Draw over num_items - 1 slots and shift past the target: uniform
        // over real items excluding the target, no rejection loop.
        std::uint32_t n = static_cast<std::uint32_t>(rng.next_below(num_items - 1));
        if (n >= target) ++n;
        out.push_back(n);
    }
    return out;
}

ExampleForward forward_example(Tape& tape, const ModelVars& vars,
                               std::span<const std::uint32_t> prefix, std::size_t valid_length,
                               std::uint32_t target, std::span<const std::uint32_t> negatives,
                               double sample_weight, std::optional<std::size_t> pinned_interest) {
    Var embedded = build_input_embedding(tape, vars, prefix, valid_length);
    Var interests = extract_interests(tape, vars, embedded, valid_length);

    std::size_t chosen;
    if (pinned_interest.has_value()) {
        chosen = *pinned_interest;
        if (chosen >= interests.value().rows())
            throw std::out_of_range("forward_example: pinned interest index out of range");
    } else {
        chosen = select_interest(interests.value(), vars.item_embeddings.value().row(target));
    }
    Var selected = tape.gather_rows(interests, {chosen});
    Var loss = sampled_softmax_loss(tape, vars, selected, target, negatives,
                                    static_cast<std::uint32_t>(vars.item_embeddings.value().rows() - 1));
    return ExampleForward{weighted_loss(tape, loss, sample_weight), loss, interests, chosen};
}

} // namespace desmil
