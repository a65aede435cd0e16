#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "desmil/matrix.hpp"
#include "desmil/rng.hpp"
#include "desmil/tape.hpp"

namespace desmil {

/// Network parameters. The item table carries one extra trailing row for the
/// padding index; that row stays all-zero and is never updated.
struct ModelParams {
    Matrix item_embeddings;     // (num_items + 1) x d
    Matrix position_embeddings; // l_max x d
    Matrix attention_w1;        // d_hat x d
    Matrix attention_w2;        // c x d_hat

    std::size_t num_items() const { return item_embeddings.rows() - 1; }
    std::size_t dim() const { return item_embeddings.cols(); }
    std::size_t max_prefix() const { return position_embeddings.rows(); }
    std::size_t attention_hidden() const { return attention_w1.rows(); }
    std::size_t num_interests() const { return attention_w2.rows(); }
    std::uint32_t pad_index() const { return static_cast<std::uint32_t>(num_items()); }

    /// Throws when shapes disagree, entries are non-finite, or the pad row
    /// has drifted from zero.
    void validate() const;
};

/// Tape handles for all four parameter matrices of one forward pass.
struct ModelVars {
    Var item_embeddings;
    Var position_embeddings;
    Var attention_w1;
    Var attention_w2;
};

ModelVars lift_params(Tape& tape, const ModelParams& params);

/// Sums item and position embeddings over the prefix grid: row k is
/// items[prefix_k] + positions[k]. Rows at or past valid_length carry the pad
/// item and are excluded later by attention masking.
Var build_input_embedding(Tape& tape, const ModelVars& vars, std::span<const std::uint32_t> prefix,
                          std::size_t valid_length);

/// Self-attentive interest extraction: softmax(W2 tanh(W1 Eᵀ)) gives c
/// attention rows over positions, masked positions receive a -1e9 logit and
/// thus exactly zero probability; result is the c x d interest matrix A E.
Var extract_interests(Tape& tape, const ModelVars& vars, Var input_embedding,
                      std::size_t valid_length);

/// Argmax of <interest row, target embedding>, lowest index on ties. Pure
/// value computation; the chosen index is a constant for gradients.
std::size_t select_interest(const Matrix& interests, std::span<const double> target_embedding);

/// Sampled-softmax cross-entropy of the target against k sampled negatives.
/// Negatives must exclude both the target and the pad index.
Var sampled_softmax_loss(Tape& tape, const ModelVars& vars, Var selected, std::uint32_t target,
                         std::span<const std::uint32_t> negatives, std::uint32_t pad_index);

/// Per-sample weight applied to a scalar loss; the weight is a constant here,
/// gradients to it belong to the decorrelation path.
Var weighted_loss(Tape& tape, Var loss, double sample_weight);

/// Uniform negatives over real items, excluding the target.
std::vector<std::uint32_t> sample_negatives(Rng& rng, std::uint32_t target, std::size_t num_items,
                                            std::size_t k);

struct ExampleForward {
    Var loss;                   // weighted scalar loss
    Var raw_loss;               // same loss before the sample weight
    Var interests;              // c x d
    std::size_t selected = 0;   // chosen interest row
};

/// Whole per-example pipeline: embed, extract, select, score. A pinned
/// interest index bypasses the argmax (used by gradient checks, where the
/// selection must stay constant under parameter perturbations).
ExampleForward forward_example(Tape& tape, const ModelVars& vars,
                               std::span<const std::uint32_t> prefix, std::size_t valid_length,
                               std::uint32_t target, std::span<const std::uint32_t> negatives,
                               double sample_weight,
                               std::optional<std::size_t> pinned_interest = std::nullopt);

} // namespace desmil
