#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "desmil/matrix.hpp"

namespace desmil {

/// RBF bandwidth selection: a fixed positive sigma, or the median heuristic
/// (median pairwise distance of the samples at hand, falling back to 1 when
/// that median is zero).
struct KernelConfig {
    std::optional<double> sigma;

    static KernelConfig median() { return KernelConfig{}; }
    static KernelConfig fixed(double s);
    bool is_median() const { return !sigma.has_value(); }
};

/// Per-sample training weights indexed by sample_id, all starting at 1.
struct SampleWeightTable {
    std::vector<double> w;
    std::vector<std::uint64_t> epoch_tag; // step of the last update per entry

    SampleWeightTable() = default;
    explicit SampleWeightTable(std::size_t n) : w(n, 1.0), epoch_tag(n, 0) {}
    std::size_t size() const { return w.size(); }
};

double resolve_bandwidth(std::span<const double> x, const KernelConfig& cfg);

/// K_ij = exp(-(x_i - x_j)^2 / sigma^2); symmetric with unit diagonal.
Matrix rbf_kernel_matrix(std::span<const double> x, const KernelConfig& cfg);

/// Rows of `samples` are the m observations; squared Euclidean distances in
/// the exponent, median heuristic over pairwise Euclidean distances.
Matrix rbf_kernel_from_rows(const Matrix& samples, const KernelConfig& cfg);

/// (m-1)^-2 tr(K_U P K_V P) with the centering matrix P = I - (1/m) 11^T.
/// Tiny negative rounding (>= -1e-12) is clamped to 0; anything lower throws.
double empirical_hsic(std::span<const double> u, std::span<const double> v,
                      const KernelConfig& cfg);

/// Pairwise dependence among interest rows: sum over i < j of the HSIC
/// between rows i and j, the d embedding coordinates acting as the samples.
/// Fewer than two rows is vacuous: returns 0 and warns once per process.
double interest_dependence(const Matrix& m_hat, const KernelConfig& cfg);

/// M-hat = w_h * M. The weight is the variable of the decorrelation path;
/// M itself is a constant snapshot of the forward pass.
Matrix reweight_interests(const Matrix& interests, double sample_weight);

/// d interest_dependence(w * M) / dw, with each pair's bandwidths resolved at
/// the current w and then held fixed for the differentiation. Optionally also
/// reports the objective value at w under those bandwidths.
double weight_dependence_gradient(const Matrix& interests, double sample_weight,
                                  const KernelConfig& cfg, double* value_out = nullptr);

/// Which axis supplies the HSIC samples: the d embedding coordinates of one
/// example (default), or the examples of the whole batch.
enum class DependenceAxis { coordinates, batch };

/// Batch-axis dependence: for each interest slot, the m examples' weighted
/// interest vectors are the samples; sums pairwise HSIC over interest slots.
double batch_interest_dependence(std::span<const Matrix> interests,
                                 std::span<const double> weights, const KernelConfig& cfg);

struct WeightUpdateStats {
    std::size_t updated = 0;           // entries written
    std::size_t clipped = 0;           // raw steps that left [0, 1]
    std::size_t descent_violations = 0; // unclipped steps where the objective rose
    double objective_before = 0.0;     // summed over the batch, fixed bandwidths
    double objective_after = 0.0;
};

/// One projected gradient step per in-batch sample:
/// w_h <- clip(w_h - eta_w * lambda * dObj/dw_h, 0, 1). Bandwidths are
/// resolved from the current weighted interests and frozen for the step, so
/// the before/after objectives are comparable. Entries outside the batch are
/// untouched.
WeightUpdateStats update_sample_weights(std::span<const std::size_t> sample_ids,
                                        std::span<const Matrix> interests,
                                        SampleWeightTable& table, double lambda, double eta_w,
                                        std::uint64_t step, const KernelConfig& cfg,
                                        DependenceAxis axis = DependenceAxis::coordinates);

void dump_weight_table(const SampleWeightTable& table, const std::filesystem::path& path);

} // namespace desmil
