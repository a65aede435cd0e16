#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "desmil/data.hpp"
#include "desmil/matrix.hpp"
#include "desmil/model.hpp"

namespace desmil {

/// Aggregated retrieval metrics, all as percentages in [0, 100].
struct MetricsReport {
    double recall20 = 0.0;
    double recall50 = 0.0;
    double ndcg20 = 0.0;
    double ndcg50 = 0.0;
    double hr20 = 0.0;
    double hr50 = 0.0;
    std::size_t users = 0;
};

/// Value-only forward pass for serving: interests for one input history,
/// truncated to the most recent max_prefix items.
Matrix interests_for_input(const ModelParams& params, std::span<const std::uint32_t> input);

/// Every interest retrieves its top N items by inner product; the union is
/// re-ranked by each item's best score over interests, ties broken by lower
/// item index. The pad item never appears.
std::vector<std::uint32_t> retrieve_topN(const Matrix& interests, const ModelParams& params,
                                         std::size_t n);

double recall_at_p(std::span<const std::uint32_t> recommended,
                   std::span<const std::uint32_t> relevant, std::size_t p);
double ndcg_at_p(std::span<const std::uint32_t> recommended,
                 std::span<const std::uint32_t> relevant, std::size_t p);
double hr_at_p(std::span<const std::uint32_t> recommended,
               std::span<const std::uint32_t> relevant, std::size_t p);

/// Whether each user's held-out items form one relevant set (default) or
/// expand into one evaluation event per target item.
enum class TargetGranularity { per_user, per_target };

MetricsReport evaluate_model(const ModelParams& params, std::span<const EvalPair> pairs,
                             std::size_t cutoff_small = 20, std::size_t cutoff_large = 50,
                             TargetGranularity granularity = TargetGranularity::per_user);

/// Single-line JSON with fixed key order:
/// recall20, recall50, ndcg20, ndcg50, hr20, hr50, users.
std::string metrics_to_json(const MetricsReport& report);

} // namespace desmil
