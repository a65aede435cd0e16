#pragma once

#include <cstdint>
#include <vector>

#include "desmil/data.hpp"

namespace desmil {

/// Synthetic sequences with a tunable dependency between each user's primary
/// interest cluster and one fixed companion cluster. Training and test share
/// users, primaries and companions; only the co-occurrence strength differs,
/// so a high train rho against a low test rho manufactures the distribution
/// shift the decorrelation weights are meant to survive.
struct SynthConfig {
    std::size_t num_users = 2000;
    std::size_t num_items = 1000;
    std::size_t num_clusters = 4;
    std::size_t seq_len_min = 20;
    std::size_t seq_len_max = 40;
    double rho_train = 0.9;
    double rho_test = 0.1;
    std::uint64_t seed = 42;

    void validate() const;
};

/// Share of events drawn from the user's primary cluster; the remainder goes
/// to the companion with probability rho, else uniformly to any non-primary
/// cluster.
inline constexpr double kPrimaryShare = 0.7;

struct SynthOutput {
    SequenceDataset train;
    SequenceDataset test;
    std::vector<std::uint32_t> item_cluster; // item index -> cluster
    std::vector<std::uint32_t> user_primary;
    std::vector<std::uint32_t> user_companion;
};

/// Balanced seeded partition of items into clusters; cluster sizes differ by
/// at most one.
std::vector<std::uint32_t> cluster_assignments(std::size_t num_items, std::size_t num_clusters,
                                               std::uint64_t seed);

SynthOutput generate(const SynthConfig& cfg);

} // namespace desmil
