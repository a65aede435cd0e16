#include "desmil/synth.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

#include "desmil/rng.hpp"

namespace desmil {
namespace {

constexpr std::uint64_t kClusterTag = 0x636c7573746572ULL;
constexpr std::uint64_t kUserTag = 0x75736572ULL;
constexpr std::uint64_t kTrainTag = 0x747261696eULL;
constexpr std::uint64_t kTestTag = 0x74657374ULL;

std::uint32_t draw_other_cluster(Rng& rng, std::uint32_t primary, std::size_t g) {
    const std::uint64_t idx = rng.next_below(g - 1);
    return static_cast<std::uint32_t>(idx >= primary ? idx + 1 : idx);
}

std::vector<Event> draw_sequence(Rng& rng, double rho, std::uint32_t primary,
                                 std::uint32_t companion,
                                 const std::vector<std::vector<std::uint32_t>>& cluster_items,
                                 std::size_t len_min, std::size_t len_max) {
    const std::size_t g = cluster_items.size();
    const std::size_t len = len_min + rng.next_below(len_max - len_min + 1);
    std::vector<Event> seq(len);
    for (std::size_t t = 0; t < len; ++t) {
        std::uint32_t cluster;
        if (rng.next_double() < kPrimaryShare) {
            cluster = primary;
        } else if (rng.next_double() < rho) {
            cluster = companion;
        } else {
            cluster = draw_other_cluster(rng, primary, g);
        }
        const auto& pool = cluster_items[cluster];
        seq[t] = Event{pool[rng.next_below(pool.size())], static_cast<std::int64_t>(t)};
    }
    return seq;
}

} // namespace

void SynthConfig::validate() const {
    if (num_clusters < 2) throw std::invalid_argument("synth: need at least 2 clusters");
    if (num_items < num_clusters)
        throw std::invalid_argument("synth: " + std::to_string(num_items) + " items cannot fill " +
                                    std::to_string(num_clusters) + " clusters");
    if (num_users == 0) throw std::invalid_argument("synth: need at least 1 user");
    if (seq_len_min == 0 || seq_len_min > seq_len_max)
        throw std::invalid_argument("synth: sequence length range must satisfy 1 <= min <= max");
    if (rho_train < 0.0 || rho_train > 1.0 || rho_test < 0.0 || rho_test > 1.0)
        throw std::invalid_argument("synth: rho values must lie in [0, 1]");
}

std::vector<std::uint32_t> cluster_assignments(std::size_t num_items, std::size_t num_clusters,
                                               std::uint64_t seed) {
    std::vector<std::uint32_t> perm(num_items);
    std::iota(perm.begin(), perm.end(), 0u);
    Rng rng(hash_combine(seed, kClusterTag));
    for (std::size_t i = num_items; i > 1; --i)
        std::swap(perm[i - 1], perm[rng.next_below(i)]);

    std::vector<std::uint32_t> cluster(num_items);
    for (std::size_t k = 0; k < num_items; ++k)
        cluster[perm[k]] = static_cast<std::uint32_t>(k % num_clusters);
    return cluster;
}

SynthOutput generate(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t g = cfg.num_clusters;

    SynthOutput out;
    out.item_cluster = cluster_assignments(cfg.num_items, g, cfg.seed);
    std::vector<std::vector<std::uint32_t>> cluster_items(g);
    for (std::size_t j = 0; j < cfg.num_items; ++j)
        cluster_items[out.item_cluster[j]].push_back(static_cast<std::uint32_t>(j));

    ItemVocab items;
    items.ids.reserve(cfg.num_items);
    for (std::size_t j = 0; j < cfg.num_items; ++j) {
        items.ids.push_back("item" + std::to_string(j));
        items.index.emplace(items.ids.back(), static_cast<std::uint32_t>(j));
    }

    out.train.items = items;
    out.test.items = std::move(items);
    out.user_primary.resize(cfg.num_users);
    out.user_companion.resize(cfg.num_users);

    for (std::size_t u = 0; u < cfg.num_users; ++u) {
        const std::string user_id = "user" + std::to_string(u);
        for (SequenceDataset* ds : {&out.train, &out.test}) {
            ds->user_ids.push_back(user_id);
            ds->user_index.emplace(user_id, static_cast<std::uint32_t>(u));
        }

        Rng user_rng(hash_combine(cfg.seed, hash_combine(kUserTag, u)));
        const auto primary = static_cast<std::uint32_t>(user_rng.next_below(g));
        const std::uint32_t companion = draw_other_cluster(user_rng, primary, g);
        out.user_primary[u] = primary;
        out.user_companion[u] = companion;

        Rng train_rng(hash_combine(cfg.seed, hash_combine(kTrainTag, u)));
        out.train.sequences.push_back(draw_sequence(train_rng, cfg.rho_train, primary, companion,
                                                    cluster_items, cfg.seq_len_min,
                                                    cfg.seq_len_max));
        Rng test_rng(hash_combine(cfg.seed, hash_combine(kTestTag, u)));
        out.test.sequences.push_back(draw_sequence(test_rng, cfg.rho_test, primary, companion,
                                                   cluster_items, cfg.seq_len_min,
                                                   cfg.seq_len_max));
    }
    return out;
}

} // namespace desmil
