#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace desmil {

struct InteractionEvent {
    std::string user_id;
    std::string item_id;
    std::int64_t timestamp = 0;
};

/// One (item, time) behavior after id densification.
struct Event {
    std::uint32_t item = 0;
    std::int64_t timestamp = 0;

    bool operator==(const Event&) const = default;
};

struct ItemVocab {
    std::vector<std::string> ids; // dense index -> item id
    std::unordered_map<std::string, std::uint32_t> index;

    std::size_t size() const { return ids.size(); }
};

/// Per-user behavior sequences over dense user/item indices. Sequences are
/// ordered by timestamp; equal timestamps keep input-file order.
struct SequenceDataset {
    std::vector<std::string> user_ids;
    std::unordered_map<std::string, std::uint32_t> user_index;
    ItemVocab items;
    std::vector<std::vector<Event>> sequences;

    std::size_t num_users() const { return user_ids.size(); }
    std::size_t num_items() const { return items.size(); }
    /// Reserved padding index; never a valid item.
    std::uint32_t pad_index() const { return static_cast<std::uint32_t>(items.size()); }
};

struct IngestStats {
    std::size_t lines = 0;
    std::size_t malformed = 0;
    std::size_t unknown_items = 0; // only with a fixed vocabulary
};

enum class IngestFormat { tsv };

/// Reads `user_id<TAB>item_id<TAB>timestamp` lines. With a fixed vocabulary,
/// events whose item is unknown are dropped and counted. More than 1%
/// malformed lines is a hard error.
SequenceDataset ingest(const std::filesystem::path& path, IngestFormat format = IngestFormat::tsv,
                       const ItemVocab* fixed_vocab = nullptr, IngestStats* stats = nullptr);

void export_tsv(const SequenceDataset& ds, const std::filesystem::path& path);

void dump_vocab(const ItemVocab& vocab, const std::filesystem::path& path);
ItemVocab load_vocab(const std::filesystem::path& path);

struct ClassicSplit {
    SequenceDataset train;
    SequenceDataset valid;
    SequenceDataset test;
};

/// User-disjoint split; a user's bucket is decided by ranking seeded user-id
/// hashes, so the cut sizes are exact for the given ratios.
ClassicSplit split_classic(const SequenceDataset& ds, double train_ratio, double valid_ratio,
                           double test_ratio, std::uint64_t seed);

struct OodSplit {
    SequenceDataset train;        // first 50% per user (full sequence when len < 10)
    SequenceDataset valid;        // following 10% per user
    SequenceDataset test_inputs;  // first floor(z*len) events per user
    SequenceDataset test_targets; // remaining events per user
};

/// Temporal split with covariate-shift ratio z in [0.5, 0.9]. Users with
/// fewer than 10 events contribute to training only.
OodSplit split_ood(const SequenceDataset& ds, double z);

struct TrainingExample {
    std::size_t sample_id = 0;
    std::uint32_t user = 0;
    std::vector<std::uint32_t> prefix; // most recent min(t, L_max) items before target
    std::uint32_t target = 0;
};

std::vector<TrainingExample> make_examples(const SequenceDataset& ds, std::size_t l_max);

struct Batch {
    std::size_t batch_size = 0;
    std::size_t l_max = 0;
    std::vector<std::uint32_t> prefixes; // batch_size x l_max grid, pad-filled
    std::vector<std::uint32_t> valid_lengths;
    std::vector<std::uint32_t> targets;
    std::vector<std::size_t> sample_ids;

    std::uint32_t prefix_at(std::size_t row, std::size_t k) const { return prefixes[row * l_max + k]; }
};

/// One epoch worth of batches: a seeded permutation of all examples, chunked
/// into batches of size `batch_size`, final short batch emitted as-is.
std::vector<Batch> make_batches(const std::vector<TrainingExample>& examples,
                                std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch,
                                std::size_t l_max, std::uint32_t pad_index);

/// One evaluation event: a user's input history and the set of held-out items.
struct EvalPair {
    std::string user_id;
    std::vector<std::uint32_t> input;
    std::vector<std::uint32_t> targets;
};

/// Splits each user's own sequence at floor(fraction*len); users too short to
/// yield both a nonempty input and target are skipped.
std::vector<EvalPair> eval_pairs_by_fraction(const SequenceDataset& ds, double fraction);

/// Joins two datasets over the same item vocabulary by user id: inputs from
/// one, target sets from the other. Users missing on either side are skipped.
std::vector<EvalPair> eval_pairs_by_join(const SequenceDataset& inputs,
                                         const SequenceDataset& targets);

/// Expands multi-target pairs into one singleton-target pair per held-out item.
std::vector<EvalPair> expand_per_target(const std::vector<EvalPair>& pairs);

} // namespace desmil
