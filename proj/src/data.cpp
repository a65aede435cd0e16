#include "desmil/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "desmil/rng.hpp"

namespace desmil {
namespace {

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

// Splits one TSV line into exactly three nonempty fields plus a parsed
// timestamp. Returns false on any deviation.
bool parse_line(const std::string& line, InteractionEvent& out) {
    const std::size_t tab1 = line.find('\t');
    if (tab1 == std::string::npos || tab1 == 0) return false;
    const std::size_t tab2 = line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos || tab2 == tab1 + 1) return false;
    if (line.find('\t', tab2 + 1) != std::string::npos) return false;

    std::size_t end = line.size();
    if (end > tab2 + 1 && line.back() == '\r') --end; // tolerate CRLF input
    if (end <= tab2 + 1) return false;

    out.user_id.assign(line, 0, tab1);
    out.item_id.assign(line, tab1 + 1, tab2 - tab1 - 1);
    const char* first = line.data() + tab2 + 1;
    const char* last = line.data() + end;
    std::int64_t ts = 0;
    auto [ptr, ec] = std::from_chars(first, last, ts);
    if (ec != std::errc() || ptr != last || ts < 0) return false;
    out.timestamp = ts;
    return true;
}

// Floor with a small guard so exact products like 0.1 * 30 land on the
// intended integer despite binary rounding.
std::size_t floor_count(double x) {
    if (x <= 0.0) return 0;
    return static_cast<std::size_t>(x + 1e-9);
}

// Copies selected (user, event-range) slices into a fresh dataset that keeps
// the parent's item vocabulary.
struct UserSlice {
    std::uint32_t user = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
};

SequenceDataset make_subset(const SequenceDataset& parent, const std::vector<UserSlice>& slices) {
    SequenceDataset out;
    out.items = parent.items;
    out.user_ids.reserve(slices.size());
    out.sequences.reserve(slices.size());
    for (const UserSlice& s : slices) {
        const auto& seq = parent.sequences[s.user];
        const std::uint32_t idx = static_cast<std::uint32_t>(out.user_ids.size());
        out.user_ids.push_back(parent.user_ids[s.user]);
        out.user_index.emplace(parent.user_ids[s.user], idx);
        out.sequences.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(s.begin),
                                   seq.begin() + static_cast<std::ptrdiff_t>(s.end));
    }
    return out;
}

} // namespace

SequenceDataset ingest(const std::filesystem::path& path, IngestFormat format,
                       const ItemVocab* fixed_vocab, IngestStats* stats) {
    if (format != IngestFormat::tsv) fail("ingest: unsupported format");
    std::ifstream in(path);
    if (!in) fail("ingest: cannot open " + path.string());

    SequenceDataset ds;
    if (fixed_vocab != nullptr) ds.items = *fixed_vocab;

    IngestStats local;
    std::string line;
    InteractionEvent ev;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++local.lines;
        if (!parse_line(line, ev)) {
            ++local.malformed;
            continue;
        }
        std::uint32_t item = 0;
        if (fixed_vocab != nullptr) {
            auto it = ds.items.index.find(ev.item_id);
            if (it == ds.items.index.end()) {
                ++local.unknown_items;
                continue;
            }
            item = it->second;
        } else {
            auto [it, inserted] =
                ds.items.index.emplace(ev.item_id, static_cast<std::uint32_t>(ds.items.ids.size()));
            if (inserted) ds.items.ids.push_back(ev.item_id);
            item = it->second;
        }
        auto [uit, uinserted] =
            ds.user_index.emplace(ev.user_id, static_cast<std::uint32_t>(ds.user_ids.size()));
        if (uinserted) {
            ds.user_ids.push_back(ev.user_id);
            ds.sequences.emplace_back();
        }
        ds.sequences[uit->second].push_back(Event{item, ev.timestamp});
    }

    if (local.lines > 0 && local.malformed * 100 > local.lines) {
        std::ostringstream msg;
        msg << "ingest: " << local.malformed << " of " << local.lines
            << " lines malformed in " << path.string() << " (limit is 1%)";
        fail(msg.str());
    }
    for (auto& seq : ds.sequences)
        std::stable_sort(seq.begin(), seq.end(),
                         [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    if (stats != nullptr) *stats = local;
    return ds;
}

void export_tsv(const SequenceDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail("export_tsv: cannot open " + path.string() + " for writing");
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        for (const Event& e : ds.sequences[u])
            out << ds.user_ids[u] << '\t' << ds.items.ids[e.item] << '\t' << e.timestamp << '\n';
    }
    if (!out) fail("export_tsv: write failed for " + path.string());
}

void dump_vocab(const ItemVocab& vocab, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail("dump_vocab: cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < vocab.ids.size(); ++i) out << vocab.ids[i] << '\t' << i << '\n';
    if (!out) fail("dump_vocab: write failed for " + path.string());
}

ItemVocab load_vocab(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("load_vocab: cannot open " + path.string());
    std::vector<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) fail("load_vocab: malformed line " + std::to_string(lineno));
        std::size_t end = line.size();
        if (line.back() == '\r') --end;
        std::uint64_t idx = 0;
        auto [ptr, ec] = std::from_chars(line.data() + tab + 1, line.data() + end, idx);
        if (ec != std::errc() || ptr != line.data() + end)
            fail("load_vocab: malformed index on line " + std::to_string(lineno));
        if (idx >= ids.size()) ids.resize(idx + 1);
        if (!ids[idx].empty()) fail("load_vocab: duplicate index " + std::to_string(idx));
        ids[idx] = line.substr(0, tab);
    }
    ItemVocab vocab;
    vocab.ids = std::move(ids);
    for (std::size_t i = 0; i < vocab.ids.size(); ++i) {
        if (vocab.ids[i].empty()) fail("load_vocab: missing index " + std::to_string(i));
        if (!vocab.index.emplace(vocab.ids[i], static_cast<std::uint32_t>(i)).second)
            fail("load_vocab: duplicate item id " + vocab.ids[i]);
    }
    return vocab;
}

ClassicSplit split_classic(const SequenceDataset& ds, double train_ratio, double valid_ratio,
                           double test_ratio, std::uint64_t seed) {
    if (train_ratio <= 0.0 || valid_ratio <= 0.0 || test_ratio <= 0.0)
        throw std::invalid_argument("split_classic: ratios must be positive");
    if (std::abs(train_ratio + valid_ratio + test_ratio - 1.0) > 1e-9)
        throw std::invalid_argument("split_classic: ratios must sum to 1");
    const std::size_t n = ds.num_users();
    if (n < 3) fail("split_classic: need at least 3 users, have " + std::to_string(n));

    // Each user's bucket depends only on (seed, user_id): users are ranked by
    // a seeded hash of their id and the ranking is cut at the exact ratios.
    std::vector<std::uint32_t> order(n);
    std::vector<std::uint64_t> key(n);
    for (std::size_t u = 0; u < n; ++u) {
        order[u] = static_cast<std::uint32_t>(u);
        key[u] = splitmix64(hash_combine(seed, fnv1a64(ds.user_ids[u])));
    }
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (key[a] != key[b]) return key[a] < key[b];
        return ds.user_ids[a] < ds.user_ids[b];
    });

    std::size_t n_train = floor_count(train_ratio * static_cast<double>(n));
    std::size_t n_valid = floor_count(valid_ratio * static_cast<double>(n));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
    n_valid = std::clamp<std::size_t>(n_valid, 1, n - 1 - n_train);

    std::vector<UserSlice> tr, va, te;
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint32_t u = order[r];
        UserSlice s{u, 0, ds.sequences[u].size()};
        if (r < n_train)
            tr.push_back(s);
        else if (r < n_train + n_valid)
            va.push_back(s);
        else
            te.push_back(s);
    }
    // Keep the parent's user order inside each bucket.
    auto by_user = [](const UserSlice& a, const UserSlice& b) { return a.user < b.user; };
    std::sort(tr.begin(), tr.end(), by_user);
    std::sort(va.begin(), va.end(), by_user);
    std::sort(te.begin(), te.end(), by_user);
    return ClassicSplit{make_subset(ds, tr), make_subset(ds, va), make_subset(ds, te)};
}

OodSplit split_ood(const SequenceDataset& ds, double z) {
    if (!(z >= 0.5 - 1e-12 && z <= 0.9 + 1e-12))
        throw std::invalid_argument("split_ood: z must lie in [0.5, 0.9]");

    std::vector<UserSlice> tr, va, in, tg;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        const std::size_t len = ds.sequences[u].size();
        if (len == 0) continue;
        const std::uint32_t uid = static_cast<std::uint32_t>(u);
        if (len < 10) {
            tr.push_back(UserSlice{uid, 0, len});
            continue;
        }
        const std::size_t n_tr = floor_count(0.5 * static_cast<double>(len));
        const std::size_t n_va = floor_count(0.1 * static_cast<double>(len));
        const std::size_t n_in = floor_count(z * static_cast<double>(len));
        tr.push_back(UserSlice{uid, 0, n_tr});
        va.push_back(UserSlice{uid, n_tr, n_tr + n_va});
        in.push_back(UserSlice{uid, 0, n_in});
        tg.push_back(UserSlice{uid, n_in, len});
    }
    return OodSplit{make_subset(ds, tr), make_subset(ds, va), make_subset(ds, in),
                    make_subset(ds, tg)};
}

std::vector<TrainingExample> make_examples(const SequenceDataset& ds, std::size_t l_max) {
    if (l_max == 0) throw std::invalid_argument("make_examples: l_max must be positive");
    std::vector<TrainingExample> out;
    std::size_t sample_id = 0;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        const auto& seq = ds.sequences[u];
        for (std::size_t t = 1; t < seq.size(); ++t) {
            TrainingExample ex;
            ex.sample_id = sample_id++;
            ex.user = static_cast<std::uint32_t>(u);
            const std::size_t begin = t > l_max ? t - l_max : 0;
            ex.prefix.reserve(t - begin);
            for (std::size_t k = begin; k < t; ++k) ex.prefix.push_back(seq[k].item);
            ex.target = seq[t].item;
            out.push_back(std::move(ex));
        }
    }
    return out;
}

std::vector<Batch> make_batches(const std::vector<TrainingExample>& examples,
                                std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch,
                                std::size_t l_max, std::uint32_t pad_index) {
    if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be positive");
    if (l_max == 0) throw std::invalid_argument("make_batches: l_max must be positive");

    std::vector<std::size_t> perm(examples.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng rng(hash_combine(seed, hash_combine(0x65706f6368ULL, epoch))); // "epoch"
    for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.next_below(i)]);

    std::vector<Batch> out;
    out.reserve((examples.size() + batch_size - 1) / batch_size);
    for (std::size_t start = 0; start < examples.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, examples.size() - start);
        Batch b;
        b.batch_size = count;
        b.l_max = l_max;
        b.prefixes.assign(count * l_max, pad_index);
        b.valid_lengths.resize(count);
        b.targets.resize(count);
        b.sample_ids.resize(count);
        for (std::size_t r = 0; r < count; ++r) {
            const TrainingExample& ex = examples[perm[start + r]];
            if (ex.prefix.size() > l_max)
                fail("make_batches: example prefix longer than l_max");
            for (std::size_t k = 0; k < ex.prefix.size(); ++k) b.prefixes[r * l_max + k] = ex.prefix[k];
            b.valid_lengths[r] = static_cast<std::uint32_t>(ex.prefix.size());
            b.targets[r] = ex.target;
            b.sample_ids[r] = ex.sample_id;
        }
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<EvalPair> eval_pairs_by_fraction(const SequenceDataset& ds, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("eval_pairs_by_fraction: fraction must lie in (0, 1)");
    std::vector<EvalPair> out;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        const auto& seq = ds.sequences[u];
        if (seq.size() < 2) continue;
        std::size_t n_in = floor_count(fraction * static_cast<double>(seq.size()));
        n_in = std::clamp<std::size_t>(n_in, 1, seq.size() - 1);
        EvalPair p;
        p.user_id = ds.user_ids[u];
        for (std::size_t k = 0; k < n_in; ++k) p.input.push_back(seq[k].item);
        for (std::size_t k = n_in; k < seq.size(); ++k) p.targets.push_back(seq[k].item);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<EvalPair> eval_pairs_by_join(const SequenceDataset& inputs,
                                         const SequenceDataset& targets) {
    std::vector<EvalPair> out;
    for (std::size_t u = 0; u < inputs.num_users(); ++u) {
        if (inputs.sequences[u].empty()) continue;
        auto it = targets.user_index.find(inputs.user_ids[u]);
        if (it == targets.user_index.end()) continue;
        const auto& tgt = targets.sequences[it->second];
        if (tgt.empty()) continue;
        EvalPair p;
        p.user_id = inputs.user_ids[u];
        for (const Event& e : inputs.sequences[u]) p.input.push_back(e.item);
        for (const Event& e : tgt) p.targets.push_back(e.item);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<EvalPair> expand_per_target(const std::vector<EvalPair>& pairs) {
    std::vector<EvalPair> out;
    for (const EvalPair& p : pairs) {
        for (std::uint32_t t : p.targets) {
            EvalPair q;
            q.user_id = p.user_id;
            q.input = p.input;
            q.targets = {t};
            out.push_back(std::move(q));
        }
    }
    return out;
}

} // namespace desmil
