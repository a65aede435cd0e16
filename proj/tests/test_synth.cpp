#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <set>
#include <vector>

#include "desmil/synth.hpp"

using namespace desmil;

namespace {

// Upper 0.01 quantile of chi-squared with 2 degrees of freedom.
constexpr double kChi2Crit2Dof = 9.21034;

// Per-event category relative to the event's user: primary cluster,
// companion cluster, or any other cluster.
std::array<std::size_t, 3> category_counts(const SynthOutput& out, const SequenceDataset& ds) {
    std::array<std::size_t, 3> counts = {0, 0, 0};
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        for (const Event& e : ds.sequences[u]) {
            const std::uint32_t cl = out.item_cluster[e.item];
            if (cl == out.user_primary[u]) ++counts[0];
            else if (cl == out.user_companion[u]) ++counts[1];
            else ++counts[2];
        }
    }
    return counts;
}

std::size_t total(const std::array<std::size_t, 3>& c) { return c[0] + c[1] + c[2]; }

} // namespace

TEST_CASE("defaults are the documented desk-scale configuration") {
    SynthConfig cfg;
    CHECK(cfg.num_users == 2000);
    CHECK(cfg.num_items == 1000);
    CHECK(cfg.num_clusters == 4);
    CHECK(cfg.seq_len_min == 20);
    CHECK(cfg.seq_len_max == 40);
    CHECK(cfg.rho_train == 0.9);
    CHECK(cfg.rho_test == 0.1);
    cfg.validate();
}

TEST_CASE("configuration validation") {
    SynthConfig cfg;
    cfg.num_clusters = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SynthConfig{};
    cfg.num_items = 3;
    cfg.num_clusters = 4;
    CHECK_THROWS_AS(generate(cfg), std::invalid_argument);
    cfg = SynthConfig{};
    cfg.rho_train = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SynthConfig{};
    cfg.seq_len_min = 30;
    cfg.seq_len_max = 20;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("cluster assignment is balanced and a function of item and seed") {
    auto a = cluster_assignments(103, 4, 7);
    auto b = cluster_assignments(103, 4, 7);
    CHECK(a == b);
    auto c = cluster_assignments(103, 4, 8);
    CHECK(a != c);

    std::array<std::size_t, 4> sizes = {0, 0, 0, 0};
    for (std::uint32_t cl : a) {
        REQUIRE(cl < 4);
        ++sizes[cl];
    }
    // 103 = 4*25 + 3: three clusters of 26, one of 25.
    std::size_t hi = 0, lo = 103;
    for (std::size_t s : sizes) {
        hi = std::max(hi, s);
        lo = std::min(lo, s);
    }
    CHECK(hi - lo <= 1);
    CHECK(hi + 3 * lo >= 103 - 3);
}

TEST_CASE("same seed reproduces both datasets exactly") {
    SynthConfig cfg;
    cfg.num_users = 50;
    cfg.num_items = 40;
    SynthOutput a = generate(cfg);
    SynthOutput b = generate(cfg);
    CHECK(a.train.sequences == b.train.sequences);
    CHECK(a.test.sequences == b.test.sequences);
    CHECK(a.item_cluster == b.item_cluster);
    CHECK(a.user_primary == b.user_primary);
    CHECK(a.user_companion == b.user_companion);

    cfg.seed = 43;
    SynthOutput d = generate(cfg);
    CHECK(a.train.sequences != d.train.sequences);
}

TEST_CASE("generated datasets satisfy the sequence-dataset invariants") {
    SynthConfig cfg;
    cfg.num_users = 80;
    cfg.num_items = 60;
    SynthOutput out = generate(cfg);

    for (const SequenceDataset* ds : {&out.train, &out.test}) {
        REQUIRE(ds->num_users() == 80);
        REQUIRE(ds->num_items() == 60);
        REQUIRE(ds->sequences.size() == 80);
        for (std::size_t u = 0; u < 80; ++u) {
            CHECK(ds->user_index.at(ds->user_ids[u]) == u);
            const auto& seq = ds->sequences[u];
            CHECK(seq.size() >= cfg.seq_len_min);
            CHECK(seq.size() <= cfg.seq_len_max);
            for (std::size_t t = 0; t < seq.size(); ++t) {
                CHECK(seq[t].item < 60);
                CHECK(seq[t].timestamp == static_cast<std::int64_t>(t));
            }
        }
    }
    // Same users, primaries and companions on both sides.
    CHECK(out.train.user_ids == out.test.user_ids);
    for (std::size_t u = 0; u < 80; ++u)
        CHECK(out.user_primary[u] != out.user_companion[u]);
}

TEST_CASE("maximal dependence confines each sequence to two clusters") {
    SynthConfig cfg;
    cfg.num_users = 200;
    cfg.num_items = 100;
    cfg.rho_train = 1.0;
    SynthOutput out = generate(cfg);
    for (std::size_t u = 0; u < cfg.num_users; ++u) {
        std::set<std::uint32_t> seen;
        for (const Event& e : out.train.sequences[u]) seen.insert(out.item_cluster[e.item]);
        CHECK(seen.size() <= 2);
        for (std::uint32_t cl : seen)
            CHECK((cl == out.user_primary[u] || cl == out.user_companion[u]));
    }
}

TEST_CASE("zero dependence spreads non-primary events evenly over other clusters") {
    SynthConfig cfg;
    cfg.num_users = 2000;
    cfg.num_items = 200;
    cfg.rho_train = 0.0;
    SynthOutput out = generate(cfg);
    auto counts = category_counts(out, out.train);
    const double non_primary = static_cast<double>(counts[1] + counts[2]);
    REQUIRE(non_primary > 10000);
    // Companion is one of g-1=3 equally likely non-primary clusters.
    const double freq = static_cast<double>(counts[1]) / non_primary;
    CHECK(freq == doctest::Approx(1.0 / 3.0).epsilon(0.05));
    // And the primary share matches its generative constant.
    const double primary_share =
        static_cast<double>(counts[0]) / static_cast<double>(total(counts));
    CHECK(primary_share == doctest::Approx(kPrimaryShare).epsilon(0.03));
}

TEST_CASE("equal dependence gives matching train and test co-occurrence statistics") {
    // Two-sample chi-squared over (primary, companion, other) event counts,
    // 10^4 events per side, 2 degrees of freedom.
    SynthConfig cfg;
    cfg.num_users = 400;
    cfg.num_items = 120;
    cfg.seq_len_min = 25;
    cfg.seq_len_max = 25;
    cfg.rho_train = 0.5;
    cfg.rho_test = 0.5;
    SynthOutput out = generate(cfg);

    const auto train = category_counts(out, out.train);
    const auto test = category_counts(out, out.test);
    REQUIRE(total(train) == 10000);
    REQUIRE(total(test) == 10000);

    double chi2 = 0.0;
    const double n_train = static_cast<double>(total(train));
    const double n_test = static_cast<double>(total(test));
    for (std::size_t k = 0; k < 3; ++k) {
        const double pooled =
            static_cast<double>(train[k] + test[k]) / (n_train + n_test);
        const double e_train = n_train * pooled;
        const double e_test = n_test * pooled;
        chi2 += (static_cast<double>(train[k]) - e_train) * (static_cast<double>(train[k]) - e_train) / e_train;
        chi2 += (static_cast<double>(test[k]) - e_test) * (static_cast<double>(test[k]) - e_test) / e_test;
    }
    CHECK(chi2 < kChi2Crit2Dof);
}

TEST_CASE("category frequencies match the generative mixture") {
    // Goodness of fit against the analytic probabilities: primary share s,
    // companion s' = (1-s)(rho + (1-rho)/(g-1)), remainder to other clusters.
    SynthConfig cfg;
    cfg.num_users = 1000;
    cfg.num_items = 160;
    cfg.seq_len_min = 30;
    cfg.seq_len_max = 30;
    cfg.rho_train = 0.6;
    SynthOutput out = generate(cfg);

    const auto counts = category_counts(out, out.train);
    const double n = static_cast<double>(total(counts));
    const double g1 = static_cast<double>(cfg.num_clusters - 1);
    const std::array<double, 3> p = {
        kPrimaryShare,
        (1.0 - kPrimaryShare) * (cfg.rho_train + (1.0 - cfg.rho_train) / g1),
        (1.0 - kPrimaryShare) * (1.0 - cfg.rho_train) * (g1 - 1.0) / g1,
    };
    double chi2 = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double expected = n * p[k];
        const double diff = static_cast<double>(counts[k]) - expected;
        chi2 += diff * diff / expected;
    }
    CHECK(chi2 < kChi2Crit2Dof);
}
