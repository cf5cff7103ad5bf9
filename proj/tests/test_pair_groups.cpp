#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "fada/pair_groups.hpp"

using namespace fada;

namespace {

Dataset with_labels(const std::vector<int>& labels, std::size_t classes = 10) {
    Dataset ds;
    ds.sample_shape = {1};
    ds.labels = labels;
    ds.features.assign(labels.size(), 0.0f);
    ds.num_classes = classes;
    return ds;
}

Dataset per_class(const std::vector<std::size_t>& counts) {
    std::vector<int> labels;
    for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], static_cast<int>(c));
    return with_labels(labels, std::max<std::size_t>(counts.size(), 1));
}

using Key = std::tuple<std::size_t, std::size_t, int>;

// Brute-force double loops; unordered groups are keyed (min, max).
std::array<std::set<Key>, 4> brute_force(const Dataset& s, const Dataset& t) {
    std::array<std::set<Key>, 4> out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = i + 1; j < s.size(); ++j) out[s.labels[i] == s.labels[j] ? 0 : 2].insert({i, j, 0});
        for (std::size_t k = 0; k < t.size(); ++k) out[s.labels[i] == t.labels[k] ? 1 : 3].insert({i, k, 1});
    }
    return out;
}

Key key_of(const PairRecord& p) {
    if (p.second_domain == SlotDomain::source)
        return {std::min(p.first_index, p.second_index), std::max(p.first_index, p.second_index), 0};
    return {p.first_index, p.second_index, 1};
}

void expect_membership(const GroupedPairs& gp, const Dataset& s, const Dataset& t) {
    for (int g = 1; g <= 4; ++g) {
        for (const auto& p : gp.group(g)) {
            ASSERT_EQ(p.group, g);
            const int a = s.labels.at(p.first_index);
            const bool tgt = p.second_domain == SlotDomain::target;
            const int b = tgt ? t.labels.at(p.second_index) : s.labels.at(p.second_index);
            EXPECT_EQ(tgt, g == 2 || g == 4);
            EXPECT_EQ(a == b, g == 1 || g == 2);
            if (g == 1) {
                EXPECT_NE(p.first_index, p.second_index);
            }
        }
    }
}

struct Quiet {
    ScopedWarningSink sink{[](const std::string&) {}};
};

}  // namespace

TEST(Pools, MatchBruteForceOnRandomSmallInstances) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        const std::size_t classes = 1 + uniform_index(rng, 5);
        std::vector<std::size_t> sc(classes), tc(classes);
        for (auto& c : sc) c = uniform_index(rng, 7);
        for (auto& c : tc) c = uniform_index(rng, 7);
        // Shuffle label order so class blocks are not contiguous.
        Dataset s = per_class(sc), t = per_class(tc);
        shuffle(s.labels, rng);
        shuffle(t.labels, rng);
        const PairPools pools(s, t);
        const auto oracle = brute_force(s, t);
        for (int g = 1; g <= 4; ++g) {
            const auto list = pools.enumerate(g);
            std::set<Key> got;
            for (const auto& p : list) got.insert(key_of(p));
            EXPECT_EQ(got.size(), list.size()) << "duplicate in group " << g;
            EXPECT_EQ(got, oracle[static_cast<std::size_t>(g - 1)]) << "group " << g << " seed " << seed;
            EXPECT_EQ(pools.size(g), oracle[static_cast<std::size_t>(g - 1)].size());
        }
    }
}

TEST(Pools, TwoClassExampleSizes) {
    const Dataset s = per_class({3, 3}), t = per_class({1, 1});
    const PairPools pools(s, t);
    EXPECT_EQ(pools.size(1), 6u);
    EXPECT_EQ(pools.size(2), 6u);
    EXPECT_EQ(pools.size(3), 9u);
    EXPECT_EQ(pools.size(4), 6u);
}

TEST(EnumerateG2, Examples) {
    EXPECT_EQ(enumerate_g2(per_class({3, 3}), per_class({1, 1})).size(), 6u);
    const auto one = enumerate_g2(with_labels({4}), with_labels({4}));
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].first_index, 0u);
    EXPECT_EQ(one[0].second_index, 0u);
    EXPECT_EQ(one[0].second_domain, SlotDomain::target);
}

TEST(EnumerateG2, ClassMissingFromTargetContributesNothing) {
    const Dataset s = per_class({2, 2, 2}), t = per_class({1, 0, 1});
    for (const auto& p : enumerate_g2(s, t)) EXPECT_NE(s.labels[p.first_index], 1);
    EXPECT_EQ(enumerate_g2(s, t).size(), 4u);
}

TEST(EnumerateG2, NoSharedClassRejected) {
    EXPECT_THROW(enumerate_g2(with_labels({0, 0}), with_labels({1})), PairError);
}

TEST(Build, BalancedToG2) {
    const Dataset s = per_class({3, 3}), t = per_class({1, 1});
    const auto gp = build_grouped_pairs(s, t, 5);
    for (int g = 1; g <= 4; ++g) EXPECT_EQ(gp.group(g).size(), 6u);
    expect_membership(gp, s, t);
    EXPECT_EQ(gp.seed, 5u);
}

TEST(Build, TwoThousandG2) {
    const Dataset s = per_class(std::vector<std::size_t>(10, 200)), t = per_class(std::vector<std::size_t>(10, 1));
    const auto gp = build_grouped_pairs(s, t, 0);
    for (int g = 1; g <= 4; ++g) EXPECT_EQ(gp.group(g).size(), 2000u);
    expect_membership(gp, s, t);
    for (int g = 1; g <= 4; ++g) {
        std::set<Key> keys;
        for (const auto& p : gp.group(g)) keys.insert(key_of(p));
        EXPECT_EQ(keys.size(), 2000u) << "group " << g;
    }
}

TEST(Build, Deterministic) {
    const Dataset s = per_class({5, 4, 6}), t = per_class({2, 2, 1});
    const auto a = build_grouped_pairs(s, t, 17), b = build_grouped_pairs(s, t, 17), c = build_grouped_pairs(s, t, 18);
    EXPECT_EQ(a.groups, b.groups);
    EXPECT_NE(a.groups, c.groups);
}

TEST(Build, PropertyMembershipAndBalance) {
    Quiet q;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed + 1000);
        std::vector<std::size_t> sc(4), tc(4);
        for (auto& c : sc) c = 2 + uniform_index(rng, 5);
        for (auto& c : tc) c = uniform_index(rng, 4);
        tc[0] = std::max<std::size_t>(tc[0], 1);
        const Dataset s = per_class(sc), t = per_class(tc);
        const auto gp = build_grouped_pairs(s, t, seed);
        const std::size_t n2 = gp.group(2).size();
        for (int g = 1; g <= 4; ++g) EXPECT_EQ(gp.group(g).size(), n2);
        expect_membership(gp, s, t);
    }
}

TEST(Build, SmallPoolFallsBackWithWarning) {
    // G1 pool: one same-class source pair, but |G2| = 4.
    const Dataset s = with_labels({0, 0, 1}), t = with_labels({0, 0, 1, 1}, 10);
    std::vector<std::string> warnings;
    ScopedWarningSink sink([&](const std::string& m) { warnings.push_back(m); });
    const auto gp = build_grouped_pairs(s, t, 3);
    EXPECT_EQ(gp.group(2).size(), 6u);
    EXPECT_EQ(gp.group(1).size(), 6u);
    expect_membership(gp, s, t);
    ASSERT_FALSE(warnings.empty());
    EXPECT_NE(warnings[0].find("with replacement"), std::string::npos);
}

TEST(Build, EmptyG2Rejected) { EXPECT_THROW(build_grouped_pairs(with_labels({0, 1}), with_labels({2}), 0), PairError); }

TEST(Build, RatiosScaleGroups) {
    const Dataset s = per_class({6, 6}), t = per_class({1, 1});
    PairConfig cfg;
    cfg.ratios = {0.5, 1.0, 2.0, 1.0};
    const auto gp = build_grouped_pairs(s, t, 0, cfg);
    EXPECT_EQ(gp.group(2).size(), 12u);
    EXPECT_EQ(gp.group(1).size(), 6u);
    EXPECT_EQ(gp.group(3).size(), 24u);
}

TEST(Build, G2LimitSubsamples) {
    const Dataset s = per_class({50, 50}), t = per_class({5, 5});
    PairConfig cfg;
    cfg.g2_limit = 40;
    const auto gp = build_grouped_pairs(s, t, 0, cfg);
    for (int g = 1; g <= 4; ++g) EXPECT_EQ(gp.group(g).size(), 40u);
    expect_membership(gp, s, t);
}

TEST(Build, G1SelectionIsUniform) {
    // 3 classes x 4 source samples: 18 eligible G1 pairs, |G2| = 12, so
    // each pair is retained with probability 2/3.
    const Dataset s = per_class({4, 4, 4}), t = per_class({1, 1, 1});
    std::map<Key, std::size_t> hits;
    const std::size_t runs = 1000;
    for (std::uint64_t seed = 0; seed < runs; ++seed) {
        const auto gp = build_grouped_pairs(s, t, seed);
        for (const auto& p : gp.group(1)) ++hits[key_of(p)];
    }
    ASSERT_EQ(hits.size(), 18u);
    const double p = 12.0 / 18.0, mean = runs * p, sd = std::sqrt(runs * p * (1 - p));
    for (const auto& [k, n] : hits) EXPECT_NEAR(double(n), mean, 5 * sd);
}

TEST(Build, UnorderedSlotsAreRandomlyOriented) {
    const Dataset s = per_class(std::vector<std::size_t>(4, 30)), t = per_class({1, 1, 1, 1});
    const auto gp = build_grouped_pairs(s, t, 2);
    std::size_t ascending = 0;
    for (const auto& p : gp.group(3)) ascending += p.first_index < p.second_index;
    EXPECT_GT(ascending, 0u);
    EXPECT_LT(ascending, gp.group(3).size());
}

TEST(Batches, EightGivesTwoPerGroup) {
    const auto gp = build_grouped_pairs(per_class({3, 3}), per_class({2, 2}), 0);
    PairBatchStream stream(gp, 8, 1);
    for (const auto& batch : stream.epoch(0)) {
        ASSERT_EQ(batch.size(), 8u);
        std::array<int, 4> n{};
        for (const auto& p : batch) ++n[static_cast<std::size_t>(p.group - 1)];
        EXPECT_EQ(n, (std::array<int, 4>{2, 2, 2, 2}));
    }
}

TEST(Batches, SizeMustBeMultipleOfFour) {
    const auto gp = build_grouped_pairs(per_class({3, 3}), per_class({1, 1}), 0);
    EXPECT_THROW(PairBatchStream(gp, 6, 0), PairError);
    EXPECT_THROW(PairBatchStream(gp, 0, 0), PairError);
}

TEST(Batches, EpochCoversEveryPairOnce) {
    const auto gp = build_grouped_pairs(per_class({3, 3}), per_class({2, 2}), 0);  // |G2| = 12
    PairBatchStream stream(gp, 12, 4);
    EXPECT_EQ(stream.batches_per_epoch(), 4u);
    std::array<std::multiset<PairRecord>, 4> seen;
    for (const auto& batch : stream.epoch(0))
        for (const auto& p : batch) seen[static_cast<std::size_t>(p.group - 1)].insert(p);
    for (int g = 1; g <= 4; ++g) {
        std::multiset<PairRecord> want(gp.group(g).begin(), gp.group(g).end());
        EXPECT_EQ(seen[static_cast<std::size_t>(g - 1)], want);
    }
}

TEST(Batches, DeterministicAndReshuffledPerEpoch) {
    const auto gp = build_grouped_pairs(per_class({5, 5}), per_class({3, 3}), 0);
    PairBatchStream a(gp, 8, 9), b(gp, 8, 9);
    EXPECT_EQ(a.epoch(0), b.epoch(0));
    EXPECT_EQ(a.epoch(3), b.epoch(3));
    EXPECT_NE(a.epoch(0), a.epoch(1));
}

TEST(Dump, LineFormat) {
    GroupedPairs gp;
    gp.groups[1].push_back({3, 7, SlotDomain::target, 2});
    gp.groups[2].push_back({1, 4, SlotDomain::source, 3});
    std::ostringstream os;
    write_pairs_text(os, gp);
    EXPECT_EQ(os.str(), "2 3 target 7\n3 1 source 4\n");
}
