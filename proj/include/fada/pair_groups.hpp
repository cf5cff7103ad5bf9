#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "fada/dataset.hpp"
#include "fada/log.hpp"
#include "fada/random.hpp"

// The four pair groups consumed by the domain-class discriminator:
//   G1 source/source same class      G2 source/target same class
//   G3 source/source different class G4 source/target different class
// Slot one always holds a source sample; G1/G3 are unordered, G2/G4 ordered.
namespace fada {

enum class SlotDomain : std::uint8_t { source = 0, target = 1 };

inline const char* to_string(SlotDomain d) { return d == SlotDomain::source ? "source" : "target"; }

struct PairRecord {
    std::size_t first_index = 0;
    std::size_t second_index = 0;
    SlotDomain second_domain = SlotDomain::source;
    int group = 1;

    auto operator<=>(const PairRecord&) const = default;
};

inline constexpr int kGroupCount = 4;

struct GroupedPairs {
    std::array<std::vector<PairRecord>, kGroupCount> groups;
    std::uint64_t seed = 0;

    const std::vector<PairRecord>& group(int g) const { return groups.at(static_cast<std::size_t>(g - 1)); }
    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& g : groups) n += g.size();
        return n;
    }
};

class PairError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Implicit index over each group's full pool. Pools are never materialized
// (G3 alone is quadratic in the source size); a rank in [0, size) decodes
// to its pair in O(classes + log N).
class PairPools {
public:
    PairPools(const Dataset& source, const Dataset& target)
        : classes_(std::max(source.num_classes, target.num_classes)),
          src_labels_(source.labels),
          src_by_class_(classes_),
          tgt_by_class_(classes_) {
        for (std::size_t i = 0; i < source.size(); ++i)
            src_by_class_[static_cast<std::size_t>(source.labels[i])].push_back(i);
        for (std::size_t i = 0; i < target.size(); ++i)
            tgt_by_class_[static_cast<std::size_t>(target.labels[i])].push_back(i);
        target_size_ = target.size();

        g1_prefix_.push_back(0);
        for (const auto& m : src_by_class_) g1_prefix_.push_back(g1_prefix_.back() + choose2(m.size()));
        g3_prefix_.push_back(0);
        for (std::size_t a = 0; a < classes_; ++a) {
            for (std::size_t b = a + 1; b < classes_; ++b) {
                g3_blocks_.push_back({a, b});
                g3_prefix_.push_back(g3_prefix_.back() + src_by_class_[a].size() * src_by_class_[b].size());
            }
        }
        g2_prefix_.push_back(0);
        g4_prefix_.push_back(0);
        for (int y : src_labels_) {
            const std::size_t same = tgt_by_class_[static_cast<std::size_t>(y)].size();
            g2_prefix_.push_back(g2_prefix_.back() + same);
            g4_prefix_.push_back(g4_prefix_.back() + (target_size_ - same));
        }
    }

    std::uint64_t size(int group) const {
        switch (group) {
            case 1:
                return g1_prefix_.back();
            case 2:
                return g2_prefix_.back();
            case 3:
                return g3_prefix_.back();
            case 4:
                return g4_prefix_.back();
            default:
                throw PairError("group must be in 1..4, got " + std::to_string(group));
        }
    }

    PairRecord decode(int group, std::uint64_t rank) const {
        if (rank >= size(group)) throw std::out_of_range("pair rank out of range");
        switch (group) {
            case 1: {
                const std::size_t c = block_of(g1_prefix_, rank);
                const auto& m = src_by_class_[c];
                auto [i, j] = triangular(rank - g1_prefix_[c], m.size());
                return {m[i], m[j], SlotDomain::source, 1};
            }
            case 2: {
                const std::size_t s = block_of(g2_prefix_, rank);
                const auto& t = tgt_by_class_[static_cast<std::size_t>(src_labels_[s])];
                return {s, t[rank - g2_prefix_[s]], SlotDomain::target, 2};
            }
            case 3: {
                const std::size_t blk = block_of(g3_prefix_, rank);
                const auto [a, b] = g3_blocks_[blk];
                const std::uint64_t local = rank - g3_prefix_[blk];
                const std::size_t nb = src_by_class_[b].size();
                return {src_by_class_[a][local / nb], src_by_class_[b][local % nb], SlotDomain::source, 3};
            }
            default: {
                const std::size_t s = block_of(g4_prefix_, rank);
                std::uint64_t local = rank - g4_prefix_[s];
                const auto ys = static_cast<std::size_t>(src_labels_[s]);
                for (std::size_t c = 0; c < classes_; ++c) {
                    if (c == ys) continue;
                    if (local < tgt_by_class_[c].size()) return {s, tgt_by_class_[c][local], SlotDomain::target, 4};
                    local -= tgt_by_class_[c].size();
                }
                throw std::logic_error("G4 rank decode fell off the end");
            }
        }
    }

    std::vector<PairRecord> enumerate(int group) const {
        std::vector<PairRecord> out;
        out.reserve(size(group));
        for (std::uint64_t r = 0; r < size(group); ++r) out.push_back(decode(group, r));
        return out;
    }

    std::size_t shared_classes() const {
        std::size_t n = 0;
        for (std::size_t c = 0; c < classes_; ++c) n += (!src_by_class_[c].empty() && !tgt_by_class_[c].empty());
        return n;
    }

private:
    static std::uint64_t choose2(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

    static std::size_t block_of(const std::vector<std::uint64_t>& prefix, std::uint64_t rank) {
        auto it = std::upper_bound(prefix.begin(), prefix.end(), rank);
        return static_cast<std::size_t>(it - prefix.begin()) - 1;
    }

    // Row-major rank over {(i, j) : 0 <= i < j < n}.
    static std::pair<std::size_t, std::size_t> triangular(std::uint64_t r, std::size_t n) {
        std::size_t i = 0;
        while (r >= n - 1 - i) {
            r -= n - 1 - i;
            ++i;
        }
        return {i, i + 1 + static_cast<std::size_t>(r)};
    }

    std::size_t classes_;
    std::vector<int> src_labels_;
    std::vector<std::vector<std::size_t>> src_by_class_;
    std::vector<std::vector<std::size_t>> tgt_by_class_;
    std::size_t target_size_ = 0;
    std::vector<std::uint64_t> g1_prefix_, g2_prefix_, g3_prefix_, g4_prefix_;
    std::vector<std::pair<std::size_t, std::size_t>> g3_blocks_;
};

// All ordered (source, target) same-class pairs.
inline std::vector<PairRecord> enumerate_g2(const Dataset& source, const Dataset& target) {
    PairPools pools(source, target);
    if (pools.shared_classes() == 0) throw PairError("source and target share no class");
    return pools.enumerate(2);
}

struct PairConfig {
    // Relative group sizes; group g gets round(|G2| * ratio[g] / ratio[2]).
    std::array<double, kGroupCount> ratios{1.0, 1.0, 1.0, 1.0};
    // When nonzero, G2 itself is subsampled to this many pairs (used for
    // evaluation pair sets); training keeps G2 complete.
    std::size_t g2_limit = 0;
};

namespace detail {

// Floyd's algorithm: m distinct ranks from [0, pool) in insertion order.
inline std::vector<std::uint64_t> floyd_sample(std::uint64_t pool, std::uint64_t m, Rng& rng) {
    std::vector<std::uint64_t> out;
    out.reserve(m);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(m * 2);
    for (std::uint64_t j = pool - m; j < pool; ++j) {
        const std::uint64_t t = uniform_index(rng, j + 1);
        const std::uint64_t pick = seen.count(t) ? j : t;
        seen.insert(pick);
        out.push_back(pick);
    }
    return out;
}

}  // namespace detail

// Complete G2 plus G1, G3, G4 sampled uniformly (without replacement when
// the pool allows) to match |G2|. Unordered G1/G3 pairs get a random slot
// orientation so slot order carries no class information.
inline GroupedPairs build_grouped_pairs(const Dataset& source, const Dataset& target, std::uint64_t seed,
                                        const PairConfig& cfg = {}) {
    PairPools pools(source, target);
    const std::uint64_t g2_pool = pools.size(2);
    if (g2_pool == 0) throw PairError("G2 is empty: no class has both source and target samples");
    for (double r : cfg.ratios) {
        if (!(r > 0.0)) throw PairError("group ratios must be positive");
    }
    GroupedPairs out;
    out.seed = seed;
    const std::uint64_t g2_size = cfg.g2_limit ? std::min<std::uint64_t>(g2_pool, cfg.g2_limit) : g2_pool;
    for (int g = 1; g <= kGroupCount; ++g) {
        Rng rng = make_rng(seed, 0x9a1e + static_cast<std::uint64_t>(g));
        const std::uint64_t pool = pools.size(g);
        const auto want =
            g == 2 ? g2_size
                   : static_cast<std::uint64_t>(std::llround(
                         static_cast<double>(g2_size) * cfg.ratios[static_cast<std::size_t>(g - 1)] / cfg.ratios[1]));
        auto& list = out.groups[static_cast<std::size_t>(g - 1)];
        list.reserve(want);
        if (g == 2 && want == pool) {
            list = pools.enumerate(2);
            continue;
        }
        if (pool == 0) throw PairError("group " + std::to_string(g) + " pool is empty; cannot match |G2|");
        if (pool >= want) {
            for (auto r : detail::floyd_sample(pool, want, rng)) list.push_back(pools.decode(g, r));
        } else {
            warn("group " + std::to_string(g) + " pool has " + std::to_string(pool) + " pairs < " +
                 std::to_string(want) + "; sampling with replacement");
            for (std::uint64_t k = 0; k < want; ++k) list.push_back(pools.decode(g, uniform_index(rng, pool)));
        }
        if (g == 1 || g == 3) {
            for (auto& p : list)
                if (rng() & 1ULL) std::swap(p.first_index, p.second_index);
        }
    }
    return out;
}

// Group-stratified minibatches. Every batch holds batch_size/4 pairs of
// each group, in group order; each epoch reshuffles every group from the
// stream seed. Groups shorter than the longest wrap around.
class PairBatchStream {
public:
    PairBatchStream(const GroupedPairs& pairs, std::size_t batch_size, std::uint64_t seed)
        : pairs_(&pairs), per_group_(batch_size / kGroupCount), seed_(seed) {
        if (batch_size < 4 || batch_size % 4 != 0) {
            throw PairError("pair batch size must be a positive multiple of 4, got " + std::to_string(batch_size));
        }
        for (const auto& g : pairs.groups) {
            if (g.empty()) throw PairError("cannot batch an empty pair group");
            longest_ = std::max(longest_, g.size());
        }
    }

    std::size_t per_group() const { return per_group_; }
    std::size_t batches_per_epoch() const { return (longest_ + per_group_ - 1) / per_group_; }

    std::vector<std::vector<PairRecord>> epoch(std::size_t e) const {
        std::array<std::vector<std::size_t>, kGroupCount> order;
        for (std::size_t g = 0; g < kGroupCount; ++g) {
            order[g] = iota_indices(pairs_->groups[g].size());
            Rng rng = make_rng(seed_, (static_cast<std::uint64_t>(e) << 3) + g);
            shuffle(order[g], rng);
        }
        std::vector<std::vector<PairRecord>> batches;
        batches.reserve(batches_per_epoch());
        for (std::size_t start = 0; start < longest_; start += per_group_) {
            const std::size_t take = std::min(per_group_, longest_ - start);
            std::vector<PairRecord> batch;
            batch.reserve(take * kGroupCount);
            for (std::size_t g = 0; g < kGroupCount; ++g) {
                const auto& list = pairs_->groups[g];
                for (std::size_t k = 0; k < take; ++k) batch.push_back(list[order[g][(start + k) % list.size()]]);
            }
            batches.push_back(std::move(batch));
        }
        return batches;
    }

private:
    const GroupedPairs* pairs_;
    std::size_t per_group_;
    std::uint64_t seed_;
    std::size_t longest_ = 0;
};

// Line-oriented dump: "group first_index second_domain second_index".
inline void write_pairs_text(std::ostream& os, const GroupedPairs& gp) {
    for (const auto& list : gp.groups)
        for (const auto& p : list)
            os << p.group << ' ' << p.first_index << ' ' << to_string(p.second_domain) << ' ' << p.second_index << '\n';
}

}  // namespace fada
