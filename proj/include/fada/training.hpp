#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fada/adam.hpp"
#include "fada/dataset.hpp"
#include "fada/models.hpp"
#include "fada/ops.hpp"
#include "fada/pair_groups.hpp"
#include "fada/random.hpp"

namespace fada {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
    double gamma = 0.5;
    double lr_pretrain = 1e-3;
    double lr_dcd = 1e-3;
    double lr_adv = 1e-4;
    double lr_finetune = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t epochs_pretrain = 20;
    std::size_t epochs_dcd = 10;
    std::size_t epochs_adv = 30;
    std::size_t epochs_finetune = 50;
    std::size_t batch_cls = 64;
    std::size_t batch_pair = 64;
    std::size_t dcd_steps_per_g = 1;
    std::size_t n_shot = 1;
    std::uint64_t seed = 0;
    // Pairs per group in the held-out pair set used for DCD metrics.
    std::size_t eval_pairs_per_group = 500;
    ArchitectureOptions arch;

    // All violations, one per entry.
    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        auto positive = [&](double v, const char* name) {
            if (!(v > 0.0)) out.push_back(std::string(name) + " must be positive");
        };
        if (!(gamma >= 0.0)) out.push_back("gamma must be >= 0");
        positive(lr_pretrain, "lr_pretrain");
        positive(lr_dcd, "lr_dcd");
        positive(lr_adv, "lr_adv");
        positive(lr_finetune, "lr_finetune");
        positive(adam_epsilon, "adam_epsilon");
        if (!(beta1 >= 0.0 && beta1 < 1.0)) out.push_back("beta1 must lie in [0,1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) out.push_back("beta2 must lie in [0,1)");
        if (batch_cls < 1) out.push_back("batch_cls must be >= 1");
        if (batch_pair < 4 || batch_pair % 4 != 0) out.push_back("batch_pair must be a positive multiple of 4");
        if (dcd_steps_per_g < 1) out.push_back("dcd_steps_per_g must be >= 1");
        if (n_shot < 1) out.push_back("n_shot must be >= 1");
        return out;
    }

    void validate() const {
        const auto p = problems();
        if (p.empty()) return;
        std::string msg = "invalid training configuration:";
        for (const auto& s : p) msg += "\n  - " + s;
        throw ConfigError(msg);
    }

    AdamConfig adam(double lr) const { return {lr, beta1, beta2, adam_epsilon}; }
};

// RNG stream ids; every consumer of the run seed draws from its own stream.
namespace stream {
inline constexpr std::uint64_t kPretrain = 101, kDcdBatches = 102, kAdvBatches = 103, kClassification = 104,
                               kFinetune = 105, kUda = 106, kTrainPairs = 107, kEvalPairs = 108;
}

struct EpochMetrics {
    std::string stage;
    std::size_t epoch = 0;
    std::map<std::string, double> values;
};

struct StageMetrics {
    std::string stage;
    std::vector<EpochMetrics> epochs;

    const EpochMetrics& last() const {
        if (epochs.empty()) throw std::logic_error("stage '" + stage + "' recorded no epochs");
        return epochs.back();
    }
};

using MetricsSink = std::function<void(const EpochMetrics&)>;

// Held-out data used for per-epoch metrics; any member may be null.
struct EvalContext {
    const Dataset* source_val = nullptr;
    const Dataset* target_val = nullptr;
    // Pairs indexing source_val (slot one, and slot two for G1/G3) and
    // target_val (slot two for G2/G4).
    const GroupedPairs* pairs = nullptr;
    MetricsSink sink;
};

// ---------------------------------------------------------------------------
// Batched helpers

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> rows) {
    const std::size_t w = table.dim(1);
    Tensor<T> out({rows.size(), w});
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(&table[rows[r] * w], w, &out[r * w]);
    return out;
}

// Embeddings of every sample, computed without recording gradients.
template <typename T>
Tensor<T> embed_dataset(ModelBundle<T>& m, const Dataset& ds, std::size_t batch = 256) {
    if (ds.empty()) throw DatasetError("cannot embed an empty dataset");
    const std::size_t w = m.width();
    Tensor<T> out({ds.size(), w});
    for (std::size_t start = 0; start < ds.size(); start += batch) {
        const std::size_t n = std::min(batch, ds.size() - start);
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = start + i;
        Tape<T> tape(false);
        auto z = m.embed(tape, tape.constant(ds.batch<T>(idx)));
        std::copy(z.value().data().begin(), z.value().data().end(), &out[start * w]);
    }
    return out;
}

struct PairSlots {
    std::vector<std::size_t> first;          // source indices
    std::vector<std::size_t> second_source;  // positions in the batch whose slot two is a source sample
    std::vector<std::size_t> second_target;
    std::vector<std::size_t> second_source_idx;
    std::vector<std::size_t> second_target_idx;
    std::vector<int> groups;
};

inline PairSlots split_slots(std::span<const PairRecord> pairs) {
    PairSlots s;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        if (p.group < 1 || p.group > kGroupCount) {
            throw PairError("group label " + std::to_string(p.group) + " outside 1..4");
        }
        s.first.push_back(p.first_index);
        if (p.second_domain == SlotDomain::source) {
            s.second_source.push_back(i);
            s.second_source_idx.push_back(p.second_index);
        } else {
            s.second_target.push_back(i);
            s.second_target_idx.push_back(p.second_index);
        }
        s.groups.push_back(p.group);
    }
    return s;
}

// Embeds both slots of a pair batch through the shared g. Returns
// (za, zb) with rows in pair order.
template <typename T>
std::pair<Var<T>, Var<T>> embed_pairs(Tape<T>& tape, ModelBundle<T>& m, std::span<const PairRecord> pairs,
                                      const Dataset& source, const Dataset& target) {
    const PairSlots s = split_slots(pairs);
    // One forward over [first slots | source second slots | target second slots].
    Tensor<T> src = source.batch<T>(s.first);
    const std::size_t B = pairs.size();
    const std::size_t ns = s.second_source.size(), nt = s.second_target.size();
    Shape shape = src.shape();
    shape[0] = B + ns + nt;
    Tensor<T> all(shape);
    const std::size_t per = source.sample_size();
    std::copy(src.data().begin(), src.data().end(), all.data().begin());
    if (ns) {
        auto t = source.batch<T>(s.second_source_idx);
        std::copy(t.data().begin(), t.data().end(), all.data().begin() + static_cast<std::ptrdiff_t>(B * per));
    }
    if (nt) {
        if (target.sample_shape != source.sample_shape) throw ShapeError("source and target sample shapes differ");
        auto t = target.batch<T>(s.second_target_idx);
        std::copy(t.data().begin(), t.data().end(), all.data().begin() + static_cast<std::ptrdiff_t>((B + ns) * per));
    }
    Var<T> z = m.embed(tape, tape.constant(std::move(all)));
    Var<T> za = ops::slice_rows(z, 0, B);
    // Reorder the second-slot rows back into pair order.
    std::vector<std::size_t> order(B);
    for (std::size_t k = 0; k < ns; ++k) order[s.second_source[k]] = B + k;
    for (std::size_t k = 0; k < nt; ++k) order[s.second_target[k]] = B + ns + k;
    const std::size_t w = z.dim(1);
    Tensor<T> zb_val({B, w});
    for (std::size_t i = 0; i < B; ++i) std::copy_n(&z.value()[order[i] * w], w, &zb_val[i * w]);
    Var<T> zb = tape.record(std::move(zb_val), {z}, [z, order, B, w](Tape<T>& tp, std::size_t id) {
        const auto& G = tp.grad(id);
        auto& gz = tp.grad(z.id);
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < w; ++j) gz[order[i] * w + j] += G[i * w + j];
    });
    return {za, zb};
}

inline std::vector<int> group_targets(std::span<const int> groups) {
    std::vector<int> y;
    y.reserve(groups.size());
    for (int g : groups) {
        if (g < 1 || g > kGroupCount) throw PairError("group label " + std::to_string(g) + " outside 1..4");
        y.push_back(g - 1);
    }
    return y;
}

// ---------------------------------------------------------------------------
// Losses

// Classification loss: batch-mean cross-entropy of h(g(x)).
template <typename T>
Var<T> classification_loss(Tape<T>& tape, ModelBundle<T>& m, const Dataset& ds, std::span<const std::size_t> idx) {
    if (idx.empty()) throw DatasetError("classification batch is empty");
    auto z = m.embed(tape, tape.constant(ds.batch<T>(idx)));
    const auto y = ds.batch_labels(idx);
    return ops::softmax_cross_entropy(m.h.logits(tape, z), y);
}

// Four-way discriminator loss over pair embeddings with groups in 1..4.
template <typename T>
Var<T> dcd_loss(Tape<T>& tape, Discriminator<T>& dcd, const Var<T>& za, const Var<T>& zb, std::span<const int> groups) {
    const auto y = group_targets(groups);
    return ops::softmax_cross_entropy(dcd.pair_logits(tape, za, zb), y);
}

template <typename T>
Var<T> dcd_loss(Tape<T>& tape, ModelBundle<T>& m, std::span<const PairRecord> pairs, const Dataset& source,
                const Dataset& target) {
    auto [za, zb] = embed_pairs(tape, m, pairs, source, target);
    std::vector<int> groups;
    for (const auto& p : pairs) groups.push_back(p.group);
    return dcd_loss(tape, m.dcd, za, zb, groups);
}

// Confusion loss over G2 and G4 pairs: G2 pairs are scored against the
// group-1 label and G4 pairs against the group-3 label; each present
// group contributes its batch-mean cross-entropy.
template <typename T>
Var<T> confusion_loss(Tape<T>& tape, ModelBundle<T>& m, std::span<const PairRecord> pairs, const Dataset& source,
                      const Dataset& target) {
    std::vector<PairRecord> g2, g4;
    for (const auto& p : pairs) {
        if (p.group == 2)
            g2.push_back(p);
        else if (p.group == 4)
            g4.push_back(p);
        else
            throw PairError("confusion loss accepts only G2/G4 pairs, got group " + std::to_string(p.group));
    }
    if (g2.empty() && g4.empty()) throw PairError("confusion loss needs at least one G2 or G4 pair");
    std::vector<PairRecord> ordered = g2;
    ordered.insert(ordered.end(), g4.begin(), g4.end());
    auto [za, zb] = embed_pairs(tape, m, ordered, source, target);
    auto logits = m.dcd.pair_logits(tape, za, zb);
    std::optional<Var<T>> total;
    if (!g2.empty()) {
        const std::vector<int> y(g2.size(), 0);
        total = ops::softmax_cross_entropy(ops::slice_rows(logits, 0, g2.size()), y);
    }
    if (!g4.empty()) {
        const std::vector<int> y(g4.size(), 2);
        auto term = ops::softmax_cross_entropy(ops::slice_rows(logits, g2.size(), g4.size()), y);
        total = total ? ops::add(*total, term) : term;
    }
    return *total;
}

template <typename T>
struct FadaLossParts {
    Var<T> total;
    Var<T> confusion;
    Var<T> source_ce;
    Var<T> target_ce;
};

// gamma * confusion + CE(source batch) + CE(target batch).
template <typename T>
FadaLossParts<T> fada_generator_loss(Tape<T>& tape, ModelBundle<T>& m, std::span<const PairRecord> g24_pairs,
                                     const Dataset& source, const Dataset& target,
                                     std::span<const std::size_t> source_idx, std::span<const std::size_t> target_idx,
                                     double gamma) {
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
    auto conf = confusion_loss(tape, m, g24_pairs, source, target);
    auto ls = classification_loss(tape, m, source, source_idx);
    auto lt = classification_loss(tape, m, target, target_idx);
    auto total = ops::add(ops::add(ops::scale(conf, static_cast<T>(gamma)), ls), lt);
    return {total, conf, ls, lt};
}

// Binary domain discriminator loss: source embeddings labelled 0, target
// embeddings labelled 1, one batch-mean cross-entropy per domain.
template <typename T>
Var<T> binary_domain_loss(Tape<T>& tape, Discriminator<T>& d, const Var<T>& zs, const Var<T>& zt) {
    const std::vector<int> ys(zs.dim(0), 0), yt(zt.dim(0), 1);
    auto ls = ops::softmax_cross_entropy(d.logits(tape, zs), ys);
    auto lt = ops::softmax_cross_entropy(d.logits(tape, zt), yt);
    return ops::add(ls, lt);
}

// Generator side: target embeddings scored against the source label.
template <typename T>
Var<T> inverted_domain_loss(Tape<T>& tape, Discriminator<T>& d, const Var<T>& zt) {
    const std::vector<int> ys(zt.dim(0), 0);
    return ops::softmax_cross_entropy(d.logits(tape, zt), ys);
}

// ---------------------------------------------------------------------------
// Evaluation

struct Evaluation {
    double accuracy = 0.0;
    std::size_t count = 0;
    std::vector<double> per_class_accuracy;
    std::vector<std::size_t> per_class_count;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

inline Evaluation score_predictions(std::span<const int> labels, std::span<const int> predicted, std::size_t classes) {
    if (labels.empty()) throw DatasetError("cannot evaluate on an empty dataset");
    Evaluation e;
    e.count = labels.size();
    e.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
    e.per_class_count.assign(classes, 0);
    e.per_class_accuracy.assign(classes, 0.0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        ++e.confusion[y][static_cast<std::size_t>(predicted[i])];
        ++e.per_class_count[y];
        correct += labels[i] == predicted[i];
    }
    for (std::size_t c = 0; c < classes; ++c)
        if (e.per_class_count[c]) e.per_class_accuracy[c] = double(e.confusion[c][c]) / double(e.per_class_count[c]);
    e.accuracy = double(correct) / double(labels.size());
    return e;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& scores) {
    const std::size_t B = scores.dim(0), K = scores.dim(1);
    std::vector<int> out(B);
    for (std::size_t b = 0; b < B; ++b) {
        const T* row = &scores[b * K];
        out[b] = static_cast<int>(std::max_element(row, row + K) - row);
    }
    return out;
}

template <typename T>
std::vector<int> predict_from_embeddings(ModelBundle<T>& m, const Tensor<T>& z) {
    Tape<T> tape(false);
    return argmax_rows(m.h.logits(tape, tape.constant(z)).value());
}

// Argmax accuracy of h(g(x)) with per-class breakdown.
template <typename T>
Evaluation evaluate(ModelBundle<T>& m, const Dataset& ds) {
    if (ds.empty()) throw DatasetError("cannot evaluate on an empty dataset");
    const auto z = embed_dataset(m, ds);
    const auto pred = predict_from_embeddings(m, z);
    return score_predictions(ds.labels, pred, std::max(ds.num_classes, m.h.classes()));
}

struct DcdScores {
    double accuracy4 = 0.0;    // argmax over the 4 groups
    double separate12 = 0.0;   // G1/G2 pairs: p(true group) > p(other group of the two)
    double separate34 = 0.0;   // G3/G4 pairs likewise
    double g2_distance = 0.0;  // mean ||g(a) - g(b)|| over G2 pairs
    double g4_distance = 0.0;  // same over G4 pairs
};

template <typename T>
DcdScores score_dcd(ModelBundle<T>& m, const GroupedPairs& pairs, const Tensor<T>& z_source,
                    const Tensor<T>& z_target) {
    DcdScores s;
    std::size_t n4 = 0, c4 = 0, n12 = 0, c12 = 0, n34 = 0, c34 = 0, n2 = 0, nd4 = 0;
    double dist = 0.0, dist4 = 0.0;
    for (const auto& list : pairs.groups) {
        if (list.empty()) continue;
        std::vector<std::size_t> a, b;
        for (const auto& p : list) {
            a.push_back(p.first_index);
            b.push_back(p.second_index);
        }
        const bool tgt = list.front().second_domain == SlotDomain::target;
        Tensor<T> za = gather_rows(z_source, a);
        Tensor<T> zb = gather_rows(tgt ? z_target : z_source, b);
        Tape<T> tape(false);
        const auto probs = m.dcd.pair_forward(tape, tape.constant(za), tape.constant(zb)).value();
        const int g = list.front().group;
        const std::size_t other = static_cast<std::size_t>(g == 1 ? 2 : g == 2 ? 1 : g == 3 ? 4 : 3) - 1;
        for (std::size_t i = 0; i < list.size(); ++i) {
            const T* p = &probs[i * 4];
            const auto best = static_cast<int>(std::max_element(p, p + 4) - p);
            ++n4;
            c4 += best == g - 1;
            const bool sep = p[g - 1] > p[other];
            if (g <= 2) {
                ++n12;
                c12 += sep;
            } else {
                ++n34;
                c34 += sep;
            }
            if (tgt) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < za.dim(1); ++j) {
                    const double d = double(za[i * za.dim(1) + j]) - double(zb[i * zb.dim(1) + j]);
                    d2 += d * d;
                }
                if (g == 2) {
                    dist += std::sqrt(d2);
                    ++n2;
                } else {
                    dist4 += std::sqrt(d2);
                    ++nd4;
                }
            }
        }
    }
    s.accuracy4 = n4 ? double(c4) / double(n4) : 0.0;
    s.separate12 = n12 ? double(c12) / double(n12) : 0.0;
    s.separate34 = n34 ? double(c34) / double(n34) : 0.0;
    s.g2_distance = n2 ? dist / double(n2) : 0.0;
    s.g4_distance = nd4 ? dist4 / double(nd4) : 0.0;
    return s;
}

// Mean embedding distance over same-class (source, target) pairs.
template <typename T>
double semantic_alignment_distance(ModelBundle<T>& m, const Dataset& source, const Dataset& target,
                                   const std::vector<PairRecord>& g2_pairs) {
    if (g2_pairs.empty()) throw PairError("no same-class pairs to measure");
    const auto zs = embed_dataset(m, source);
    const auto zt = embed_dataset(m, target);
    const std::size_t w = zs.dim(1);
    double total = 0.0;
    for (const auto& p : g2_pairs) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            const double d = double(zs[p.first_index * w + j]) - double(zt[p.second_index * w + j]);
            d2 += d * d;
        }
        total += std::sqrt(d2);
    }
    return total / double(g2_pairs.size());
}

template <typename T>
std::map<std::string, double> snapshot_metrics(ModelBundle<T>& m, const EvalContext& ctx) {
    std::map<std::string, double> out;
    Tensor<T> zs, zt;
    if (ctx.source_val && !ctx.source_val->empty()) {
        zs = embed_dataset(m, *ctx.source_val);
        out["source_acc"] =
            score_predictions(ctx.source_val->labels, predict_from_embeddings(m, zs), m.h.classes()).accuracy;
    }
    if (ctx.target_val && !ctx.target_val->empty()) {
        zt = embed_dataset(m, *ctx.target_val);
        out["target_acc"] =
            score_predictions(ctx.target_val->labels, predict_from_embeddings(m, zt), m.h.classes()).accuracy;
    }
    if (ctx.pairs && !zs.empty() && !zt.empty()) {
        const auto d = score_dcd(m, *ctx.pairs, zs, zt);
        out["dcd_acc4"] = d.accuracy4;
        out["dcd_sep12"] = d.separate12;
        out["dcd_sep34"] = d.separate34;
        out["g2_distance"] = d.g2_distance;
        if (d.g4_distance > 0.0) out["g2_g4_ratio"] = d.g2_distance / d.g4_distance;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage drivers

namespace detail {

inline void emit(StageMetrics& sm, EpochMetrics em, const EvalContext& ctx) {
    if (ctx.sink) ctx.sink(em);
    sm.epochs.push_back(std::move(em));
}

inline std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch, Rng& rng) {
    auto order = iota_indices(n);
    shuffle(order, rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
    return out;
}

template <typename T>
std::vector<Parameter<T>*> concat_params(std::vector<Parameter<T>*> a, const std::vector<Parameter<T>*>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace detail

// Source batches cycle through reshuffled passes over the source set; target
// batches are drawn with replacement from the few-shot set.
class ClassificationSampler {
public:
    ClassificationSampler(std::size_t source_size, std::size_t target_size, std::size_t batch, std::uint64_t seed)
        : source_size_(source_size),
          target_size_(target_size),
          batch_(batch),
          rng_(make_rng(seed, stream::kClassification)) {
        if (source_size_ == 0) throw DatasetError("source set is empty");
        if (target_size_ == 0) throw DatasetError("target training set is empty");
    }

    std::vector<std::size_t> source_batch() {
        std::vector<std::size_t> out;
        out.reserve(batch_);
        while (out.size() < batch_) {
            if (cursor_ == order_.size()) {
                order_ = iota_indices(source_size_);
                shuffle(order_, rng_);
                cursor_ = 0;
            }
            out.push_back(order_[cursor_++]);
        }
        return out;
    }

    std::vector<std::size_t> target_batch() {
        std::vector<std::size_t> out(batch_);
        for (auto& i : out) i = uniform_index(rng_, target_size_);
        return out;
    }

private:
    std::size_t source_size_, target_size_, batch_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

// Stage 1: fit g and h to the source set (the LB model).
template <typename T>
StageMetrics pretrain_source(ModelBundle<T>& m, const Dataset& source, const TrainConfig& cfg,
                             const EvalContext& ctx = {}) {
    cfg.validate();
    if (source.empty()) throw DatasetError("pretraining needs a non-empty source set");
    FreezeGuard<T> freeze_d(m.dcd_parameters(), false);
    Adam<T> adam(detail::concat_params(m.g_parameters(), m.h_parameters()), cfg.adam(cfg.lr_pretrain));
    Rng rng = make_rng(cfg.seed, stream::kPretrain);
    StageMetrics sm{"pretrain", {}};
    for (std::size_t e = 0; e < cfg.epochs_pretrain; ++e) {
        double loss_sum = 0.0;
        std::size_t correct = 0, seen = 0, batches = 0;
        for (const auto& idx : detail::minibatches(source.size(), cfg.batch_cls, rng)) {
            adam.zero_grad();
            Tape<T> tape(true);
            auto z = m.embed(tape, tape.constant(source.batch<T>(idx)));
            auto logits = m.h.logits(tape, z);
            const auto y = source.batch_labels(idx);
            auto loss = ops::softmax_cross_entropy(logits, y);
            const auto pred = argmax_rows(logits.value());
            for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
            seen += y.size();
            tape.backward(loss);
            adam.step();
            loss_sum += double(loss.value().item());
            ++batches;
        }
        EpochMetrics em{"pretrain", e, snapshot_metrics(m, ctx)};
        em.values["loss_cls"] = loss_sum / double(batches);
        em.values["train_acc"] = double(correct) / double(seen);
        detail::emit(sm, std::move(em), ctx);
    }
    return sm;
}

namespace detail {

inline void require_balanced(std::span<const PairRecord> batch) {
    std::array<std::size_t, kGroupCount> n{};
    for (const auto& p : batch) {
        if (p.group < 1 || p.group > kGroupCount) throw PairError("group label outside 1..4");
        ++n[static_cast<std::size_t>(p.group - 1)];
    }
    for (auto c : n) {
        if (c != n[0]) throw PairError("unbalanced pair batch: group counts differ");
    }
}

}  // namespace detail

// Stage 2: train the DCD with g (and h) frozen. Since g cannot change,
// embeddings are computed once and the DCD trains on them directly.
template <typename T>
StageMetrics train_dcd(ModelBundle<T>& m, const GroupedPairs& pairs, const Dataset& source, const Dataset& target,
                       const TrainConfig& cfg, const EvalContext& ctx = {}) {
    cfg.validate();
    FreezeGuard<T> freeze_gh(detail::concat_params(m.g_parameters(), m.h_parameters()), false);
    FreezeGuard<T> train_d(m.dcd_parameters(), true);
    const Tensor<T> zs = embed_dataset(m, source);
    const Tensor<T> zt = embed_dataset(m, target);
    Adam<T> adam(m.dcd_parameters(), cfg.adam(cfg.lr_dcd));
    PairBatchStream stream(pairs, cfg.batch_pair, derive_seed(cfg.seed, stream::kDcdBatches));
    StageMetrics sm{"dcd", {}};
    for (std::size_t e = 0; e < cfg.epochs_dcd; ++e) {
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (const auto& batch : stream.epoch(e)) {
            detail::require_balanced(batch);
            std::vector<std::size_t> a, bs, bt, pos_s, pos_t;
            std::vector<int> groups;
            for (std::size_t i = 0; i < batch.size(); ++i) {
                a.push_back(batch[i].first_index);
                groups.push_back(batch[i].group);
            }
            Tensor<T> za = gather_rows(zs, a);
            Tensor<T> zb(za.shape());
            const std::size_t w = za.dim(1);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                const auto& table = batch[i].second_domain == SlotDomain::source ? zs : zt;
                std::copy_n(&table[batch[i].second_index * w], w, &zb[i * w]);
            }
            adam.zero_grad();
            Tape<T> tape(true);
            auto loss = dcd_loss(tape, m.dcd, tape.constant(std::move(za)), tape.constant(std::move(zb)), groups);
            tape.backward(loss);
            adam.step();
            loss_sum += double(loss.value().item());
            ++batches;
        }
        EpochMetrics em{"dcd", e, snapshot_metrics(m, ctx)};
        em.values["loss_dcd"] = loss_sum / double(batches);
        detail::emit(sm, std::move(em), ctx);
    }
    return sm;
}

// Stage 3: alternate (a) a g,h step on gamma*confusion + source CE + target
// CE with the DCD frozen and (b) DCD steps with g,h frozen.
template <typename T>
StageMetrics fada_loop(ModelBundle<T>& m, const Dataset& source, const Dataset& target, const GroupedPairs& pairs,
                       const TrainConfig& cfg, const EvalContext& ctx = {}) {
    cfg.validate();
    if (pairs.group(2).empty()) throw PairError("G2 is empty");
    auto gh = detail::concat_params(m.g_parameters(), m.h_parameters());
    Adam<T> adam_gh(gh, cfg.adam(cfg.lr_adv));
    Adam<T> adam_d(m.dcd_parameters(), cfg.adam(cfg.lr_dcd));
    PairBatchStream stream(pairs, cfg.batch_pair, derive_seed(cfg.seed, stream::kAdvBatches));
    ClassificationSampler sampler(source.size(), target.size(), cfg.batch_cls, cfg.seed);
    StageMetrics sm{"adversarial", {}};
    for (std::size_t e = 0; e < cfg.epochs_adv; ++e) {
        double sum_total = 0, sum_conf = 0, sum_cls = 0, sum_src = 0, sum_tgt = 0, sum_dcd = 0;
        std::size_t steps = 0;
        for (const auto& batch : stream.epoch(e)) {
            detail::require_balanced(batch);
            std::vector<PairRecord> g24;
            for (const auto& p : batch)
                if (p.group == 2 || p.group == 4) g24.push_back(p);
            const auto src_idx = sampler.source_batch();
            const auto tgt_idx = sampler.target_batch();
            {
                FreezeGuard<T> freeze_d(m.dcd_parameters(), false);
                FreezeGuard<T> train_gh(gh, true);
                adam_gh.zero_grad();
                Tape<T> tape(true);
                auto parts = fada_generator_loss(tape, m, g24, source, target, src_idx, tgt_idx, cfg.gamma);
                tape.backward(parts.total);
                adam_gh.step();
                sum_total += double(parts.total.value().item());
                sum_conf += double(parts.confusion.value().item());
                sum_src += double(parts.source_ce.value().item());
                sum_tgt += double(parts.target_ce.value().item());
                sum_cls += double(parts.source_ce.value().item()) + double(parts.target_ce.value().item());
            }
            {
                FreezeGuard<T> freeze_gh(gh, false);
                FreezeGuard<T> train_d(m.dcd_parameters(), true);
                for (std::size_t r = 0; r < cfg.dcd_steps_per_g; ++r) {
                    adam_d.zero_grad();
                    Tape<T> tape(true);
                    auto loss = dcd_loss(tape, m, batch, source, target);
                    tape.backward(loss);
                    adam_d.step();
                    sum_dcd += double(loss.value().item());
                }
            }
            ++steps;
        }
        EpochMetrics em{"adversarial", e, snapshot_metrics(m, ctx)};
        const double n = double(steps);
        em.values["loss_total"] = sum_total / n;
        em.values["loss_confusion"] = sum_conf / n;
        em.values["loss_cls"] = sum_cls / n;
        em.values["loss_source"] = sum_src / n;
        em.values["loss_target"] = sum_tgt / n;
        em.values["loss_dcd"] = sum_dcd / (n * double(cfg.dcd_steps_per_g));
        detail::emit(sm, std::move(em), ctx);
    }
    return sm;
}

// FT baseline: continue cross-entropy training of the LB model on the
// few-shot target set alone.
template <typename T>
StageMetrics finetune_baseline(ModelBundle<T>& m, const Dataset& target_train, const TrainConfig& cfg,
                               const EvalContext& ctx = {}) {
    cfg.validate();
    if (target_train.empty()) throw DatasetError("fine-tuning needs a non-empty target set");
    FreezeGuard<T> freeze_d(m.dcd_parameters(), false);
    Adam<T> adam(detail::concat_params(m.g_parameters(), m.h_parameters()), cfg.adam(cfg.lr_finetune));
    Rng rng = make_rng(cfg.seed, stream::kFinetune);
    StageMetrics sm{"finetune", {}};
    for (std::size_t e = 0; e < cfg.epochs_finetune; ++e) {
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (const auto& idx : detail::minibatches(target_train.size(), cfg.batch_cls, rng)) {
            adam.zero_grad();
            Tape<T> tape(true);
            auto loss = classification_loss(tape, m, target_train, idx);
            tape.backward(loss);
            adam.step();
            loss_sum += double(loss.value().item());
            ++batches;
        }
        EpochMetrics em{"finetune", e, snapshot_metrics(m, ctx)};
        em.values["loss_cls"] = loss_sum / double(batches);
        detail::emit(sm, std::move(em), ctx);
    }
    return sm;
}

// Joint source + few-shot target classification with exactly the batches
// and step count the adversarial stage uses; the gamma = 0 reference.
template <typename T>
StageMetrics joint_finetune_baseline(ModelBundle<T>& m, const Dataset& source, const Dataset& target_train,
                                     std::size_t steps_per_epoch, const TrainConfig& cfg, const EvalContext& ctx = {}) {
    cfg.validate();
    FreezeGuard<T> freeze_d(m.dcd_parameters(), false);
    Adam<T> adam(detail::concat_params(m.g_parameters(), m.h_parameters()), cfg.adam(cfg.lr_adv));
    ClassificationSampler sampler(source.size(), target_train.size(), cfg.batch_cls, cfg.seed);
    StageMetrics sm{"joint", {}};
    for (std::size_t e = 0; e < cfg.epochs_adv; ++e) {
        double loss_sum = 0.0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const auto src_idx = sampler.source_batch();
            const auto tgt_idx = sampler.target_batch();
            adam.zero_grad();
            Tape<T> tape(true);
            auto ls = classification_loss(tape, m, source, src_idx);
            auto lt = classification_loss(tape, m, target_train, tgt_idx);
            auto loss = ops::add(ls, lt);
            tape.backward(loss);
            adam.step();
            loss_sum += double(loss.value().item());
        }
        EpochMetrics em{"joint", e, snapshot_metrics(m, ctx)};
        em.values["loss_cls"] = loss_sum / double(std::max<std::size_t>(1, steps_per_epoch));
        detail::emit(sm, std::move(em), ctx);
    }
    return sm;
}

struct UdaResult {
    StageMetrics metrics;
    double domain_accuracy = 0.0;  // binary discriminator on held-out data
};

// Held-out accuracy of a binary domain discriminator.
template <typename T>
double domain_accuracy(ModelBundle<T>& m, Discriminator<T>& d, const Dataset& source, const Dataset& target) {
    std::size_t correct = 0, total = 0;
    for (int dom = 0; dom < 2; ++dom) {
        const Dataset& ds = dom == 0 ? source : target;
        if (ds.empty()) continue;
        const auto z = embed_dataset(m, ds);
        Tape<T> tape(false);
        const auto pred = argmax_rows(d.logits(tape, tape.constant(z)).value());
        for (int p : pred) correct += p == dom;
        total += pred.size();
    }
    return total ? double(correct) / double(total) : 0.0;
}

// Unsupervised adversarial baseline with a binary domain discriminator:
// discriminator steps on the two-term domain loss alternate with g,h steps
// on inverted-label target confusion plus source classification.
template <typename T>
UdaResult uda_binary_baseline(ModelBundle<T>& m, const Dataset& source, const Dataset& target_unlabeled,
                              const TrainConfig& cfg, const EvalContext& ctx = {},
                              const Dataset* source_heldout = nullptr, const Dataset* target_heldout = nullptr) {
    cfg.validate();
    if (source.empty() || target_unlabeled.empty()) throw DatasetError("UDA needs non-empty source and target sets");
    Discriminator<T> d("dbin", m.width(), kDcdHidden, 2, derive_seed(cfg.seed, stream::kUda), m.options.activation);
    auto gh = detail::concat_params(m.g_parameters(), m.h_parameters());
    FreezeGuard<T> freeze_dcd(m.dcd_parameters(), false);
    Adam<T> adam_gh(gh, cfg.adam(cfg.lr_adv));
    Adam<T> adam_d(d.parameters(), cfg.adam(cfg.lr_dcd));
    Rng rng = make_rng(cfg.seed, stream::kUda);
    ClassificationSampler target_sampler(target_unlabeled.size(), target_unlabeled.size(), cfg.batch_cls,
                                         derive_seed(cfg.seed, stream::kUda));
    UdaResult result{{"uda", {}}, 0.0};
    for (std::size_t e = 0; e < cfg.epochs_adv; ++e) {
        double sum_d = 0, sum_g = 0;
        std::size_t steps = 0;
        for (const auto& src_idx : detail::minibatches(source.size(), cfg.batch_cls, rng)) {
            const auto tgt_idx = target_sampler.source_batch();
            {
                FreezeGuard<T> freeze(gh, false);
                adam_d.zero_grad();
                Tape<T> tape(true);
                auto zs = m.embed(tape, tape.constant(source.batch<T>(src_idx)));
                auto zt = m.embed(tape, tape.constant(target_unlabeled.batch<T>(tgt_idx)));
                auto loss = binary_domain_loss(tape, d, zs, zt);
                tape.backward(loss);
                adam_d.step();
                sum_d += double(loss.value().item());
            }
            {
                FreezeGuard<T> freeze(d.parameters(), false);
                adam_gh.zero_grad();
                Tape<T> tape(true);
                auto zt = m.embed(tape, tape.constant(target_unlabeled.batch<T>(tgt_idx)));
                auto conf = inverted_domain_loss(tape, d, zt);
                auto loss = ops::add(conf, classification_loss(tape, m, source, src_idx));
                tape.backward(loss);
                adam_gh.step();
                sum_g += double(loss.value().item());
            }
            ++steps;
        }
        EpochMetrics em{"uda", e, snapshot_metrics(m, ctx)};
        em.values["loss_domain"] = sum_d / double(steps);
        em.values["loss_generator"] = sum_g / double(steps);
        if (source_heldout && target_heldout) {
            em.values["domain_acc"] = domain_accuracy(m, d, *source_heldout, *target_heldout);
            result.domain_accuracy = em.values["domain_acc"];
        }
        detail::emit(result.metrics, std::move(em), ctx);
    }
    return result;
}

}  // namespace fada
