#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "fada/training.hpp"
#include "support/finite_difference.hpp"

using namespace fada;

namespace {

constexpr std::size_t kDim = 6, kHidden = 8, kWidth = 5, kClasses = 3;

// Gaussian-ish clusters per class; the target domain is shifted.
Dataset vector_domain(std::size_t per_class, double shift, std::uint64_t seed, const std::string& tag) {
    Dataset ds;
    ds.sample_shape = {kDim};
    ds.num_classes = kClasses;
    ds.domain_tag = tag;
    Rng rng(seed);
    for (std::size_t i = 0; i < per_class * kClasses; ++i) {
        const int y = static_cast<int>(i % kClasses);
        for (std::size_t j = 0; j < kDim; ++j) {
            const double centre = j == static_cast<std::size_t>(y) ? 1.5 : 0.0;
            ds.features.push_back(static_cast<float>(centre + shift + uniform_real(rng, -0.5, 0.5)));
        }
        ds.labels.push_back(y);
    }
    return ds;
}

template <typename T>
ModelBundle<T> small_models(std::uint64_t seed) {
    ArchitectureOptions opts;
    opts.activation = Activation::tanh;
    auto m = init_vector_models<T>(kDim, kHidden, kWidth, kClasses, seed, opts);
    Rng rng(seed + 1000);
    for (auto* p : m.all_parameters())
        if (p->value.rank() == 1)
            for (auto& v : p->value.storage()) v = static_cast<T>(uniform_real(rng, -0.1, 0.1));
    return m;
}

template <typename T>
std::vector<T> flatten(const std::vector<Parameter<T>*>& ps) {
    std::vector<T> out;
    for (auto* p : ps) out.insert(out.end(), p->value.data().begin(), p->value.data().end());
    return out;
}

template <typename T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
std::vector<Parameter<T>*> gh_params(ModelBundle<T>& m) {
    auto p = m.g_parameters();
    for (auto* q : m.h_parameters()) p.push_back(q);
    return p;
}

void zero_grads(ModelBundle<double>& m) {
    for (auto* p : m.all_parameters()) p->zero_grad();
}

TrainConfig quick_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs_pretrain = 2;
    cfg.epochs_dcd = 2;
    cfg.epochs_adv = 2;
    cfg.epochs_finetune = 2;
    cfg.batch_cls = 8;
    cfg.batch_pair = 8;
    return cfg;
}

struct Fixture {
    Dataset source = vector_domain(6, 0.0, 1, "src");
    Dataset target = vector_domain(2, 0.4, 2, "tgt");
    GroupedPairs pairs = build_grouped_pairs(source, target, 3);

    std::vector<PairRecord> mixed_batch() const {
        std::vector<PairRecord> b;
        for (int g = 1; g <= 4; ++g)
            for (std::size_t i = 0; i < 2; ++i) b.push_back(pairs.group(g)[i]);
        return b;
    }
    std::vector<PairRecord> g24_batch() const {
        std::vector<PairRecord> b;
        for (int g : {2, 4})
            for (std::size_t i = 0; i < 3; ++i) b.push_back(pairs.group(g)[i]);
        return b;
    }
};

const double kLn4 = std::log(4.0);

}  // namespace

// ---------------------------------------------------------------------------
// Loss values

TEST(DcdLoss, ZeroDiscriminatorGivesLogFour) {
    Fixture f;
    auto m = small_models<double>(1);
    for (auto* p : m.dcd_parameters()) p->value.fill(0.0);
    Tape<double> tape(false);
    EXPECT_NEAR(dcd_loss(tape, m, f.mixed_batch(), f.source, f.target).value().item(), kLn4, 1e-12);
}

TEST(DcdLoss, HandComputedTwoPairBatch) {
    auto m = small_models<double>(2);
    m.dcd.fc2.weight.value.fill(0.0);
    for (std::size_t k = 0; k < 4; ++k) m.dcd.fc2.bias.value[k] = double(k + 1);
    Tape<double> tape(false);
    auto za = tape.constant(Tensor<double>({2, kWidth}));
    auto zb = tape.constant(Tensor<double>({2, kWidth}));
    const std::vector<int> groups{1, 3};
    // Logits are [1,2,3,4] for both rows; CE = lse - 1 and lse - 3.
    const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0) + std::exp(4.0));
    const double expected = ((lse - 1.0) + (lse - 3.0)) / 2.0;
    EXPECT_NEAR(dcd_loss(tape, m.dcd, za, zb, groups).value().item(), expected, 1e-12);
    EXPECT_NEAR(expected, 2.4401897, 1e-7);
}

TEST(DcdLoss, PerfectDiscriminatorApproachesZero) {
    auto m = small_models<double>(3);
    m.dcd.fc2.weight.value.fill(0.0);
    m.dcd.fc2.bias.value.fill(0.0);
    m.dcd.fc2.bias.value[1] = 60.0;
    Tape<double> tape(false);
    auto z = tape.constant(Tensor<double>({3, kWidth}));
    const std::vector<int> groups{2, 2, 2};
    EXPECT_LT(dcd_loss(tape, m.dcd, z, z, groups).value().item(), 1e-20);
}

TEST(DcdLoss, GroupLabelsOutsideRangeRejected) {
    auto m = small_models<double>(4);
    Tape<double> tape(false);
    auto z = tape.constant(Tensor<double>({1, kWidth}));
    for (int bad : {0, 5}) {
        const std::vector<int> groups{bad};
        EXPECT_THROW(dcd_loss(tape, m.dcd, z, z, groups), PairError) << bad;
    }
}

TEST(Confusion, UniformDiscriminatorGivesLogFourPerGroup) {
    Fixture f;
    auto m = small_models<double>(5);
    for (auto* p : m.dcd_parameters()) p->value.fill(0.0);
    Tape<double> tape(false);
    EXPECT_NEAR(confusion_loss(tape, m, f.g24_batch(), f.source, f.target).value().item(), 2.0 * kLn4, 1e-12);
    std::vector<PairRecord> only_g2(f.pairs.group(2).begin(), f.pairs.group(2).begin() + 4);
    EXPECT_NEAR(confusion_loss(tape, m, only_g2, f.source, f.target).value().item(), kLn4, 1e-12);
}

TEST(Confusion, ConfidentGroupOneGivesZeroOnG2) {
    Fixture f;
    auto m = small_models<double>(6);
    m.dcd.fc2.weight.value.fill(0.0);
    m.dcd.fc2.bias.value.fill(0.0);
    m.dcd.fc2.bias.value[0] = 60.0;
    std::vector<PairRecord> only_g2(f.pairs.group(2).begin(), f.pairs.group(2).begin() + 4);
    Tape<double> tape(false);
    EXPECT_LT(confusion_loss(tape, m, only_g2, f.source, f.target).value().item(), 1e-20);
}

TEST(Confusion, SourceOnlyGroupsRejected) {
    Fixture f;
    auto m = small_models<double>(7);
    Tape<double> tape(false);
    for (int g : {1, 3}) {
        std::vector<PairRecord> batch{f.pairs.group(g).front()};
        EXPECT_THROW(confusion_loss(tape, m, batch, f.source, f.target), PairError) << g;
    }
    EXPECT_THROW(confusion_loss(tape, m, std::vector<PairRecord>{}, f.source, f.target), PairError);
}

TEST(FadaLoss, TotalDecomposesIntoParts) {
    Fixture f;
    auto m = small_models<float>(8);
    const std::vector<std::size_t> si{0, 4, 7, 9}, ti{1, 2, 5};
    for (double gamma : {0.0, 0.5, 2.0}) {
        Tape<float> tape(false);
        auto parts = fada_generator_loss(tape, m, f.g24_batch(), f.source, f.target, si, ti, gamma);
        const double recomposed =
            gamma * parts.confusion.value().item() + parts.source_ce.value().item() + parts.target_ce.value().item();
        EXPECT_NEAR(parts.total.value().item(), recomposed, 1e-6) << gamma;
    }
}

TEST(FadaLoss, NegativeGammaRejected) {
    Fixture f;
    auto m = small_models<double>(9);
    const std::vector<std::size_t> idx{0, 1};
    Tape<double> tape(false);
    EXPECT_THROW(fada_generator_loss(tape, m, f.g24_batch(), f.source, f.target, idx, idx, -0.1), ConfigError);
}

TEST(BinaryDomain, ZeroDiscriminatorGivesTwoLogTwo) {
    auto m = small_models<double>(10);
    Discriminator<double> d("dbin", kWidth, kDcdHidden, 2, 11);
    d.fc2.weight.value.fill(0.0);
    d.fc2.bias.value.fill(0.0);
    Tape<double> tape(false);
    Tensor<double> zs({4, kWidth}), zt({3, kWidth});
    zs.fill(0.3);
    zt.fill(-0.7);
    EXPECT_NEAR(binary_domain_loss(tape, d, tape.constant(zs), tape.constant(zt)).value().item(), 2.0 * std::log(2.0),
                1e-12);
    EXPECT_NEAR(inverted_domain_loss(tape, d, tape.constant(zt)).value().item(), std::log(2.0), 1e-12);
}

// ---------------------------------------------------------------------------
// Composite-loss gradients against central finite differences (float64)

TEST(LossGradient, NetworksAreSmall) {
    auto m = small_models<double>(0);
    EXPECT_LE(parameter_count(m.all_parameters()), 5000u);
}

TEST(LossGradient, Classification) {
    Fixture f;
    auto m = small_models<double>(20);
    const std::vector<std::size_t> idx{0, 3, 5, 8, 11, 17};
    auto loss = [&](bool backward) {
        Tape<double> tape(backward);
        auto l = classification_loss(tape, m, f.source, idx);
        if (backward) tape.backward(l);
        return l.value().item();
    };
    zero_grads(m);
    loss(true);
    const auto r = oracle::check_parameters([&] { return loss(false); }, gh_params(m), 1e-6);
    EXPECT_LT(r.relative_error, 1e-5);
}

TEST(LossGradient, DcdWithRespectToDiscriminator) {
    Fixture f;
    auto m = small_models<double>(21);
    const auto batch = f.mixed_batch();
    auto loss = [&](bool backward) {
        Tape<double> tape(backward);
        auto l = dcd_loss(tape, m, batch, f.source, f.target);
        if (backward) tape.backward(l);
        return l.value().item();
    };
    zero_grads(m);
    loss(true);
    const auto r = oracle::check_parameters([&] { return loss(false); }, m.dcd_parameters(), 1e-6);
    EXPECT_LT(r.relative_error, 1e-5);
}

TEST(LossGradient, ConfusionWithRespectToEmbeddingOnly) {
    Fixture f;
    auto m = small_models<double>(22);
    const auto batch = f.g24_batch();
    auto loss = [&](bool backward) {
        Tape<double> tape(backward);
        auto l = confusion_loss(tape, m, batch, f.source, f.target);
        if (backward) tape.backward(l);
        return l.value().item();
    };
    zero_grads(m);
    {
        FreezeGuard<double> freeze(m.dcd_parameters(), false);
        loss(true);
    }
    for (auto* p : m.dcd_parameters())
        for (double v : p->grad.data()) EXPECT_EQ(v, 0.0);
    const auto r = oracle::check_parameters([&] { return loss(false); }, m.g_parameters(), 1e-6);
    EXPECT_LT(r.relative_error, 1e-5);
}

TEST(LossGradient, FadaTotalWithRespectToEmbeddingAndHead) {
    Fixture f;
    auto m = small_models<double>(23);
    const auto batch = f.g24_batch();
    const std::vector<std::size_t> si{1, 2, 6, 13}, ti{0, 4, 4};
    auto loss = [&](bool backward) {
        Tape<double> tape(backward);
        auto parts = fada_generator_loss(tape, m, batch, f.source, f.target, si, ti, 0.5);
        if (backward) tape.backward(parts.total);
        return parts.total.value().item();
    };
    zero_grads(m);
    {
        FreezeGuard<double> freeze(m.dcd_parameters(), false);
        loss(true);
    }
    const auto r = oracle::check_parameters([&] { return loss(false); }, gh_params(m), 1e-6);
    EXPECT_LT(r.relative_error, 1e-5);
}

TEST(LossGradient, BinaryDomainAndInvertedGenerator) {
    Fixture f;
    auto m = small_models<double>(24);
    Discriminator<double> d("dbin", kWidth, 16, 2, 25, Activation::tanh);
    const std::vector<std::size_t> si{0, 1, 2, 3}, ti{0, 1, 2};
    auto disc_loss = [&](bool backward) {
        Tape<double> tape(backward);
        auto zs = m.embed(tape, tape.constant(f.source.batch<double>(si)));
        auto zt = m.embed(tape, tape.constant(f.target.batch<double>(ti)));
        auto l = binary_domain_loss(tape, d, zs, zt);
        if (backward) tape.backward(l);
        return l.value().item();
    };
    zero_grads(m);
    for (auto* p : d.parameters()) p->zero_grad();
    disc_loss(true);
    const auto rd = oracle::check_parameters([&] { return disc_loss(false); }, d.parameters(), 1e-6);
    EXPECT_LT(rd.relative_error, 1e-5);

    auto gen_loss = [&](bool backward) {
        Tape<double> tape(backward);
        auto zt = m.embed(tape, tape.constant(f.target.batch<double>(ti)));
        auto l = inverted_domain_loss(tape, d, zt);
        if (backward) tape.backward(l);
        return l.value().item();
    };
    zero_grads(m);
    {
        FreezeGuard<double> freeze(d.parameters(), false);
        gen_loss(true);
    }
    const auto rg = oracle::check_parameters([&] { return gen_loss(false); }, m.g_parameters(), 1e-6);
    EXPECT_LT(rg.relative_error, 1e-5);
}

// ---------------------------------------------------------------------------
// Evaluation

TEST(Evaluate, UniformHeadIsChanceOnBalancedData) {
    auto ds = vector_domain(10, 0.0, 30, "bal");
    auto m = small_models<float>(31);
    for (auto* p : m.h_parameters()) p->value.fill(0.0f);
    const auto e = evaluate(m, ds);
    EXPECT_NEAR(e.accuracy, 1.0 / double(kClasses), 1e-12);
    EXPECT_EQ(e.count, ds.size());
}

TEST(Evaluate, HandCountedConfusionMatrix) {
    const std::vector<int> labels{0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2};
    const std::vector<int> pred{0, 0, 0, 0, 0, 1, 2, 1, 1, 1, 1, 0, 0, 2, 2, 2, 2, 2, 2, 1};
    const auto e = score_predictions(labels, pred, 3);
    const std::vector<std::vector<std::size_t>> expected{{5, 1, 1}, {2, 4, 1}, {0, 1, 5}};
    EXPECT_EQ(e.confusion, expected);
    EXPECT_EQ(e.count, 20u);
    EXPECT_DOUBLE_EQ(e.accuracy, 14.0 / 20.0);
    EXPECT_DOUBLE_EQ(e.per_class_accuracy[0], 5.0 / 7.0);
    EXPECT_DOUBLE_EQ(e.per_class_accuracy[1], 4.0 / 7.0);
    EXPECT_DOUBLE_EQ(e.per_class_accuracy[2], 5.0 / 6.0);
    EXPECT_EQ(e.per_class_count, (std::vector<std::size_t>{7, 7, 6}));
}

TEST(Evaluate, PerfectPredictionsScoreOne) {
    const std::vector<int> labels{2, 0, 1, 1};
    EXPECT_DOUBLE_EQ(score_predictions(labels, labels, 3).accuracy, 1.0);
}

TEST(Evaluate, EmptyDatasetRejected) {
    Dataset empty;
    empty.sample_shape = {kDim};
    auto m = small_models<float>(32);
    EXPECT_THROW(evaluate(m, empty), DatasetError);
}

// ---------------------------------------------------------------------------
// Stage contracts

TEST(Stages, DcdStageLeavesEmbeddingAndHeadBitIdentical) {
    Fixture f;
    auto m = small_models<float>(40);
    const auto before = flatten(gh_params(m));
    const auto d_before = flatten(m.dcd_parameters());
    const auto sm = train_dcd(m, f.pairs, f.source, f.target, quick_config(40));
    EXPECT_TRUE(bit_equal(before, flatten(gh_params(m))));
    EXPECT_FALSE(bit_equal(d_before, flatten(m.dcd_parameters())));
    EXPECT_EQ(sm.epochs.size(), 2u);
    for (auto* p : m.all_parameters()) EXPECT_TRUE(p->trainable);
}

TEST(Stages, ClassificationStagesLeaveDiscriminatorBitIdentical) {
    Fixture f;
    const auto cfg = quick_config(41);
    auto m = small_models<float>(41);
    const auto d_before = flatten(m.dcd_parameters());
    pretrain_source(m, f.source, cfg);
    EXPECT_TRUE(bit_equal(d_before, flatten(m.dcd_parameters())));
    finetune_baseline(m, f.target, cfg);
    EXPECT_TRUE(bit_equal(d_before, flatten(m.dcd_parameters())));
    joint_finetune_baseline(m, f.source, f.target, 3, cfg);
    EXPECT_TRUE(bit_equal(d_before, flatten(m.dcd_parameters())));
    uda_binary_baseline(m, f.source, f.target, cfg);
    EXPECT_TRUE(bit_equal(d_before, flatten(m.dcd_parameters())));
}

TEST(Stages, AdversarialStageTouchesAllThreeModels) {
    Fixture f;
    auto m = small_models<float>(42);
    const auto gh = flatten(gh_params(m));
    const auto d = flatten(m.dcd_parameters());
    const auto sm = fada_loop(m, f.source, f.target, f.pairs, quick_config(42));
    EXPECT_FALSE(bit_equal(gh, flatten(gh_params(m))));
    EXPECT_FALSE(bit_equal(d, flatten(m.dcd_parameters())));
    for (const auto& e : sm.epochs) {
        const auto& v = e.values;
        EXPECT_NEAR(v.at("loss_cls"), v.at("loss_source") + v.at("loss_target"), 1e-9);
        EXPECT_NEAR(v.at("loss_total"), 0.5 * v.at("loss_confusion") + v.at("loss_cls"), 1e-5);
    }
}

TEST(Stages, PretrainReducesSourceLoss) {
    Fixture f;
    auto cfg = quick_config(43);
    cfg.epochs_pretrain = 30;
    auto m = small_models<float>(43);
    const auto sm = pretrain_source(m, f.source, cfg);
    EXPECT_LT(sm.last().values.at("loss_cls"), sm.epochs.front().values.at("loss_cls"));
    EXPECT_GT(evaluate(m, f.source).accuracy, 0.9);
}

TEST(Stages, GammaZeroMatchesJointBaselineBitForBit) {
    Fixture f;
    auto cfg = quick_config(44);
    cfg.gamma = 0.0;
    auto lb = small_models<float>(44);
    pretrain_source(lb, f.source, cfg);
    auto fada = lb;
    auto joint = lb;
    fada_loop(fada, f.source, f.target, f.pairs, cfg);
    const std::size_t steps = PairBatchStream(f.pairs, cfg.batch_pair, 0).batches_per_epoch();
    joint_finetune_baseline(joint, f.source, f.target, steps, cfg);
    EXPECT_TRUE(bit_equal(flatten(gh_params(fada)), flatten(gh_params(joint))));
}

TEST(Stages, NonzeroGammaDepartsFromJointBaseline) {
    Fixture f;
    auto cfg = quick_config(45);
    auto lb = small_models<float>(45);
    auto fada = lb;
    auto joint = lb;
    fada_loop(fada, f.source, f.target, f.pairs, cfg);
    joint_finetune_baseline(joint, f.source, f.target, PairBatchStream(f.pairs, cfg.batch_pair, 0).batches_per_epoch(),
                            cfg);
    EXPECT_FALSE(bit_equal(flatten(gh_params(fada)), flatten(gh_params(joint))));
}

TEST(Stages, ReplayIsBitExact) {
    Fixture f;
    const auto cfg = quick_config(46);
    auto run = [&] {
        auto m = small_models<float>(46);
        std::vector<StageMetrics> out;
        EvalContext ctx{&f.source, &f.target, &f.pairs, {}};
        out.push_back(pretrain_source(m, f.source, cfg, ctx));
        out.push_back(train_dcd(m, f.pairs, f.source, f.target, cfg, ctx));
        out.push_back(fada_loop(m, f.source, f.target, f.pairs, cfg, ctx));
        return std::make_pair(out, flatten(m.all_parameters()));
    };
    const auto a = run();
    const auto b = run();
    ASSERT_EQ(a.first.size(), b.first.size());
    for (std::size_t s = 0; s < a.first.size(); ++s) {
        ASSERT_EQ(a.first[s].epochs.size(), b.first[s].epochs.size());
        for (std::size_t e = 0; e < a.first[s].epochs.size(); ++e) {
            const auto& va = a.first[s].epochs[e].values;
            const auto& vb = b.first[s].epochs[e].values;
            ASSERT_EQ(va.size(), vb.size());
            for (const auto& [k, v] : va) EXPECT_TRUE(std::memcmp(&v, &vb.at(k), sizeof v) == 0) << k;
        }
    }
    EXPECT_TRUE(bit_equal(a.second, b.second));
}

TEST(Stages, SinkSeesEveryEpochWithHeldOutMetrics) {
    Fixture f;
    const auto cfg = quick_config(47);
    auto m = small_models<float>(47);
    std::vector<std::string> seen;
    EvalContext ctx{&f.source, &f.target, &f.pairs, [&](const EpochMetrics& e) {
                        seen.push_back(e.stage);
                        EXPECT_TRUE(e.values.count("dcd_acc4"));
                        EXPECT_TRUE(e.values.count("g2_distance"));
                    }};
    train_dcd(m, f.pairs, f.source, f.target, cfg, ctx);
    fada_loop(m, f.source, f.target, f.pairs, cfg, ctx);
    EXPECT_EQ(seen, (std::vector<std::string>{"dcd", "dcd", "adversarial", "adversarial"}));
}

TEST(Stages, UnbalancedPairBatchRejected) {
    Fixture f;
    std::vector<PairRecord> batch{f.pairs.group(1)[0], f.pairs.group(1)[1], f.pairs.group(2)[0], f.pairs.group(3)[0],
                                  f.pairs.group(4)[0]};
    EXPECT_THROW(detail::require_balanced(batch), PairError);
    batch.erase(batch.begin());
    EXPECT_NO_THROW(detail::require_balanced(batch));
}

TEST(Stages, EmptyInputsRejected) {
    Fixture f;
    const auto cfg = quick_config(48);
    auto m = small_models<float>(48);
    Dataset empty;
    empty.sample_shape = {kDim};
    EXPECT_THROW(pretrain_source(m, empty, cfg), DatasetError);
    EXPECT_THROW(finetune_baseline(m, empty, cfg), DatasetError);
    EXPECT_THROW(joint_finetune_baseline(m, f.source, empty, 2, cfg), DatasetError);
    EXPECT_THROW(uda_binary_baseline(m, f.source, empty, cfg), DatasetError);
    GroupedPairs none;
    EXPECT_THROW(fada_loop(m, f.source, f.target, none, cfg), PairError);
}

TEST(Stages, ClassificationSamplerCyclesSourceAndStaysInRange) {
    ClassificationSampler s(10, 3, 4, 9);
    std::vector<std::size_t> counts(10, 0);
    for (int i = 0; i < 5; ++i)
        for (auto k : s.source_batch()) ++counts[k];
    for (auto c : counts) EXPECT_EQ(c, 2u);
    for (int i = 0; i < 20; ++i)
        for (auto k : s.target_batch()) EXPECT_LT(k, 3u);
}

TEST(Config, AllProblemsListedAtOnce) {
    TrainConfig cfg;
    cfg.gamma = -1;
    cfg.lr_adv = 0;
    cfg.batch_pair = 6;
    cfg.n_shot = 0;
    EXPECT_EQ(cfg.problems().size(), 4u);
    try {
        cfg.validate();
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        for (const char* key : {"gamma", "lr_adv", "batch_pair", "n_shot"})
            EXPECT_NE(msg.find(key), std::string::npos) << key;
    }
    EXPECT_TRUE(TrainConfig{}.problems().empty());
}

TEST(Config, Defaults) {
    const TrainConfig cfg;
    EXPECT_EQ(cfg.gamma, 0.5);
    EXPECT_EQ(cfg.lr_pretrain, 1e-3);
    EXPECT_EQ(cfg.lr_dcd, 1e-3);
    EXPECT_EQ(cfg.lr_adv, 1e-4);
    EXPECT_EQ(cfg.beta1, 0.9);
    EXPECT_EQ(cfg.beta2, 0.999);
    EXPECT_EQ(cfg.adam_epsilon, 1e-8);
    EXPECT_EQ(cfg.epochs_pretrain, 20u);
    EXPECT_EQ(cfg.epochs_dcd, 10u);
    EXPECT_EQ(cfg.epochs_adv, 30u);
    EXPECT_EQ(cfg.dcd_steps_per_g, 1u);
}
