#include <gtest/gtest.h>

#include <cmath>

#include "fada/checkpoint.hpp"
#include "fada/models.hpp"
#include "support/finite_difference.hpp"

using namespace fada;

namespace {

Tensor<double> random_images(std::size_t b, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> x({b, 1, 16, 16});
    for (auto& v : x.storage()) v = uniform_unit(rng);
    return x;
}

void zero_all(const std::vector<Parameter<float>*>& ps) {
    for (auto* p : ps) p->value.fill(0.0f);
}

std::vector<float> flatten(const std::vector<Parameter<float>*>& ps) {
    std::vector<float> out;
    for (auto* p : ps) out.insert(out.end(), p->value.data().begin(), p->value.data().end());
    return out;
}

}  // namespace

TEST(Embedding, ParameterCounts) {
    EmbeddingNet<float> g(1);
    EXPECT_EQ(g.conv1.kernel.size() + g.conv1.bias.size(), 156u);
    EXPECT_EQ(g.conv2.kernel.size() + g.conv2.bias.size(), 2416u);
    EXPECT_EQ(g.fc1.weight.size() + g.fc1.bias.size(), 2040u);
    EXPECT_EQ(g.fc2.weight.size() + g.fc2.bias.size(), 10164u);
    EXPECT_EQ(parameter_count(g.parameters()), 156u + 2416u + 2040u + 10164u);
}

TEST(Embedding, HeadAndDiscriminatorShapes) {
    auto m = init_models<float>(0);
    EXPECT_EQ(parameter_count(m.h_parameters()), 84u * 10 + 10);
    EXPECT_EQ(parameter_count(m.dcd_parameters()), 168u * 64 + 64 + 64 * 4 + 4);
    EXPECT_EQ(m.dcd.input_width(), 168u);
    EXPECT_EQ(m.dcd.outputs(), 4u);
    EXPECT_EQ(m.width(), 84u);
}

TEST(Embedding, ZeroImageGivesZeroEmbedding) {
    auto m = init_models<float>(3);
    Tape<float> tape(false);
    auto z = m.embed(tape, tape.constant(Tensor<float>({2, 1, 16, 16})));
    EXPECT_EQ(z.shape(), (Shape{2, 84}));
    for (float v : z.value().data()) EXPECT_EQ(v, 0.0f);
}

TEST(Embedding, BatchShapeAndRejection) {
    auto m = init_models<float>(3);
    Tape<float> tape(false);
    EXPECT_EQ(m.embed(tape, tape.constant(Tensor<float>({5, 1, 16, 16}))).shape(), (Shape{5, 84}));
    EXPECT_THROW(m.embed(tape, tape.constant(Tensor<float>({5, 1, 28, 28}))), ShapeError);
    EXPECT_THROW(m.embed(tape, tape.constant(Tensor<float>({5, 256}))), ShapeError);
}

TEST(Embedding, FinalActivationIsConfigurable) {
    ArchitectureOptions opts;
    opts.embed_final_activation = false;
    auto linear_out = init_models<double>(4, opts);
    auto relu_out = init_models<double>(4);
    Tape<double> tape(false);
    const auto x = tape.constant(random_images(6, 1));
    const auto a = linear_out.embed(tape, x).value();
    const auto b = relu_out.embed(tape, x).value();
    bool negative = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_DOUBLE_EQ(b[i], std::max(0.0, a[i]));
        negative |= a[i] < 0;
    }
    EXPECT_TRUE(negative);
}

TEST(Embedding, DeterministicPerSeed) {
    auto a = init_models<float>(11), b = init_models<float>(11), c = init_models<float>(12);
    EXPECT_EQ(flatten(a.all_parameters()), flatten(b.all_parameters()));
    EXPECT_NE(flatten(a.all_parameters()), flatten(c.all_parameters()));
    Tape<float> t1(false), t2(false);
    Tensor<float> x({3, 1, 16, 16});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = float(i % 13) / 13.0f;
    EXPECT_EQ(a.embed(t1, t1.constant(x)).value(), b.embed(t2, t2.constant(x)).value());
}

TEST(Init, FanUniformBoundsAndZeroBiases) {
    auto m = init_models<double>(5);
    for (auto* p : m.all_parameters()) {
        if (p->value.rank() == 1) {
            for (double v : p->value.data()) EXPECT_EQ(v, 0.0) << p->name;
            continue;
        }
        std::size_t fan_in, fan_out;
        if (p->value.rank() == 4) {
            const auto& s = p->value.shape();
            fan_in = s[1] * s[2] * s[3];
            fan_out = s[0] * s[2] * s[3];
        } else {
            fan_in = p->value.dim(0);
            fan_out = p->value.dim(1);
        }
        const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
        double sq = 0.0;
        for (double v : p->value.data()) {
            EXPECT_LE(std::abs(v), bound) << p->name;
            sq += v * v;
        }
        // Uniform(-b, b) has variance b^2 / 3.
        if (p->size() >= 1000) {
            EXPECT_NEAR(sq / double(p->size()), bound * bound / 3, 0.1 * bound * bound / 3) << p->name;
        }
    }
}

TEST(Init, DeclaredNamesAndShapes) {
    auto m = init_models<float>(0);
    std::vector<std::pair<std::string, Shape>> want{
        {"g.conv1.w", {6, 1, 5, 5}}, {"g.conv1.b", {6}}, {"g.conv2.w", {16, 6, 5, 5}}, {"g.conv2.b", {16}},
        {"g.fc1.w", {16, 120}},      {"g.fc1.b", {120}}, {"g.fc2.w", {120, 84}},       {"g.fc2.b", {84}},
        {"h.fc.w", {84, 10}},        {"h.fc.b", {10}},   {"dcd.fc1.w", {168, 64}},     {"dcd.fc1.b", {64}},
        {"dcd.fc2.w", {64, 4}},      {"dcd.fc2.b", {4}}};
    const auto ps = m.all_parameters();
    ASSERT_EQ(ps.size(), want.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
        EXPECT_EQ(ps[i]->name, want[i].first);
        EXPECT_EQ(ps[i]->value.shape(), want[i].second) << want[i].first;
    }
}

TEST(Predictor, ZeroWeightsGiveUniform) {
    auto m = init_models<float>(0);
    zero_all(m.h_parameters());
    Tape<float> tape(false);
    Tensor<float> z({3, 84});
    z.fill(0.7f);
    for (float v : m.h.predict(tape, tape.constant(z)).value().data()) EXPECT_FLOAT_EQ(v, 0.1f);
}

TEST(Predictor, RowsAreDistributions) {
    auto m = init_models<double>(2);
    Tape<double> tape(false);
    auto z = m.embed(tape, tape.constant(random_images(7, 3)));
    const auto p = m.h.predict(tape, z).value();
    for (std::size_t b = 0; b < 7; ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < 10; ++k) {
            EXPECT_GE(p[b * 10 + k], 0.0);
            s += p[b * 10 + k];
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Predictor, ArgmaxInvariantUnderPositiveTemperature) {
    auto m = init_models<double>(2);
    Tape<double> tape(false);
    auto logits = m.h.logits(tape, m.embed(tape, tape.constant(random_images(5, 8)))).value();
    for (double scale : {0.1, 0.5, 3.0, 20.0}) {
        auto scaled = logits;
        for (auto& v : scaled.storage()) v *= scale;
        const auto p = ops::softmax_rows(scaled);
        for (std::size_t b = 0; b < 5; ++b) {
            const auto* l = &logits[b * 10];
            const auto* q = &p[b * 10];
            EXPECT_EQ(std::max_element(l, l + 10) - l, std::max_element(q, q + 10) - q);
        }
    }
}

TEST(Predictor, WidthMismatchRejected) {
    auto m = init_models<float>(0);
    Tape<float> tape(false);
    EXPECT_THROW(m.h.predict(tape, tape.constant(Tensor<float>({2, 83}))), ShapeError);
}

TEST(Dcd, ZeroInitializedIsUniform) {
    auto m = init_models<float>(0);
    zero_all(m.dcd_parameters());
    Tape<float> tape(false);
    Tensor<float> z({4, 84});
    z.fill(0.3f);
    for (float v : m.dcd.pair_forward(tape, tape.constant(z), tape.constant(z)).value().data())
        EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Dcd, SlotOrderMatters) {
    auto m = init_models<double>(9);
    Rng rng(1);
    Tensor<double> a({3, 84}), b({3, 84});
    for (auto& v : a.storage()) v = uniform_unit(rng);
    for (auto& v : b.storage()) v = uniform_unit(rng);
    Tape<double> tape(false);
    const auto ab = m.dcd.pair_forward(tape, tape.constant(a), tape.constant(b)).value();
    const auto ba = m.dcd.pair_forward(tape, tape.constant(b), tape.constant(a)).value();
    for (std::size_t r = 0; r < 3; ++r) {
        double diff = 0.0, s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            diff += std::abs(ab[r * 4 + k] - ba[r * 4 + k]);
            s += ab[r * 4 + k];
        }
        EXPECT_GT(diff, 1e-6);
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Dcd, WidthMismatchRejected) {
    auto m = init_models<float>(0);
    Tape<float> tape(false);
    EXPECT_THROW(m.dcd.pair_forward(tape, tape.constant(Tensor<float>({2, 84})), tape.constant(Tensor<float>({2, 80}))),
                 ShapeError);
    EXPECT_THROW(m.dcd.pair_forward(tape, tape.constant(Tensor<float>({2, 80})), tape.constant(Tensor<float>({2, 80}))),
                 ShapeError);
}

TEST(Vector, WidthsFeedHeadAndDiscriminator) {
    auto m = init_vector_models<float>(30, 20, 12, 5, 0);
    EXPECT_EQ(m.width(), 12u);
    EXPECT_EQ(m.dcd.input_width(), 24u);
    EXPECT_EQ(m.h.classes(), 5u);
    Tape<float> tape(false);
    auto z = m.embed(tape, tape.constant(Tensor<float>({4, 30})));
    EXPECT_EQ(z.shape(), (Shape{4, 12}));
    EXPECT_EQ(m.dcd.pair_forward(tape, z, z).shape(), (Shape{4, 4}));
    EXPECT_THROW(m.embed(tape, tape.constant(Tensor<float>({4, 31}))), ShapeError);
}

TEST(Gradient, EndToEndMatchesFiniteDifferences) {
    auto m = init_models<double>(21);
    const auto x = random_images(4, 22);
    const std::vector<int> y{3, 7, 0, 3};
    // Non-zero biases so every unit is exercised away from the origin.
    Rng rng(23);
    for (auto* p : m.all_parameters())
        if (p->value.rank() == 1)
            for (auto& v : p->value.storage()) v = uniform_real(rng, -0.05, 0.05);
    auto loss = [&](bool backward) {
        Tape<double> tape(backward);
        auto l = ops::softmax_cross_entropy(m.h.logits(tape, m.embed(tape, tape.constant(x))), y);
        if (backward) tape.backward(l);
        return l.value().item();
    };
    loss(true);
    auto params = m.g_parameters();
    for (auto* p : m.h_parameters()) params.push_back(p);
    const auto r = oracle::check_parameters([&] { return loss(false); }, params, 1e-6);
    EXPECT_EQ(r.checked, parameter_count(params));
    EXPECT_LT(r.relative_error, 1e-5);
}

TEST(Freeze, GuardRestoresFlags) {
    auto m = init_models<float>(0);
    {
        FreezeGuard<float> guard(m.g_parameters(), false);
        for (auto* p : m.g_parameters()) EXPECT_FALSE(p->trainable);
    }
    for (auto* p : m.g_parameters()) EXPECT_TRUE(p->trainable);
}

TEST(Checkpoint, RoundTripPreservesParameters) {
    auto m = init_models<float>(31, {Activation::tanh, false});
    Rng rng(2);
    for (auto* p : m.all_parameters())
        for (auto& v : p->value.storage()) v = static_cast<float>(uniform_real(rng, -1, 1));
    const auto bytes = checkpoint::encode(m, "dcd");
    checkpoint::Manifest manifest;
    auto back = checkpoint::decode<float>(bytes, &manifest);
    EXPECT_EQ(flatten(back.all_parameters()), flatten(m.all_parameters()));
    EXPECT_EQ(manifest.arch, "lenet16");
    EXPECT_EQ(manifest.stage, "dcd");
    EXPECT_EQ(manifest.seed, 31u);
    EXPECT_EQ(back.options.activation, Activation::tanh);
    EXPECT_FALSE(back.options.embed_final_activation);
}

TEST(Checkpoint, VectorModelsRoundTrip) {
    auto m = init_vector_models<float>(10, 8, 6, 3, 4);
    auto back = checkpoint::decode<float>(checkpoint::encode(m, "pretrain"));
    EXPECT_EQ(back.arch_id(), "mlp");
    EXPECT_EQ(back.width(), 6u);
    EXPECT_EQ(flatten(back.all_parameters()), flatten(m.all_parameters()));
}

TEST(Checkpoint, CorruptionRejected) {
    auto m = init_models<float>(1);
    auto bytes = checkpoint::encode(m, "pretrain");
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(checkpoint::decode<float>(bad), checkpoint::CheckpointError);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(checkpoint::decode<float>(trailing), checkpoint::CheckpointError);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_THROW(checkpoint::decode<float>(truncated), checkpoint::CheckpointError);
}
