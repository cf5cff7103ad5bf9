#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fada/autodiff.hpp"
#include "fada/image.hpp"
#include "fada/ops.hpp"
#include "fada/random.hpp"

namespace fada {

enum class Activation { relu, tanh };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

template <typename T>
Var<T> activate(const Var<T>& x, Activation a) {
    return a == Activation::relu ? ops::relu(x) : ops::tanh(x);
}

struct ArchitectureOptions {
    Activation activation = Activation::relu;
    // Apply the activation to the last embedding layer as well.
    bool embed_final_activation = true;
};

namespace detail {

// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> fan_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    Tensor<T> t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.storage()) v = static_cast<T>(uniform_real(rng, -bound, bound));
    return t;
}

}  // namespace detail

template <typename T>
struct DenseLayer {
    Parameter<T> weight;
    Parameter<T> bias;

    DenseLayer() = default;
    DenseLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
        : weight(name + ".w", detail::fan_uniform<T>({in, out}, in, out, rng)), bias(name + ".b", Tensor<T>({out})) {}

    std::size_t in() const { return weight.value.dim(0); }
    std::size_t out() const { return weight.value.dim(1); }

    Var<T> operator()(Tape<T>& tape, const Var<T>& x) { return ops::linear(x, tape.param(weight), tape.param(bias)); }
};

template <typename T>
struct ConvLayer {
    Parameter<T> kernel;
    Parameter<T> bias;

    ConvLayer() = default;
    ConvLayer(const std::string& name, std::size_t filters, std::size_t channels, std::size_t side, Rng& rng)
        : kernel(name + ".w", detail::fan_uniform<T>({filters, channels, side, side}, channels * side * side,
                                                     filters * side * side, rng)),
          bias(name + ".b", Tensor<T>({filters})) {}

    Var<T> operator()(Tape<T>& tape, const Var<T>& x) { return ops::conv2d(x, tape.param(kernel), tape.param(bias)); }
};

// g: conv(6@5x5) -> act -> pool -> conv(16@5x5) -> act -> pool -> fc 120 ->
// act -> fc 84 -> act. On 16x16 inputs the spatial path is 16,12,6,2,1.
template <typename T>
class EmbeddingNet {
public:
    static constexpr std::size_t kKernel = 5;
    static constexpr std::size_t kConv1 = 6, kConv2 = 16, kHidden = 120, kWidth = 84;

    EmbeddingNet() = default;
    EmbeddingNet(std::uint64_t seed, ArchitectureOptions opts = {}) : opts_(opts) {
        const std::size_t after1 = (image::kSide - kKernel + 1) / 2;  // 6
        const std::size_t after2 = (after1 - kKernel + 1) / 2;        // 1
        if (after1 != 6 || after2 != 1) throw std::logic_error("embedding architecture arithmetic mismatch");
        flat_ = kConv2 * after2 * after2;
        Rng rng = make_rng(seed, 0xe1);
        conv1 = ConvLayer<T>("g.conv1", kConv1, 1, kKernel, rng);
        conv2 = ConvLayer<T>("g.conv2", kConv2, kConv1, kKernel, rng);
        fc1 = DenseLayer<T>("g.fc1", flat_, kHidden, rng);
        fc2 = DenseLayer<T>("g.fc2", kHidden, kWidth, rng);
    }

    static const char* arch_id() { return "lenet16"; }
    std::size_t output_width() const { return kWidth; }
    Shape input_shape() const { return {1, image::kSide, image::kSide}; }

    Var<T> forward(Tape<T>& tape, const Var<T>& x) {
        const Shape s = x.shape();
        if (s.size() != 4 || s[1] != 1 || s[2] != image::kSide || s[3] != image::kSide) {
            throw ShapeError("embed: expected [Bx1x16x16], got " + shape_str(s));
        }
        auto h = ops::maxpool2(activate(conv1(tape, x), opts_.activation));
        h = ops::maxpool2(activate(conv2(tape, h), opts_.activation));
        h = ops::reshape(h, {s[0], flat_});
        h = activate(fc1(tape, h), opts_.activation);
        h = fc2(tape, h);
        return opts_.embed_final_activation ? activate(h, opts_.activation) : h;
    }

    std::vector<Parameter<T>*> parameters() {
        return {&conv1.kernel, &conv1.bias, &conv2.kernel, &conv2.bias, &fc1.weight, &fc1.bias, &fc2.weight, &fc2.bias};
    }

    ConvLayer<T> conv1, conv2;
    DenseLayer<T> fc1, fc2;

private:
    ArchitectureOptions opts_;
    std::size_t flat_ = 16;
};

// Two dense layers d -> h1 -> h2 for precomputed feature vectors.
template <typename T>
class VectorEmbeddingNet {
public:
    VectorEmbeddingNet() = default;
    VectorEmbeddingNet(std::size_t input_dim, std::size_t hidden, std::size_t width, std::uint64_t seed,
                       ArchitectureOptions opts = {})
        : opts_(opts), input_dim_(input_dim) {
        Rng rng = make_rng(seed, 0xe2);
        fc1 = DenseLayer<T>("g.fc1", input_dim, hidden, rng);
        fc2 = DenseLayer<T>("g.fc2", hidden, width, rng);
    }

    static const char* arch_id() { return "mlp"; }
    std::size_t output_width() const { return fc2.out(); }
    Shape input_shape() const { return {input_dim_}; }

    Var<T> forward(Tape<T>& tape, const Var<T>& x) {
        if (x.shape().size() != 2 || x.shape()[1] != input_dim_) {
            throw ShapeError("embed: expected [Bx" + std::to_string(input_dim_) + "], got " + shape_str(x.shape()));
        }
        auto h = activate(fc1(tape, x), opts_.activation);
        h = fc2(tape, h);
        return opts_.embed_final_activation ? activate(h, opts_.activation) : h;
    }

    std::vector<Parameter<T>*> parameters() { return {&fc1.weight, &fc1.bias, &fc2.weight, &fc2.bias}; }

    DenseLayer<T> fc1, fc2;

private:
    ArchitectureOptions opts_;
    std::size_t input_dim_ = 0;
};

// h: one dense layer to class logits; predict() applies the softmax.
template <typename T>
class PredictorHead {
public:
    PredictorHead() = default;
    PredictorHead(std::size_t width, std::size_t classes, std::uint64_t seed) {
        Rng rng = make_rng(seed, 0xb1);
        fc = DenseLayer<T>("h.fc", width, classes, rng);
    }

    std::size_t classes() const { return fc.out(); }

    Var<T> logits(Tape<T>& tape, const Var<T>& z) {
        if (z.shape().size() != 2 || z.shape()[1] != fc.in()) {
            throw ShapeError("predict: expected [Bx" + std::to_string(fc.in()) + "], got " + shape_str(z.shape()));
        }
        return fc(tape, z);
    }
    Var<T> predict(Tape<T>& tape, const Var<T>& z) { return ops::softmax(logits(tape, z)); }

    std::vector<Parameter<T>*> parameters() { return {&fc.weight, &fc.bias}; }

    DenseLayer<T> fc;
};

// Two-layer classifier over embeddings: in -> hidden -> act -> outputs.
// The domain-class discriminator reads concat(za, zb) with 4 outputs; the
// binary domain discriminator reads a single embedding with 2 outputs.
template <typename T>
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(const std::string& name, std::size_t in, std::size_t hidden, std::size_t outputs, std::uint64_t seed,
                  Activation act = Activation::relu)
        : act_(act) {
        Rng rng = make_rng(seed, name == "dcd" ? 0xdcd : 0xb17);
        fc1 = DenseLayer<T>(name + ".fc1", in, hidden, rng);
        fc2 = DenseLayer<T>(name + ".fc2", hidden, outputs, rng);
    }

    std::size_t input_width() const { return fc1.in(); }
    std::size_t outputs() const { return fc2.out(); }

    Var<T> logits(Tape<T>& tape, const Var<T>& x) {
        if (x.shape().size() != 2 || x.shape()[1] != fc1.in()) {
            throw ShapeError("discriminator: expected [Bx" + std::to_string(fc1.in()) + "], got " +
                             shape_str(x.shape()));
        }
        return fc2(tape, activate(fc1(tape, x), act_));
    }

    // Pair form: logits of concat(za, zb).
    Var<T> pair_logits(Tape<T>& tape, const Var<T>& za, const Var<T>& zb) {
        if (za.shape() != zb.shape() || za.shape().size() != 2 || 2 * za.shape()[1] != fc1.in()) {
            throw ShapeError("dcd: expected two [Bx" + std::to_string(fc1.in() / 2) + "] embeddings, got " +
                             shape_str(za.shape()) + " and " + shape_str(zb.shape()));
        }
        return logits(tape, ops::concat(za, zb));
    }

    Var<T> pair_forward(Tape<T>& tape, const Var<T>& za, const Var<T>& zb) {
        return ops::softmax(pair_logits(tape, za, zb));
    }

    std::vector<Parameter<T>*> parameters() { return {&fc1.weight, &fc1.bias, &fc2.weight, &fc2.bias}; }

    DenseLayer<T> fc1, fc2;

private:
    Activation act_ = Activation::relu;
};

inline constexpr std::size_t kDcdHidden = 64;

// Everything trained by one run: the shared embedding g, predictor h and
// the domain-class discriminator.
template <typename T>
struct ModelBundle {
    using Embedding = std::variant<EmbeddingNet<T>, VectorEmbeddingNet<T>>;

    Embedding g;
    PredictorHead<T> h;
    Discriminator<T> dcd;
    std::uint64_t seed = 0;
    ArchitectureOptions options;

    Var<T> embed(Tape<T>& tape, const Var<T>& x) {
        return std::visit([&](auto& net) { return net.forward(tape, x); }, g);
    }

    std::size_t width() const {
        return std::visit([](const auto& net) { return net.output_width(); }, g);
    }

    std::string arch_id() const {
        return std::visit([](const auto& net) { return std::string(net.arch_id()); }, g);
    }

    std::vector<Parameter<T>*> g_parameters() {
        return std::visit([](auto& net) { return net.parameters(); }, g);
    }
    std::vector<Parameter<T>*> h_parameters() { return h.parameters(); }
    std::vector<Parameter<T>*> dcd_parameters() { return dcd.parameters(); }

    std::vector<Parameter<T>*> all_parameters() {
        auto out = g_parameters();
        for (auto* p : h_parameters()) out.push_back(p);
        for (auto* p : dcd_parameters()) out.push_back(p);
        return out;
    }
};

// LeNet-style digit models with fan-uniform weights and zero biases.
template <typename T>
ModelBundle<T> init_models(std::uint64_t seed, ArchitectureOptions opts = {}, std::size_t classes = 10) {
    ModelBundle<T> m;
    m.seed = seed;
    m.options = opts;
    m.g = EmbeddingNet<T>(derive_seed(seed, 1), opts);
    m.h = PredictorHead<T>(EmbeddingNet<T>::kWidth, classes, derive_seed(seed, 2));
    m.dcd = Discriminator<T>("dcd", 2 * EmbeddingNet<T>::kWidth, kDcdHidden, 4, derive_seed(seed, 3), opts.activation);
    return m;
}

template <typename T>
ModelBundle<T> init_vector_models(std::size_t input_dim, std::size_t hidden, std::size_t width, std::size_t classes,
                                  std::uint64_t seed, ArchitectureOptions opts = {}) {
    ModelBundle<T> m;
    m.seed = seed;
    m.options = opts;
    m.g = VectorEmbeddingNet<T>(input_dim, hidden, width, derive_seed(seed, 1), opts);
    m.h = PredictorHead<T>(width, classes, derive_seed(seed, 2));
    m.dcd = Discriminator<T>("dcd", 2 * width, kDcdHidden, 4, derive_seed(seed, 3), opts.activation);
    return m;
}

// Sets `trainable` on a parameter set for the guard's lifetime.
template <typename T>
class FreezeGuard {
public:
    FreezeGuard(std::vector<Parameter<T>*> params, bool trainable) : params_(std::move(params)) {
        for (auto* p : params_) {
            saved_.push_back(p->trainable);
            p->trainable = trainable;
        }
    }
    ~FreezeGuard() {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->trainable = saved_[i];
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    std::vector<Parameter<T>*> params_;
    std::vector<bool> saved_;
};

template <typename T>
std::size_t parameter_count(const std::vector<Parameter<T>*>& params) {
    std::size_t n = 0;
    for (auto* p : params) n += p->size();
    return n;
}

}  // namespace fada
