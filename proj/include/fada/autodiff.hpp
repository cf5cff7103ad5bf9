#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fada/tensor.hpp"

namespace fada {

// A trainable weight. The gradient always has the shape of the value.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(T(0)); }
    std::size_t size() const { return value.size(); }
};

template <typename T>
class Tape;

// Handle to a tensor recorded on a tape.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Tensor<T>& value() const { return tape->value(id); }
    const Shape& shape() const { return value().shape(); }
    std::size_t dim(std::size_t i) const { return value().dim(i); }
};

class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Records executed operations so that a reverse pass can propagate
// gradients. Nodes only carry a gradient when some tracked parameter feeds
// them; frozen parameters enter as constants.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t out)>;

    Tape() = default;
    // A tape with gradients disabled treats every parameter as frozen.
    explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr, nullptr); }

    // Registers a parameter leaf. Each parameter maps to a single node per
    // tape, so shared weights accumulate gradient from every use.
    Var<T> param(Parameter<T>& p) {
        if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
        const bool track = grad_enabled_ && p.trainable;
        Var<T> v = push(p.value, track, nullptr, track ? &p : nullptr);
        param_nodes_.emplace(&p, v.id);
        return v;
    }

    // Records an op output. `backward(tape, out)` reads grad(out) and
    // accumulates into the grads of its inputs; it is dropped if no input needs a gradient.
    Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
        bool needs = false;
        for (const auto& in : inputs) {
            check_owner(in);
            needs = needs || nodes_[in.id].requires_grad;
        }
        return push(std::move(value), needs, needs ? std::move(backward) : nullptr, nullptr);
    }

    const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(const Var<T>& v) const { return nodes_.at(v.id).requires_grad; }

    // Gradient buffer of a node; valid only during or after backward().
    Tensor<T>& grad(std::size_t id) { return nodes_[id].grad; }
    const Tensor<T>& grad(const Var<T>& v) const { return nodes_.at(v.id).grad; }

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Reverse pass from a scalar loss. Tracked parameters receive
    // d(loss)/d(value) in Parameter::grad (overwritten, zero if unreachable).
    void backward(const Var<T>& loss) {
        check_owner(loss);
        if (consumed_) throw TapeError("backward already ran on this tape; record a new tape");
        const auto& lv = nodes_[loss.id].value;
        if (lv.size() != 1) {
            throw TapeError("backward requires a scalar loss, got shape " + shape_str(lv.shape()));
        }
        consumed_ = true;
        for (auto& n : nodes_) {
            if (n.requires_grad) n.grad = Tensor<T>(n.value.shape());
        }
        if (nodes_[loss.id].requires_grad) {
            nodes_[loss.id].grad[0] = T(1);
            for (std::size_t i = loss.id + 1; i-- > 0;) {
                if (nodes_[i].backward) nodes_[i].backward(*this, i);
            }
        }
        for (auto& n : nodes_) {
            if (n.param) n.param->grad = n.grad;
        }
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter<T>* param = nullptr;
    };

    Var<T> push(Tensor<T> value, bool requires_grad, BackwardFn backward, Parameter<T>* param) {
        if (consumed_) throw TapeError("cannot record onto a tape after backward()");
        nodes_.push_back(Node{std::move(value), {}, requires_grad, std::move(backward), param});
        return {this, nodes_.size() - 1};
    }

    void check_owner(const Var<T>& v) const {
        if (v.tape != this || v.id >= nodes_.size()) throw TapeError("variable does not belong to this tape");
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
    bool consumed_ = false;
    bool grad_enabled_ = true;
};

}  // namespace fada
