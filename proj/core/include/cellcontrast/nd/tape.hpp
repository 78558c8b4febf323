#ifndef CELLCONTRAST_ND_TAPE_HPP
#define CELLCONTRAST_ND_TAPE_HPP

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tensor.hpp"

namespace cellcontrast::nd {

template<typename T>
class Tape;

/// Handle to a value recorded on a tape.
template<typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
};

/// Gradients produced by one backward pass, indexed by tape position.
template<typename T>
class Gradients {
public:
    explicit Gradients(std::vector<std::optional<Tensor<T>>> grads) : grads_(std::move(grads)) {}

    /// Gradient of any value that requires one; zeros when the loss does not depend on it.
    const Tensor<T>& operator[](const Var<T>& v) const;

private:
    std::vector<std::optional<Tensor<T>>> grads_;
};

/**
 * Append-only record of operations for reverse-mode differentiation.
 *
 * Nodes are pushed in evaluation order, so every node's inputs precede it.
 * A node stores its value, the ids of its inputs and, if any input requires a
 * gradient, a rule that maps the output gradient to input gradients.
 * `backward()` walks the tape once in reverse.
 */
template<typename T>
class Tape {
public:
    /// Accumulates into the gradient buffers of the inputs (null entries need no gradient).
    /// `self` is the id of the node being differentiated, so rules can reuse its value.
    using BackwardRule = std::function<void(const Tape& tape, std::size_t self, const Tensor<T>& grad_out, std::span<Tensor<T>* const> grad_in)>;

    Tape() = default;

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> leaf(Tensor<T> value, bool requires_grad);

    Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

    /// Records an op result. `rule` is dropped when no input requires a gradient.
    Var<T> record(const char* op, Tensor<T> value, std::vector<std::size_t> inputs, BackwardRule rule);

    const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }

    /// The op name passed to `record`, or "leaf".
    std::string_view op(std::size_t id) const { return nodes_[id].op; }

    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

    std::size_t size() const { return nodes_.size(); }

    Gradients<T> backward(const Var<T>& loss) const;

    /// When enabled, every recorded value is checked for NaN/Inf.
    void set_check_finite(bool enabled) { check_finite_ = enabled; }

    bool check_finite() const { return check_finite_; }

private:
    struct Node {
        const char* op = "leaf";
        Tensor<T> value;
        std::vector<std::size_t> inputs;
        BackwardRule rule;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    bool check_finite_ = true;
};

template<typename T>
const Tensor<T>& Var<T>::value() const {
    return tape->value(id);
}

template<typename T>
bool Var<T>::requires_grad() const {
    return tape->requires_grad(id);
}

}

#endif
