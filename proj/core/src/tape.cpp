#include "cellcontrast/nd/tape.hpp"

#include <stdexcept>

#include "cellcontrast/errors.hpp"

namespace cellcontrast::nd {

template<typename T>
const Tensor<T>& Gradients<T>::operator[](const Var<T>& v) const {
    const auto& g = grads_.at(v.id);
    if (!g) {
        throw std::invalid_argument("gradient requested for a value that does not require one");
    }
    return *g;
}

template<typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
    if (check_finite_ && !value.all_finite()) {
        throw NumericError("leaf: non-finite value of shape " + shape_string(value.shape()));
    }
    nodes_.push_back(Node{"leaf", std::move(value), {}, {}, requires_grad});
    return Var<T>{this, nodes_.size() - 1};
}

template<typename T>
Var<T> Tape<T>::record(const char* op, Tensor<T> value, std::vector<std::size_t> inputs, BackwardRule rule) {
    if (check_finite_ && !value.all_finite()) {
        throw NumericError(std::string(op) + ": produced a non-finite value");
    }
    bool needs = false;
    for (auto i : inputs) {
        if (i >= nodes_.size()) {
            throw std::logic_error(std::string(op) + ": input refers to a later tape node");
        }
        needs = needs || nodes_[i].requires_grad;
    }
    if (!needs) {
        rule = nullptr;
    }
    nodes_.push_back(Node{op, std::move(value), std::move(inputs), std::move(rule), needs});
    return Var<T>{this, nodes_.size() - 1};
}

template<typename T>
Gradients<T> Tape<T>::backward(const Var<T>& loss) const {
    if (loss.tape != this) {
        throw std::invalid_argument("backward: loss belongs to a different tape");
    }
    const auto& lv = nodes_.at(loss.id).value;
    if (lv.size() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_string(lv.shape()));
    }

    std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
    grads[loss.id] = Tensor<T>::full(lv.shape(), T(1));

    std::vector<Tensor<T>*> slots;
    for (std::size_t k = loss.id + 1; k-- > 0;) {
        const auto& node = nodes_[k];
        if (!node.rule || !grads[k]) {
            continue;
        }
        slots.assign(node.inputs.size(), nullptr);
        for (std::size_t j = 0; j < node.inputs.size(); ++j) {
            auto in = node.inputs[j];
            if (!nodes_[in].requires_grad) {
                continue;
            }
            if (!grads[in]) {
                grads[in] = Tensor<T>::zeros(nodes_[in].value.shape());
            }
            slots[j] = &*grads[in];
        }
        node.rule(*this, k, *grads[k], slots);
    }

    // Values the loss never touched still get explicit zeros.
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        if (nodes_[k].requires_grad && !grads[k]) {
            grads[k] = Tensor<T>::zeros(nodes_[k].value.shape());
        }
    }
    return Gradients<T>(std::move(grads));
}

template class Tape<float>;
template class Tape<double>;
template class Gradients<float>;
template class Gradients<double>;

}
