#ifndef CELLCONTRAST_ND_ADAM_HPP
#define CELLCONTRAST_ND_ADAM_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace cellcontrast::nd {

struct AdamOptions {
    double learning_rate = 3e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    /**
     * If false, weight decay is folded into the gradient (`grad += weight_decay * param`)
     * before the moment update, i.e. classic L2 regularization.
     * If true, the decay is applied directly to the parameter after the Adam step (AdamW).
     */
    bool decoupled_weight_decay = false;
};

template<typename T>
struct AdamState {
    AdamOptions options;
    std::vector<Tensor<T>> first_moment;
    std::vector<Tensor<T>> second_moment;
    std::uint64_t step = 0;
};

/// Fresh state with zeroed moments shaped like `params`.
template<typename T>
AdamState<T> make_adam_state(std::span<const Tensor<T>> params, AdamOptions options = {});

/**
 * One bias-corrected Adam update, in place. Throws `std::invalid_argument`
 * if `params`, `grads` and the moments in `state` are not aligned.
 */
template<typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state);

}

#endif
