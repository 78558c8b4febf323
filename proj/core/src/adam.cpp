#include "cellcontrast/nd/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cellcontrast::nd {

template<typename T>
AdamState<T> make_adam_state(std::span<const Tensor<T>> params, AdamOptions options) {
    AdamState<T> state;
    state.options = options;
    for (const auto& p : params) {
        state.first_moment.push_back(Tensor<T>::zeros(p.shape()));
        state.second_moment.push_back(Tensor<T>::zeros(p.shape()));
    }
    return state;
}

template<typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() || params.size() != state.second_moment.size()) {
        throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
            " grads, " + std::to_string(state.first_moment.size()) + " moment slots");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& s = params[k].shape();
        if (grads[k].shape() != s || state.first_moment[k].shape() != s || state.second_moment[k].shape() != s) {
            throw std::invalid_argument("adam_step: parameter " + std::to_string(k) + " has shape " + shape_string(s) +
                " but gradient has " + shape_string(grads[k].shape()));
        }
    }

    const auto& o = state.options;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].data();
        auto g = grads[k].data();
        auto m = state.first_moment[k].data();
        auto v = state.second_moment[k].data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            double gi = g[i];
            if (!o.decoupled_weight_decay) {
                gi += o.weight_decay * p[i];
            }
            const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
            const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            double update = o.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + o.epsilon);
            if (o.decoupled_weight_decay) {
                update += o.learning_rate * o.weight_decay * p[i];
            }
            p[i] = static_cast<T>(p[i] - update);
        }
    }
}

template AdamState<float> make_adam_state(std::span<const Tensor<float>>, AdamOptions);
template AdamState<double> make_adam_state(std::span<const Tensor<double>>, AdamOptions);
template void adam_step(std::span<Tensor<float>>, std::span<const Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, std::span<const Tensor<double>>, AdamState<double>&);

}
