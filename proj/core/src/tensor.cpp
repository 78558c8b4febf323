#include "cellcontrast/nd/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cellcontrast::nd {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            out << ',';
        }
        out << shape[i];
    }
    out << ']';
    return out.str();
}

template<typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw std::invalid_argument("tensor: shape " + shape_string(shape_) + " needs " +
            std::to_string(shape_size(shape_)) + " values, got " + std::to_string(data_.size()));
    }
}

template<typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    std::vector<T> data(shape_size(shape), value);
    return Tensor(std::move(shape), std::move(data));
}

template<typename T>
T Tensor<T>::item() const {
    if (data_.size() != 1) {
        throw std::invalid_argument("item: tensor of shape " + shape_string(shape_) + " is not a single value");
    }
    return data_[0];
}

template<typename T>
bool Tensor<T>::all_finite() const {
    for (auto x : data_) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

template<typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_string(shape_) + " as " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

template class Tensor<float>;
template class Tensor<double>;

}
