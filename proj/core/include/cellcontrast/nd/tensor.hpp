#ifndef CELLCONTRAST_ND_TENSOR_HPP
#define CELLCONTRAST_ND_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cellcontrast::nd {

using Shape = std::vector<std::size_t>;

/// Number of elements described by a shape; the empty shape is a scalar.
std::size_t shape_size(const Shape& shape);

std::string shape_string(const Shape& shape);

enum class Precision { f32, f64 };

/**
 * Dense row-major array of `T` (float or double).
 *
 * A tensor is a plain value: copying it copies the payload.
 * The length of the payload always equals the product of the shape.
 */
template<typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() : data_(1, T(0)) {}

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), T(0)) {}

    Tensor(Shape shape, std::vector<T> data);

    Tensor(Shape shape, std::initializer_list<T> data) : Tensor(std::move(shape), std::vector<T>(data)) {}

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value);

    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

    const Shape& shape() const { return shape_; }

    std::size_t rank() const { return shape_.size(); }

    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    std::size_t size() const { return data_.size(); }

    std::span<const T> data() const { return data_; }

    std::span<T> data() { return data_; }

    const std::vector<T>& vector() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }

    T operator[](std::size_t i) const { return data_[i]; }

    /// Element access for rank-2 tensors.
    T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

    T at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    /// Value of a single-element tensor.
    T item() const;

    bool all_finite() const;

    /// Same payload, new shape of equal size.
    Tensor reshaped(Shape shape) const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

/// Converts between precisions, rounding when narrowing.
template<typename To, typename From>
Tensor<To> cast(const Tensor<From>& input) {
    std::vector<To> out(input.data().begin(), input.data().end());
    return Tensor<To>(input.shape(), std::move(out));
}

}

#endif
