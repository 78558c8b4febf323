#ifndef CELLCONTRAST_ND_OPS_HPP
#define CELLCONTRAST_ND_OPS_HPP

#include <cstddef>
#include <vector>

#include "tape.hpp"
#include "tensor.hpp"

/**
 * @file ops.hpp
 *
 * Differentiable operations over tape variables. All shape checks throw
 * `std::invalid_argument` naming the op and the offending shapes.
 */

namespace cellcontrast::nd {

template<typename T> Var<T> add(Var<T> a, Var<T> b);
template<typename T> Var<T> sub(Var<T> a, Var<T> b);
template<typename T> Var<T> mul(Var<T> a, Var<T> b);
template<typename T> Var<T> scale(Var<T> a, T factor);

/// (M x K) * (K x N).
template<typename T> Var<T> matmul(Var<T> a, Var<T> b);
template<typename T> Var<T> transpose(Var<T> a);

/// Dense layer: x (M x K) times weight (K x N) plus bias (N).
template<typename T> Var<T> affine(Var<T> x, Var<T> weight, Var<T> bias);

/// Subtracts `c[i]` from every entry of row i of a (M x N) matrix.
template<typename T> Var<T> sub_per_row(Var<T> a, Var<T> c);

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 1;
};

/// x (B x C x H x W), weight (O x C x K x K), zero padding.
template<typename T> Var<T> conv2d(Var<T> x, Var<T> weight, Conv2dOptions opts = {});

/// (B x C x H x W) -> (B x C).
template<typename T> Var<T> global_avg_pool(Var<T> x);

/// Per-sample group normalization with per-channel affine parameters.
template<typename T> Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, std::size_t groups, T eps = T(1e-5));

template<typename T> Var<T> relu(Var<T> a);
template<typename T> Var<T> exp(Var<T> a);

/// Natural log; every input entry must be positive.
template<typename T> Var<T> log(Var<T> a);

/// Divides each row of a (M x N) matrix by its Euclidean norm. Zero rows are an error.
template<typename T> Var<T> l2_normalize_rows(Var<T> a);

template<typename T> Var<T> sum(Var<T> a);
template<typename T> Var<T> mean(Var<T> a);

/// (M x N) -> (M).
template<typename T> Var<T> sum_rows(Var<T> a);

/// Concatenation along the leading axis.
template<typename T> Var<T> concat(const std::vector<Var<T>>& parts);

/// Flat gather: out[k] = a.data()[indices[k]].
template<typename T> Var<T> gather(Var<T> a, std::vector<std::size_t> indices);

template<typename T> Var<T> reshape(Var<T> a, Shape shape);

/// Row maxima of a (M x N) matrix over the entries where mask is nonzero. Not differentiable.
template<typename T> Tensor<T> masked_row_max(const Tensor<T>& a, const Tensor<T>& mask);

}

#endif
