#ifndef CELLCONTRAST_CONTRASTIVE_HPP
#define CELLCONTRAST_CONTRASTIVE_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "nd/tape.hpp"
#include "nd/tensor.hpp"

/**
 * @file contrastive.hpp
 *
 * Normalized temperature-scaled cross-entropy (NT-Xent) over a batch of 2N
 * latent vectors z, where every row has exactly one positive partner and the
 * other 2(N - 1) rows act as its negatives.
 *
 * Two routes compute the same quantity: `pair_loss`/`batch_loss` evaluate the
 * per-anchor quotient directly from cosine similarities, while `ntxent_loss`
 * builds the loss on a tape from L2-normalized rows so it can be differentiated.
 */

namespace cellcontrast::contrastive {

/// z_a . z_b / (|z_a| |z_b|). Throws `std::domain_error` on a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// (2N x 2N) matrix of pairwise cosine similarities between the rows of z.
nd::Tensor<double> similarity_matrix(const nd::Tensor<double>& z);

/**
 * -log(e^{s(a,p)/t} / (e^{s(a,p)/t} + sum_n e^{s(a,n)/t})), evaluated with the
 * maximum logit subtracted first. Exactly 0 when `negatives` is empty.
 */
double pair_loss(std::span<const double> anchor, std::span<const double> positive,
                 const std::vector<std::span<const double>>& negatives, double temperature);

/// The standard pairing of a 2N batch: row k and row k + N are views of the same image.
std::vector<std::size_t> half_split_pairing(std::size_t rows);

/**
 * Mean of `pair_loss` over all 2N anchors, each using every row except itself
 * and its partner as negatives. `partner` must be a fixed-point-free involution.
 */
double batch_loss(const nd::Tensor<double>& z, std::span<const std::size_t> partner, double temperature);

double batch_loss(const nd::Tensor<double>& z, double temperature);

/// Differentiable batch loss over a (2N x d) tape value with the half-split pairing.
template<typename T>
nd::Var<T> ntxent_loss(nd::Var<T> z, double temperature);

}

#endif
