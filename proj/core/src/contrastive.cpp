#include "cellcontrast/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cellcontrast/nd/ops.hpp"

namespace cellcontrast::contrastive {

namespace {

void check_temperature(double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw std::invalid_argument("temperature must be positive and finite, got " + std::to_string(temperature));
    }
}

std::span<const double> row(const nd::Tensor<double>& z, std::size_t i) {
    const auto d = z.shape()[1];
    return z.data().subspan(i * d, d);
}

void check_batch(const nd::Tensor<double>& z) {
    if (z.rank() != 2) {
        throw std::invalid_argument("batch loss: expected a (2N x d) matrix, got " + nd::shape_string(z.shape()));
    }
    if (z.shape()[0] == 0 || z.shape()[0] % 2 != 0) {
        throw std::invalid_argument("batch loss: needs an even, nonzero number of rows, got " + std::to_string(z.shape()[0]));
    }
}

}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: dimension mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw std::domain_error("cosine similarity is undefined for a zero vector");
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

nd::Tensor<double> similarity_matrix(const nd::Tensor<double>& z) {
    if (z.rank() != 2) {
        throw std::invalid_argument("similarity_matrix: expected a matrix, got " + nd::shape_string(z.shape()));
    }
    const auto n = z.shape()[0];
    nd::Tensor<double> s({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        s.at(i, i) = cosine_similarity(row(z, i), row(z, i));
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = cosine_similarity(row(z, i), row(z, j));
            s.at(i, j) = v;
            s.at(j, i) = v;
        }
    }
    return s;
}

double pair_loss(std::span<const double> anchor, std::span<const double> positive,
                 const std::vector<std::span<const double>>& negatives, double temperature) {
    check_temperature(temperature);
    const double pos = cosine_similarity(anchor, positive) / temperature;
    if (negatives.empty()) {
        return 0.0;
    }
    std::vector<double> logits;
    logits.reserve(negatives.size());
    double top = pos;
    for (const auto& n : negatives) {
        logits.push_back(cosine_similarity(anchor, n) / temperature);
        top = std::max(top, logits.back());
    }
    double denom = std::exp(pos - top);
    for (double l : logits) {
        denom += std::exp(l - top);
    }
    return std::max(0.0, std::log(denom) - (pos - top));
}

std::vector<std::size_t> half_split_pairing(std::size_t rows) {
    if (rows % 2 != 0) {
        throw std::invalid_argument("pairing needs an even number of rows, got " + std::to_string(rows));
    }
    const auto n = rows / 2;
    std::vector<std::size_t> partner(rows);
    for (std::size_t k = 0; k < n; ++k) {
        partner[k] = k + n;
        partner[k + n] = k;
    }
    return partner;
}

double batch_loss(const nd::Tensor<double>& z, std::span<const std::size_t> partner, double temperature) {
    check_batch(z);
    check_temperature(temperature);
    const auto rows = z.shape()[0];
    if (partner.size() != rows) {
        throw std::invalid_argument("batch loss: pairing has " + std::to_string(partner.size()) + " entries for " + std::to_string(rows) + " rows");
    }
    for (std::size_t i = 0; i < rows; ++i) {
        if (partner[i] >= rows || partner[i] == i || partner[partner[i]] != i) {
            throw std::invalid_argument("batch loss: pairing is not a fixed-point-free involution at row " + std::to_string(i));
        }
    }
    double total = 0.0;
    std::vector<std::span<const double>> negatives;
    for (std::size_t i = 0; i < rows; ++i) {
        negatives.clear();
        for (std::size_t j = 0; j < rows; ++j) {
            if (j != i && j != partner[i]) {
                negatives.push_back(row(z, j));
            }
        }
        total += pair_loss(row(z, i), row(z, partner[i]), negatives, temperature);
    }
    return total / static_cast<double>(rows);
}

double batch_loss(const nd::Tensor<double>& z, double temperature) {
    check_batch(z);
    const auto partner = half_split_pairing(z.shape()[0]);
    return batch_loss(z, partner, temperature);
}

template<typename T>
nd::Var<T> ntxent_loss(nd::Var<T> z, double temperature) {
    check_temperature(temperature);
    const auto& s = z.shape();
    if (s.size() != 2 || s[0] == 0 || s[0] % 2 != 0) {
        throw std::invalid_argument("ntxent_loss: expected a (2N x d) batch, got " + nd::shape_string(s));
    }
    auto& tape = *z.tape;
    const auto rows = s[0];
    if (rows == 2) {
        // No negatives: the loss is 0 by convention, still attached to z so gradients are defined.
        return nd::scale(nd::sum(z), T(0));
    }

    auto mask_t = nd::Tensor<T>::full({rows, rows}, T(1));
    for (std::size_t i = 0; i < rows; ++i) {
        mask_t.at(i, i) = T(0);
    }
    const auto partner = half_split_pairing(rows);

    auto zn = nd::l2_normalize_rows(z);
    auto logits = nd::scale(nd::matmul(zn, nd::transpose(zn)), static_cast<T>(1.0 / temperature));
    auto mask = tape.constant(mask_t);
    auto shift = tape.constant(nd::masked_row_max(logits.value(), mask_t));
    auto shifted = nd::sub_per_row(logits, shift);
    // Zero the diagonal before exponentiating so self-similarity cannot overflow.
    auto terms = nd::mul(nd::exp(nd::mul(shifted, mask)), mask);
    auto log_denominator = nd::log(nd::sum_rows(terms));

    std::vector<std::size_t> positive_index(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        positive_index[i] = i * rows + partner[i];
    }
    auto positive = nd::gather(shifted, std::move(positive_index));
    return nd::mean(nd::sub(log_denominator, positive));
}

template nd::Var<float> ntxent_loss(nd::Var<float>, double);
template nd::Var<double> ntxent_loss(nd::Var<double>, double);

}
