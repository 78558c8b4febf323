#include <gtest/gtest.h>

#include <limits>

#include "cellcontrast/errors.hpp"
#include "cellcontrast/nd/ops.hpp"
#include "cellcontrast/nd/tape.hpp"

namespace nd = cellcontrast::nd;

TEST(Tape, SumOfSquaresGradientIsTwiceInput) {
    nd::Tape<double> tape;
    auto w = tape.leaf(nd::Tensor<double>({2}, {1.0, 2.0}), true);
    auto loss = nd::sum(nd::mul(w, w));
    const auto g = tape.backward(loss);
    EXPECT_EQ(g[w], (nd::Tensor<double>({2}, {2.0, 4.0})));
}

TEST(Tape, UnusedLeafGetsZeroGradient) {
    nd::Tape<double> tape;
    auto w = tape.leaf(nd::Tensor<double>({2}, {1.0, 2.0}), true);
    auto c = tape.leaf(nd::Tensor<double>({1}, {5.0}), true);
    auto loss = nd::sum(c);
    const auto g = tape.backward(loss);
    EXPECT_EQ(g[w], nd::Tensor<double>::zeros({2}));
    EXPECT_EQ(g[c], (nd::Tensor<double>({1}, {1.0})));
}

TEST(Tape, NonScalarLossIsRejected) {
    nd::Tape<double> tape;
    auto w = tape.leaf(nd::Tensor<double>({2}, {1.0, 2.0}), true);
    EXPECT_THROW((void)tape.backward(nd::mul(w, w)), std::invalid_argument);
}

TEST(Tape, ForeignLossIsRejected) {
    nd::Tape<double> a;
    nd::Tape<double> b;
    auto w = b.leaf(nd::Tensor<double>::scalar(1.0), true);
    EXPECT_THROW((void)a.backward(w), std::invalid_argument);
}

TEST(Tape, ConstantsRequireNoGradient) {
    nd::Tape<double> tape;
    auto c = tape.constant(nd::Tensor<double>({2}, {1.0, 2.0}));
    auto w = tape.leaf(nd::Tensor<double>({2}, {3.0, 4.0}), true);
    auto loss = nd::sum(nd::mul(c, w));
    const auto g = tape.backward(loss);
    EXPECT_EQ(g[w], (nd::Tensor<double>({2}, {1.0, 2.0})));
    EXPECT_THROW((void)g[c], std::invalid_argument);
    EXPECT_FALSE(nd::add(c, c).requires_grad());
}

TEST(Tape, InputsPrecedeEveryNode) {
    nd::Tape<double> tape;
    auto x = tape.leaf(nd::Tensor<double>({2, 2}, {1, 2, 3, 4}), true);
    auto y = nd::relu(nd::matmul(x, nd::transpose(x)));
    (void)nd::mean(nd::add(y, y));
    for (std::size_t k = 0; k < tape.size(); ++k) {
        for (auto in : tape.inputs(k)) {
            EXPECT_LT(in, k);
        }
    }
}

TEST(Tape, SharedSubexpressionAccumulatesOnce) {
    // loss = sum((x + x) * x) = 2 sum(x^2), so d/dx = 4x.
    nd::Tape<double> tape;
    auto x = tape.leaf(nd::Tensor<double>({3}, {1.0, -2.0, 0.5}), true);
    auto loss = nd::sum(nd::mul(nd::add(x, x), x));
    const auto g = tape.backward(loss);
    EXPECT_EQ(g[x], (nd::Tensor<double>({3}, {4.0, -8.0, 2.0})));
}

TEST(Tape, NonFiniteValuesAreAnError) {
    nd::Tape<double> tape;
    EXPECT_THROW(tape.leaf(nd::Tensor<double>({1}, {std::numeric_limits<double>::infinity()}), true),
                 cellcontrast::NumericError);
    auto x = tape.leaf(nd::Tensor<double>({1}, {1000.0}), true);
    EXPECT_THROW((void)nd::exp(x), cellcontrast::NumericError);
}

TEST(Tape, FiniteCheckCanBeDisabled) {
    nd::Tape<double> tape;
    tape.set_check_finite(false);
    auto x = tape.leaf(nd::Tensor<double>({1}, {1000.0}), true);
    EXPECT_FALSE(nd::exp(x).value().all_finite());
}
