#include <benchmark/benchmark.h>

#include <random>

#include "cellcontrast/nd/ops.hpp"

namespace nd = cellcontrast::nd;

namespace {

nd::Tensor<float> random_tensor(nd::Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.f, 1.f);
    std::vector<float> v(nd::shape_size(shape));
    for (auto& x : v) {
        x = u(rng);
    }
    return nd::Tensor<float>(std::move(shape), std::move(v));
}

void BM_Conv2dForward(benchmark::State& state) {
    const auto size = static_cast<std::size_t>(state.range(0));
    const auto x = random_tensor({8, 16, size, size}, 1);
    const auto w = random_tensor({16, 16, 3, 3}, 2);
    for (auto _ : state) {
        nd::Tape<float> tape;
        benchmark::DoNotOptimize(nd::conv2d(tape.constant(x), tape.constant(w)).value().data().data());
    }
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32);

void BM_Conv2dBackward(benchmark::State& state) {
    const auto size = static_cast<std::size_t>(state.range(0));
    const auto x = random_tensor({8, 16, size, size}, 1);
    const auto w = random_tensor({16, 16, 3, 3}, 2);
    for (auto _ : state) {
        nd::Tape<float> tape;
        auto wv = tape.leaf(w, true);
        auto loss = nd::sum(nd::conv2d(tape.leaf(x, true), wv));
        benchmark::DoNotOptimize(tape.backward(loss));
    }
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(32);

}
