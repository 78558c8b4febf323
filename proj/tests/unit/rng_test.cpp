#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cellcontrast/rng.hpp"

using cellcontrast::Stream;
using cellcontrast::derive_key;

TEST(Rng, SameKeySameSequence) {
    Stream a(derive_key({1, 2, 3}));
    Stream b(derive_key({1, 2, 3}));
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a.next_u64(), b.next_u64());
    }
}

TEST(Rng, KeyDependsOnEveryPartAndOrder) {
    std::set<std::uint64_t> keys{derive_key({1, 2, 3}), derive_key({1, 2, 4}), derive_key({3, 2, 1}), derive_key({1, 2}),
                                 derive_key({0, 2, 3})};
    EXPECT_EQ(keys.size(), 5u);
}

TEST(Rng, UniformStaysInUnitInterval) {
    Stream s(derive_key({7}));
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = s.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 20000, 0.5, 0.01);
}

TEST(Rng, BelowCoversRangeEvenly) {
    Stream s(derive_key({9}));
    std::array<int, 4> counts{};
    for (int i = 0; i < 40000; ++i) {
        const auto k = s.below(4);
        ASSERT_LT(k, 4u);
        ++counts[k];
    }
    for (auto c : counts) {
        EXPECT_NEAR(c, 10000, 400);
    }
}

TEST(Rng, NormalHasUnitMoments) {
    Stream s(derive_key({11}));
    double m1 = 0.0, m2 = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        m1 += x;
        m2 += x * x;
    }
    EXPECT_NEAR(m1 / n, 0.0, 0.02);
    EXPECT_NEAR(m2 / n, 1.0, 0.03);
}

TEST(Rng, CounterAdvancesPerDraw) {
    Stream s(1);
    EXPECT_EQ(s.counter(), 0u);
    (void)s.next_u64();
    (void)s.next_u64();
    EXPECT_EQ(s.counter(), 2u);
}
