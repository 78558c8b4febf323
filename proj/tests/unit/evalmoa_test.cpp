#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "cellcontrast/evalmoa.hpp"

namespace ev = cellcontrast::evalmoa;
namespace pr = cellcontrast::profiles;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out[i++] = x;
    }
    return out;
}

pr::TreatmentProfile profile(std::string compound, std::string conc, std::string moa, std::set<std::string> batches, VectorXd v) {
    return {std::move(compound), std::move(conc), std::move(moa), std::move(batches), 1, std::move(v)};
}

std::vector<pr::TreatmentProfile> hand_example(std::set<std::string> b12, std::set<std::string> b3) {
    return {profile("c1", "1", "A", b12, vec({1, 0})), profile("c1", "2", "A", b12, vec({0.9, 0.1})),
            profile("c2", "1", "A", b12, vec({0.8, 0.2})), profile("c3", "1", "B", b3, vec({0, 1}))};
}

// Brute-force NSC/NSCB accuracy computed directly from the definition.
std::optional<double> reference_accuracy(const std::vector<pr::TreatmentProfile>& ps, bool batch_rule) {
    std::size_t eligible = 0, correct = 0;
    for (const auto& q : ps) {
        const pr::TreatmentProfile* best = nullptr;
        double best_d = 0.0;
        for (const auto& c : ps) {
            if (c.compound == q.compound) {
                continue;
            }
            if (batch_rule && std::any_of(c.batches.begin(), c.batches.end(), [&](const auto& b) { return q.batches.count(b) > 0; })) {
                continue;
            }
            const double d = 1.0 - q.vector.dot(c.vector) / (q.vector.norm() * c.vector.norm());
            if (best == nullptr || d < best_d || (d == best_d && c.key() < best->key())) {
                best = &c;
                best_d = d;
            }
        }
        if (best != nullptr) {
            ++eligible;
            correct += best->moa == q.moa ? 1 : 0;
        }
    }
    if (eligible == 0) {
        return std::nullopt;
    }
    return static_cast<double>(correct) / static_cast<double>(eligible);
}

std::vector<pr::TreatmentProfile> random_instance(std::mt19937_64& rng) {
    const std::size_t n = 2 + rng() % 49;
    const std::size_t n_compounds = 2 + rng() % 10;
    const std::size_t n_batches = 1 + rng() % 5;
    const std::size_t dim = 1 + rng() % 6;
    const bool coarse = rng() % 2 == 0;
    std::uniform_int_distribution<int> small(-2, 2);
    std::normal_distribution<double> g;
    std::map<pr::TreatmentKey, pr::TreatmentProfile> by_key;
    std::map<std::string, std::string> moa_of;
    for (std::size_t c = 0; c < n_compounds; ++c) {
        moa_of["c" + std::to_string(c)] = "M" + std::to_string(rng() % 4);
    }
    // The first two treatments use distinct compounds so every instance is valid.
    for (std::size_t i = 0; by_key.size() < n && i < 10 * n; ++i) {
        const std::string compound = "c" + std::to_string(i < 2 ? i : rng() % n_compounds);
        const std::string conc = std::to_string(rng() % 4) + "uM";
        std::set<std::string> batches;
        const std::size_t nb = 1 + rng() % 2;
        for (std::size_t b = 0; b < nb; ++b) {
            batches.insert("b" + std::to_string(rng() % n_batches));
        }
        VectorXd v(static_cast<Eigen::Index>(dim));
        do {
            for (auto& x : v) {
                // Coarse integer coordinates make exact distance ties frequent.
                x = coarse ? small(rng) : g(rng);
            }
        } while (v.norm() == 0.0);
        by_key.emplace(pr::TreatmentKey{compound, conc}, profile(compound, conc, moa_of[compound], batches, v));
    }
    std::vector<pr::TreatmentProfile> out;
    for (auto& [k, p] : by_key) {
        out.push_back(std::move(p));
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

}

TEST(CosineDistance, Examples) {
    EXPECT_EQ(ev::cosine_distance(vec({1, 2, 3}), vec({1, 2, 3})), 0.0);
    EXPECT_EQ(ev::cosine_distance(vec({1, 0}), vec({0, 1})), 1.0);
    EXPECT_EQ(ev::cosine_distance(vec({1, 0}), vec({-1, 0})), 2.0);
    EXPECT_THROW((void)ev::cosine_distance(vec({0, 0}), vec({1, 0})), std::domain_error);
    EXPECT_THROW((void)ev::cosine_distance(vec({1, 0}), vec({1, 0, 0})), std::invalid_argument);
}

TEST(Nsc, HandExampleIsThreeQuarters) {
    const auto ps = hand_example({"b1"}, {"b1"});
    const auto r = ev::evaluate(ps);
    ASSERT_TRUE(r.nsc_accuracy.has_value());
    EXPECT_EQ(*r.nsc_accuracy, 0.75);
    EXPECT_EQ(r.nsc_eligible_count, 4u);
    ASSERT_EQ(r.rows.size(), 4u);
    EXPECT_EQ(r.rows[2].key, (pr::TreatmentKey{"c2", "1"}));
    EXPECT_EQ(r.rows[2].nsc.neighbor, (pr::TreatmentKey{"c1", "2"}));
    EXPECT_EQ(r.rows[3].nsc.assigned_moa, "A");
    EXPECT_FALSE(r.rows[3].nsc.correct);
    EXPECT_EQ(r.nscb_eligible_count, 0u);
    EXPECT_FALSE(r.nscb_accuracy.has_value());
    EXPECT_FALSE(r.drop.has_value());
}

TEST(Nscb, HandExampleWithTwoBatches) {
    const auto r = ev::evaluate(hand_example({"b1"}, {"b2"}));
    EXPECT_EQ(r.nscb_eligible_count, 4u);
    ASSERT_TRUE(r.nscb_accuracy.has_value());
    EXPECT_EQ(*r.nscb_accuracy, 0.0);
    EXPECT_EQ(r.rows[0].nscb.neighbor, (pr::TreatmentKey{"c3", "1"}));
    EXPECT_EQ(r.rows[0].nscb.assigned_moa, "B");
    EXPECT_EQ(r.rows[3].nscb.neighbor, (pr::TreatmentKey{"c2", "1"}));
    EXPECT_EQ(*r.drop, *r.nsc_accuracy - *r.nscb_accuracy);
}

TEST(Nscb, SingletonBatchesReproduceNsc) {
    auto ps = hand_example({}, {});
    for (std::size_t i = 0; i < ps.size(); ++i) {
        ps[i].batches = {"solo" + std::to_string(i)};
    }
    EXPECT_EQ(ev::assign(ps, ev::MatchRule::nsc), ev::assign(ps, ev::MatchRule::nscb));
}

TEST(Nsc, SameMoaEverywhereIsPerfect) {
    std::vector<pr::TreatmentProfile> ps{profile("a", "1", "X", {"b"}, vec({1, 2})), profile("b", "1", "X", {"b"}, vec({-1, 0})),
                                         profile("c", "1", "X", {"b"}, vec({0, 3}))};
    EXPECT_EQ(*ev::evaluate(ps).nsc_accuracy, 1.0);
}

TEST(Nsc, TwoOrthogonalCompoundsAreForcedWrong) {
    std::vector<pr::TreatmentProfile> ps{profile("a", "1", "X", {"b"}, vec({1, 0})), profile("b", "1", "Y", {"b"}, vec({0, 1}))};
    EXPECT_EQ(*ev::evaluate(ps).nsc_accuracy, 0.0);
}

TEST(Nsc, TiesGoToSmallestKey) {
    std::vector<pr::TreatmentProfile> ps{profile("q", "1", "X", {"b0"}, vec({1, 0})), profile("m", "2", "Y", {"b1"}, vec({2, 0})),
                                         profile("m", "1", "Z", {"b2"}, vec({3, 0}))};
    const auto a = ev::assign(ps, ev::MatchRule::nsc);
    ASSERT_TRUE(a[0].neighbor.has_value());
    EXPECT_EQ(*a[0].neighbor, 2u);
    EXPECT_EQ(ev::oracle_assign(ps, ev::MatchRule::nsc), a);
}

TEST(Nsc, FewerThanTwoCompoundsIsRejected) {
    std::vector<pr::TreatmentProfile> ps{profile("a", "1", "X", {"b"}, vec({1, 0})), profile("a", "2", "X", {"b"}, vec({0, 1}))};
    EXPECT_THROW((void)ev::evaluate(ps), std::invalid_argument);
}

TEST(Oracle, AgreesWithFastPathOnRandomInstances) {
    std::mt19937_64 rng(2024);
    std::size_t assignments = 0;
    for (int instance = 0; instance < 200; ++instance) {
        const auto ps = random_instance(rng);
        for (auto rule : {ev::MatchRule::nsc, ev::MatchRule::nscb}) {
            const auto fast = ev::assign(ps, rule);
            const auto slow = ev::oracle_assign(ps, rule);
            ASSERT_EQ(fast, slow) << "instance " << instance << " rule " << ev::to_string(rule);
            assignments += fast.size();
        }
        const auto r = ev::evaluate(ps);
        EXPECT_EQ(r.nsc_accuracy, reference_accuracy(ps, false));
        EXPECT_EQ(r.nscb_accuracy, reference_accuracy(ps, true));
    }
    EXPECT_GT(assignments, 0u);
}

TEST(Report, NeighborsAreLegal) {
    std::mt19937_64 rng(77);
    for (int instance = 0; instance < 50; ++instance) {
        const auto ps = random_instance(rng);
        const auto r = ev::evaluate(ps);
        std::map<pr::TreatmentKey, const pr::TreatmentProfile*> by_key;
        for (const auto& p : ps) {
            by_key[p.key()] = &p;
        }
        for (const auto& row : r.rows) {
            if (row.nsc.eligible) {
                EXPECT_NE(row.nsc.neighbor.compound, row.key.compound);
            }
            if (row.nscb.eligible) {
                EXPECT_NE(row.nscb.neighbor.compound, row.key.compound);
                for (const auto& b : by_key.at(row.nscb.neighbor)->batches) {
                    EXPECT_EQ(row.batches.count(b), 0u);
                }
            }
        }
        if (r.nsc_accuracy) {
            EXPECT_GE(*r.nsc_accuracy, 0.0);
            EXPECT_LE(*r.nsc_accuracy, 1.0);
        }
        if (r.drop) {
            EXPECT_EQ(*r.drop, *r.nsc_accuracy - *r.nscb_accuracy);
        }
    }
}

TEST(Report, AssignmentsInvariantToScalingAndRotation) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    for (int instance = 0; instance < 30; ++instance) {
        auto ps = random_instance(rng);
        // Continuous coordinates keep the nearest neighbor unambiguous under rounding.
        std::normal_distribution<double> g;
        for (auto& p : ps) {
            for (auto& x : p.vector) {
                x = g(rng);
            }
        }
        const auto base = ev::assign(ps, ev::MatchRule::nsc);
        const auto dim = ps[0].vector.size();
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(dim, dim)).householderQ();
        auto scaled = ps, rotated = ps;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            scaled[i].vector *= scale(rng);
            rotated[i].vector = q * ps[i].vector;
        }
        const auto a = ev::assign(scaled, ev::MatchRule::nsc);
        const auto b = ev::assign(rotated, ev::MatchRule::nsc);
        for (std::size_t i = 0; i < base.size(); ++i) {
            EXPECT_EQ(a[i].neighbor, base[i].neighbor);
            EXPECT_EQ(b[i].neighbor, base[i].neighbor);
        }
    }
}

TEST(Report, JsonCarriesAggregatesAndRows) {
    const auto r = ev::evaluate(hand_example({"b1"}, {"b2"}));
    const auto j = nlohmann::json::parse(ev::to_json(r));
    EXPECT_EQ(j["nsc_accuracy"].get<double>(), 0.75);
    EXPECT_EQ(j["nscb_accuracy"].get<double>(), 0.0);
    EXPECT_EQ(j["drop"].get<double>(), 0.75);
    EXPECT_EQ(j["nscb_eligible_count"].get<int>(), 4);
    ASSERT_EQ(j["rows"].size(), 4u);
    EXPECT_EQ(j["rows"][2]["nsc"]["neighbor"]["compound"], "c1");
    EXPECT_EQ(ev::to_json(r), ev::to_json(ev::evaluate(hand_example({"b1"}, {"b2"}))));
}

TEST(Report, JsonHasNullForUndefinedAccuracy) {
    const auto j = nlohmann::json::parse(ev::to_json(ev::evaluate(hand_example({"b1"}, {"b1"}))));
    EXPECT_TRUE(j["nscb_accuracy"].is_null());
    EXPECT_TRUE(j["drop"].is_null());
    EXPECT_FALSE(j["warnings"].empty());
}

TEST(Report, TableListsEveryTreatment) {
    const auto table = ev::format_table(ev::evaluate(hand_example({"b1"}, {"b2"})));
    EXPECT_NE(table.find("c3"), std::string::npos);
    EXPECT_NE(table.find("NSC"), std::string::npos);
}
