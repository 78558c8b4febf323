#include <gtest/gtest.h>

#include <random>

#include "cellcontrast/contrastive.hpp"
#include "cellcontrast/model.hpp"
#include "cellcontrast/nd/ops.hpp"
#include "gradcheck.hpp"

namespace model = cellcontrast::model;
namespace nd = cellcontrast::nd;
using cellcontrast::CellImage;

namespace {

model::ModelConfig small_config(model::HeadKind head = model::HeadKind::mlp2) {
    model::ModelConfig c;
    c.encoder.widths = {4, 8};
    c.encoder.blocks = {1, 1};
    c.encoder.norm_groups = 2;
    c.head.kind = head;
    c.head.hidden = 6;
    c.head.output = 5;
    return c;
}

nd::Tensor<double> random_images(std::size_t b, std::size_t hw, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return testsupport::random_tensor({b, 3, hw, hw}, rng, 0.0, 1.0);
}

nd::Tensor<double> rows(const nd::Tensor<double>& t, std::vector<std::size_t> order) {
    const auto cols = t.dim(1);
    nd::Tensor<double> out({order.size(), cols});
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out.at(i, j) = t.at(order[i], j);
        }
    }
    return out;
}

}

TEST(Model, PresetsGrowInParameterCount) {
    auto count = [](model::EncoderPreset p) {
        model::ModelConfig c;
        c.encoder = model::EncoderConfig::preset(p);
        return model::init_params<float>(c, 0).scalar_count();
    };
    EXPECT_LT(count(model::EncoderPreset::tiny), count(model::EncoderPreset::small));
    EXPECT_LT(count(model::EncoderPreset::small), count(model::EncoderPreset::medium));
}

TEST(Model, TinyPresetShape) {
    const auto c = model::EncoderConfig::preset(model::EncoderPreset::tiny);
    EXPECT_EQ(c.widths, (std::vector<std::size_t>{16, 32, 64}));
    EXPECT_EQ(c.representation_dim(), 64u);
    std::size_t blocks = 0;
    for (auto b : c.blocks) {
        blocks += b;
    }
    EXPECT_EQ(blocks, 8u);
}

TEST(Model, PresetNamesRoundTrip) {
    for (auto p : {model::EncoderPreset::tiny, model::EncoderPreset::small, model::EncoderPreset::medium}) {
        EXPECT_EQ(model::parse_encoder_preset(model::to_string(p)), p);
    }
    for (auto k : {model::HeadKind::identity, model::HeadKind::linear, model::HeadKind::mlp2}) {
        EXPECT_EQ(model::parse_head_kind(model::to_string(k)), k);
    }
    EXPECT_THROW((void)model::parse_encoder_preset("huge"), std::invalid_argument);
}

TEST(Model, InitIsDeterministicPerSeed) {
    const auto c = small_config();
    EXPECT_EQ(model::init_params<double>(c, 3), model::init_params<double>(c, 3));
    EXPECT_FALSE(model::init_params<double>(c, 3) == model::init_params<double>(c, 4));
}

TEST(Model, ParameterNamesAreUniqueAndHierarchical) {
    const auto p = model::init_params<float>(small_config(), 0);
    std::set<std::string> names(p.names().begin(), p.names().end());
    EXPECT_EQ(names.size(), p.size());
    EXPECT_TRUE(p.contains("encoder.stem.conv.weight"));
    EXPECT_TRUE(p.contains("encoder.stage1.block0.shortcut.weight"));
    EXPECT_TRUE(p.contains("head.fc2.bias"));
    model::ModelParams<float> q;
    q.add("a", nd::Tensor<float>({1}));
    EXPECT_THROW(q.add("a", nd::Tensor<float>({1})), std::invalid_argument);
}

TEST(Model, ZeroImageGivesFiniteRepresentation) {
    const auto c = small_config();
    const auto p = model::init_params<double>(c, 1);
    const auto h = model::encode(c, p, nd::Tensor<double>({1, 3, 8, 8}));
    EXPECT_EQ(h.shape(), (nd::Shape{1, 8}));
    EXPECT_TRUE(h.all_finite());
}

TEST(Model, IdenticalImagesGiveIdenticalRows) {
    const auto c = small_config();
    const auto p = model::init_params<double>(c, 1);
    const auto one = random_images(1, 8, 5);
    std::vector<double> twice(one.data().begin(), one.data().end());
    twice.insert(twice.end(), one.data().begin(), one.data().end());
    const auto h = model::encode(c, p, nd::Tensor<double>({2, 3, 8, 8}, twice));
    for (std::size_t j = 0; j < 8; ++j) {
        EXPECT_EQ(h.at(0, j), h.at(1, j));
    }
}

TEST(Model, BatchResultsEqualPerSampleResults) {
    const auto c = small_config();
    const auto p = model::init_params<double>(c, 2);
    const auto batch = random_images(3, 8, 6);
    const auto h = model::encode(c, p, batch);
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> single(batch.data().begin() + static_cast<std::ptrdiff_t>(i * 192),
                                   batch.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * 192));
        const auto hi = model::encode(c, p, nd::Tensor<double>({1, 3, 8, 8}, single));
        for (std::size_t j = 0; j < 8; ++j) {
            EXPECT_EQ(h.at(i, j), hi.at(0, j));
        }
    }
}

TEST(Model, PermutingBatchPermutesRows) {
    const auto c = small_config();
    const auto p = model::init_params<double>(c, 2);
    const auto batch = random_images(3, 8, 7);
    std::vector<double> permuted;
    for (std::size_t i : {2u, 0u, 1u}) {
        permuted.insert(permuted.end(), batch.data().begin() + static_cast<std::ptrdiff_t>(i * 192),
                        batch.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * 192));
    }
    const auto h = model::encode(c, p, batch);
    const auto hp = model::encode(c, p, nd::Tensor<double>({3, 3, 8, 8}, permuted));
    EXPECT_EQ(hp, rows(h, {2, 0, 1}));
}

TEST(Model, WrongChannelCountIsRejected) {
    const auto c = small_config();
    const auto p = model::init_params<double>(c, 0);
    EXPECT_THROW((void)model::encode(c, p, nd::Tensor<double>({1, 2, 8, 8})), std::invalid_argument);
}

TEST(Model, IdentityHeadReturnsInput) {
    const auto c = small_config(model::HeadKind::identity);
    const auto p = model::init_params<double>(c, 0);
    std::mt19937_64 rng(1);
    const auto h = testsupport::random_tensor({3, 8}, rng);
    EXPECT_EQ(model::project(c, p, h), h);
}

TEST(Model, LinearHeadWithIdentityWeightReturnsInput) {
    auto c = small_config(model::HeadKind::linear);
    c.head.output = 8;
    auto p = model::init_params<double>(c, 0);
    auto& w = p.at("head.fc.weight");
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            w.at(i, j) = i == j ? 1.0 : 0.0;
        }
    }
    std::mt19937_64 rng(2);
    const auto h = testsupport::random_tensor({3, 8}, rng);
    EXPECT_EQ(model::project(c, p, h), h);
}

TEST(Model, Mlp2WithZeroOutputLayerGivesZero) {
    const auto c = small_config();
    auto p = model::init_params<double>(c, 0);
    p.at("head.fc2.weight") = nd::Tensor<double>::zeros(p.at("head.fc2.weight").shape());
    std::mt19937_64 rng(3);
    const auto z = model::project(c, p, testsupport::random_tensor({4, 8}, rng));
    EXPECT_EQ(z, nd::Tensor<double>::zeros({4, 5}));
}

TEST(Model, HeadRejectsWrongInputWidth) {
    const auto c = small_config();
    const auto p = model::init_params<double>(c, 0);
    EXPECT_THROW((void)model::project(c, p, nd::Tensor<double>({2, 7})), std::invalid_argument);
}

TEST(Model, Mlp2HasOneHiddenLayer) {
    const auto p = model::init_params<double>(small_config(), 0);
    EXPECT_EQ(p.at("head.fc1.weight").shape(), (nd::Shape{8, 6}));
    EXPECT_EQ(p.at("head.fc2.weight").shape(), (nd::Shape{6, 5}));
    EXPECT_FALSE(p.contains("head.fc3.weight"));
}

TEST(Model, EncoderAndHeadGradientMatchesFiniteDifferences) {
    const auto c = small_config();
    const auto params = model::init_params<double>(c, 9);
    const auto images = random_images(4, 6, 9);
    std::vector<nd::Tensor<double>> inputs(params.tensors().begin(), params.tensors().end());
    const auto r = testsupport::gradcheck(
        [&](nd::Tape<double>& tape, const std::vector<nd::Var<double>>& v) {
            model::BoundParams<double> bound(params, v);
            auto h = model::encode(c.encoder, bound, tape.constant(images));
            auto z = model::project(c.head, bound, h);
            return cellcontrast::contrastive::ntxent_loss(z, 0.5);
        },
        inputs, 9, 1e-5, 6);
    EXPECT_LE(r.relative_error, 1e-5);
}
