#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "lunar/unet.hpp"
#include "support/fixtures.hpp"

using namespace lunar;

namespace {

TEST(InitParams, DeterministicInSeed) {
    const UNetConfig cfg{2, 4, 1, 1};
    const auto a = init_params(cfg, 11);
    const auto b = init_params(cfg, 11);
    ASSERT_EQ(a.items.size(), b.items.size());
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        ASSERT_EQ(a.items[i].first, b.items[i].first);
        ASSERT_EQ(a.items[i].second.data, b.items[i].second.data);
    }
    const auto c = init_params(cfg, 12);
    EXPECT_NE(a.items[0].second.data, c.items[0].second.data);
}

TEST(InitParams, NamingSchemeDepth1Base2) {
    const auto params = init_params(UNetConfig{1, 2, 1, 1}, 0);
    const std::vector<std::string> want = {
        "enc0.conv1.w",       "enc0.conv1.b",       "enc0.conv2.w",       "enc0.conv2.b",
        "bottleneck.conv1.w", "bottleneck.conv1.b", "bottleneck.conv2.w", "bottleneck.conv2.b",
        "dec0.up.w",          "dec0.up.b",          "dec0.conv1.w",       "dec0.conv1.b",
        "dec0.conv2.w",       "dec0.conv2.b",       "head.w",             "head.b",
    };
    ASSERT_EQ(params.items.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(params.items[i].first, want[i]);
    // Every name present exactly once.
    std::set<std::string> names;
    for (const auto& [k, t] : params.items) names.insert(k);
    EXPECT_EQ(names.size(), params.items.size());
}

TEST(InitParams, BiasesZeroWeightsBounded) {
    const UNetConfig cfg{2, 8, 1, 1};
    const auto params = init_params(cfg, 3);
    for (const auto& [name, t] : params.items) {
        if (name.ends_with(".b")) {
            for (double v : t.data) ASSERT_EQ(v, 0.0) << name;
        } else {
            // fan_in = k*k*c_in; shape is [ci,co,2,2] for up-convs, [co,ci,k,k] otherwise.
            const bool up = name.find(".up.") != std::string::npos;
            const auto k = t.shape[2];
            const auto c_in = up ? t.shape[0] : t.shape[1];
            const double bound = std::sqrt(6.0 / static_cast<double>(k * k * c_in));
            for (double v : t.data) {
                ASSERT_LE(std::abs(v), bound) << name;
            }
        }
    }
}

// Oracle: enumerate the layers of depth=1, base=2 by hand and sum.
TEST(CountParams, TinyNetAgainstLayerEnumeration) {
    struct L { int k, ci, co; };
    const std::vector<L> layers = {
        {3, 1, 2}, {3, 2, 2},  // enc0
        {3, 2, 4}, {3, 4, 4},  // bottleneck
        {2, 4, 2},             // dec0.up
        {3, 4, 2}, {3, 2, 2},  // dec0 convs (input = up 2 + skip 2)
        {1, 2, 1},             // head
    };
    std::int64_t want = 0;
    for (const auto& l : layers) want += l.k * l.k * l.ci * l.co + l.co;
    ASSERT_EQ(want, 431);  // cross-check of the hand enumeration itself
    EXPECT_EQ(count_params(UNetConfig{1, 2, 1, 1}), want);
}

TEST(CountParams, DoublingBaseRoughlyQuadruples) {
    for (int depth : {1, 2, 3}) {
        const auto c1 = count_params(UNetConfig{depth, 8, 1, 1});
        const auto c2 = count_params(UNetConfig{depth, 16, 1, 1});
        EXPECT_GT(static_cast<double>(c2), 3.5 * static_cast<double>(c1)) << "depth " << depth;
    }
}

TEST(CountParams, MatchesInitParamsElementCount) {
    for (int depth : {1, 2, 3}) {
        const UNetConfig cfg{depth, 4, 1, 1};
        EXPECT_EQ(count_params(cfg), init_params(cfg, 0).total_elements());
    }
}

TEST(Forward, OutputShapeEqualsInputShape) {
    for (int depth : {1, 2, 3}) {
        const UNetConfig cfg{depth, 2, 1, 1};
        const auto params = init_params(cfg, 7);
        const auto x = testsupport::random_tensor4(2, 1, 64, 64, 99, 0.0, 1.0);
        const auto y = forward(params, cfg, x);
        ASSERT_EQ(y.shape, x.shape) << "depth " << depth;
    }
}

TEST(Forward, TraceShapesDepth2Base8) {
    const UNetConfig cfg{2, 8, 1, 1};
    const auto params = init_params(cfg, 1);
    const auto x = testsupport::random_tensor4(3, 1, 64, 64, 5, 0.0, 1.0);
    UNetTrace tr;
    forward(params, cfg, x, &tr);

    using S = std::vector<std::int64_t>;
    EXPECT_EQ(tr.enc_out[0].shape, (S{3, 8, 64, 64}));
    EXPECT_EQ(tr.enc_out[1].shape, (S{3, 16, 32, 32}));
    EXPECT_EQ(tr.bott_out.shape, (S{3, 32, 16, 16}));
    EXPECT_EQ(tr.dec_up[1].shape, (S{3, 16, 32, 32}));
    EXPECT_EQ(tr.dec_cat[1].shape, (S{3, 32, 32, 32}));   // 2*(base*2^i) channels
    EXPECT_EQ(tr.dec_cat[0].shape, (S{3, 16, 64, 64}));
    EXPECT_EQ(tr.dec_out[0].shape, (S{3, 8, 64, 64}));
    EXPECT_EQ(tr.output.shape, (S{3, 1, 64, 64}));
}

TEST(Forward, SpatialBookkeepingAcrossDepths) {
    for (int depth : {1, 2, 3, 4}) {
        for (int size : {16, 32, 64}) {
            const UNetConfig cfg{depth, 2, 1, 1};
            const auto params = init_params(cfg, 13);
            const auto x = testsupport::random_tensor4(1, 1, size, size, 21, 0.0, 1.0);
            UNetTrace tr;
            const auto y = forward(params, cfg, x, &tr);
            ASSERT_EQ(y.shape, x.shape);
            for (int i = 0; i < depth; ++i) {
                const auto idx = static_cast<std::size_t>(i);
                ASSERT_EQ(tr.enc_out[idx].dim(1), cfg.enc_channels(i));
                ASSERT_EQ(tr.enc_out[idx].dim(2), size >> i);
                ASSERT_EQ(tr.dec_cat[idx].dim(1), 2 * cfg.enc_channels(i));
            }
            ASSERT_EQ(tr.bott_out.dim(1), cfg.enc_channels(depth));
            ASSERT_EQ(tr.bott_out.dim(2), size >> depth);
        }
    }
}

TEST(Forward, OutputsInOpenUnitInterval) {
    SplitMix64 rng(88);
    for (int rep = 0; rep < 3; ++rep) {
        const UNetConfig cfg{2, 4, 1, 1};
        const auto params = init_params(cfg, rng.next());
        const auto x = testsupport::random_tensor4(1, 1, 16, 16, rng.next(), -2.0, 2.0);
        const auto y = forward(params, cfg, x);
        for (double v : y.data) {
            ASSERT_GT(v, 0.0);
            ASSERT_LT(v, 1.0);
        }
    }
}

TEST(Forward, RejectsBadInputs) {
    const UNetConfig cfg{2, 4, 1, 1};
    const auto params = init_params(cfg, 0);
    EXPECT_THROW(forward(params, cfg, testsupport::random_tensor4(1, 1, 18, 18, 0)), validation_error);
    EXPECT_THROW(forward(params, cfg, testsupport::random_tensor4(1, 2, 16, 16, 0)), validation_error);
}

TEST(Forward, DeterministicPureFunction) {
    const UNetConfig cfg{2, 4, 1, 1};
    const auto params = init_params(cfg, 10);
    const auto x = testsupport::random_tensor4(2, 1, 32, 32, 3, 0.0, 1.0);
    const auto y1 = forward(params, cfg, x);
    const auto y2 = forward(params, cfg, x);
    EXPECT_EQ(y1.data, y2.data);
}

// Fast kernels vs naive reference implementations.
TEST(Ops, Conv3x3MatchesNaive) {
    SplitMix64 rng(7);
    const auto in = testsupport::random_tensor4(2, 3, 9, 11, rng.next());
    Tensor w({4, 3, 3, 3});
    for (auto& v : w.data) v = rng.next_double() - 0.5;
    Tensor b({4});
    for (auto& v : b.data) v = rng.next_double() - 0.5;

    Tensor out = Tensor::zeros4(2, 4, 9, 11);
    ops::conv3x3_forward(in, w, b, out);
    const auto ref = testsupport::naive_conv3x3(in, w, b);
    for (std::size_t i = 0; i < out.data.size(); ++i) ASSERT_NEAR(out.data[i], ref.data[i], 1e-12);
}

TEST(Ops, Upconv2x2MatchesNaive) {
    SplitMix64 rng(8);
    const auto in = testsupport::random_tensor4(2, 4, 5, 6, rng.next());
    Tensor w({4, 2, 2, 2});
    for (auto& v : w.data) v = rng.next_double() - 0.5;
    Tensor b({2});
    for (auto& v : b.data) v = rng.next_double() - 0.5;

    Tensor out = Tensor::zeros4(2, 2, 10, 12);
    ops::upconv2x2_forward(in, w, b, out);
    const auto ref = testsupport::naive_upconv2x2(in, w, b);
    for (std::size_t i = 0; i < out.data.size(); ++i) ASSERT_NEAR(out.data[i], ref.data[i], 1e-12);
}

TEST(Ops, Maxpool2x2MatchesNaive) {
    const auto in = testsupport::random_tensor4(2, 3, 8, 10, 55);
    Tensor out = Tensor::zeros4(2, 3, 4, 5);
    std::vector<std::uint8_t> idx;
    ops::maxpool2x2_forward(in, out, idx);
    const auto ref = testsupport::naive_maxpool2x2(in);
    ASSERT_EQ(out.data, ref.data);
}

TEST(Loss, ZeroWhenTargetEqualsOutput) {
    const UNetConfig cfg{1, 2, 1, 1};
    const auto params = init_params(cfg, 4);
    const auto x = testsupport::random_tensor4(1, 1, 8, 8, 2, 0.0, 1.0);
    const auto y = forward(params, cfg, x);
    const auto lg = loss_and_grads(params, cfg, x, y);
    EXPECT_EQ(lg.loss, 0.0);
}

TEST(Loss, BatchPermutationInvariant) {
    const UNetConfig cfg{1, 2, 1, 1};
    const auto params = init_params(cfg, 4);
    auto x = testsupport::random_tensor4(2, 1, 8, 8, 6, 0.0, 1.0);
    auto t = testsupport::random_tensor4(2, 1, 8, 8, 7, 0.0, 1.0);

    // Swap the two batch rows of both tensors.
    auto swap_rows = [](Tensor& ten) {
        const std::int64_t plane = ten.dim(1) * ten.dim(2) * ten.dim(3);
        for (std::int64_t i = 0; i < plane; ++i)
            std::swap(ten.data[static_cast<std::size_t>(i)], ten.data[static_cast<std::size_t>(plane + i)]);
    };
    const double l1 = loss_and_grads(params, cfg, x, t).loss;
    swap_rows(x);
    swap_rows(t);
    const double l2 = loss_and_grads(params, cfg, x, t).loss;
    EXPECT_DOUBLE_EQ(l1, l2);
}

TEST(Loss, MaskedLossIgnoresOffMaskPixels) {
    const UNetConfig cfg{1, 2, 1, 1};
    const auto params = init_params(cfg, 4);
    const auto x = testsupport::random_tensor4(1, 1, 8, 8, 2, 0.0, 1.0);
    auto t1 = testsupport::random_tensor4(1, 1, 8, 8, 3, 0.0, 1.0);
    auto t2 = t1;
    Tensor wts = Tensor::zeros4(1, 1, 8, 8);
    for (std::int64_t i = 0; i < 16; ++i) wts.data[static_cast<std::size_t>(i)] = 1.0;
    // Change the targets only where the weight is zero.
    for (std::size_t i = 16; i < t2.data.size(); ++i) t2.data[i] = 1.0 - t2.data[i];

    EXPECT_DOUBLE_EQ(loss_and_grads(params, cfg, x, t1, &wts).loss,
                     loss_and_grads(params, cfg, x, t2, &wts).loss);
}

}  // namespace
