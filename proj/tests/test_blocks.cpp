#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "minidet/blocks.hpp"

using namespace minidet;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
    ParamRng rng(seed);
    Tensor t(s);
    for (long i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
    return t;
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.raw().begin(), t.raw().end(), [](double v) { return std::isfinite(v); });
}

void zero(ConvBlock& c) {
    std::fill(c.weight.raw().begin(), c.weight.raw().end(), 0.0);
    std::fill(c.bias.begin(), c.bias.end(), 0.0);
}

}  // namespace

TEST_CASE("init is seed-deterministic") {
    ParamRng a(7), b(7), c(8);
    ConvBlock ca = make_conv_block(8, 16, 3, 1, a);
    ConvBlock cb = make_conv_block(8, 16, 3, 1, b);
    ConvBlock cc = make_conv_block(8, 16, 3, 1, c);
    CHECK(ca.weight.raw() == cb.weight.raw());
    CHECK(ca.bias == cb.bias);
    CHECK(ca.weight.raw() != cc.weight.raw());
}

TEST_CASE("EMA group divisibility") {
    ParamRng rng(1);
    CHECK_NOTHROW(make_ema(64, 8, rng));
    CHECK_THROWS_AS(make_ema(64, 7, rng), DimError);
}

TEST_CASE("ConvBlock spatial contract") {
    ParamRng rng(2);
    ConvBlock c1 = make_conv_block(3, 8, 3, 1, rng);
    ConvBlock c2 = make_conv_block(3, 8, 3, 2, rng);
    Tensor x = random_tensor({1, 3, 9, 9}, 3);
    CHECK(c1.forward(x).shape() == Shape{1, 8, 9, 9});
    CHECK(c2.forward(x).shape() == Shape{1, 8, 5, 5});
}

TEST_CASE("C2f shape contract") {
    ParamRng rng(4);
    C2fBlock block = make_c2f(64, 64, 1, true, rng);
    Tensor x = random_tensor({1, 64, 40, 40}, 5);
    Tensor y = block.forward(x);
    CHECK(y.shape() == Shape{1, 64, 40, 40});

    SUBCASE("n = 0 degenerates to the entry/exit convs") {
        C2fBlock none = make_c2f(16, 24, 0, true, rng);
        CHECK(none.stages.empty());
        Tensor z = none.forward(random_tensor({2, 16, 6, 6}, 6));
        CHECK(z.shape() == Shape{2, 24, 6, 6});
    }
}

TEST_CASE("zeroed bottleneck is a residual identity") {
    ParamRng rng(7);
    Bottleneck b = make_bottleneck(8, true, rng);
    zero(b.cv1);
    zero(b.cv2);
    Tensor x = random_tensor({1, 8, 5, 5}, 8);
    Tensor y = b.forward(x);
    REQUIRE(y.shape() == x.shape());
    for (long i = 0; i < x.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));
}

TEST_CASE("SPPF preserves spatial size") {
    ParamRng rng(9);
    SPPFBlock block = make_sppf(256, 256, 5, rng);
    Tensor x = random_tensor({1, 256, 20, 20}, 10);
    Tensor y = block.forward(x);
    CHECK(y.shape() == Shape{1, 256, 20, 20});
}

TEST_CASE("SPPF constant input collapses the pyramid") {
    ParamRng rng(11);
    SPPFBlock block = make_sppf(8, 8, 5, rng);
    Tensor x(Shape{1, 8, 6, 6}, 0.75);
    Tensor t = block.cv1.forward(x);
    Tensor pooled = maxpool2d(t, 5, 1, 2);
    for (long i = 0; i < t.numel(); ++i)
        CHECK(pooled.data()[i] == doctest::Approx(t.data()[i]).epsilon(1e-12));
    Tensor manual = block.cv2.forward(concat({t, t, t, t}, 1));
    Tensor y = block.forward(x);
    for (long i = 0; i < y.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(manual.data()[i]).epsilon(1e-12));
}

TEST_CASE("max-pool is positively homogeneous") {
    Tensor x = random_tensor({1, 2, 8, 8}, 12);
    for (long i = 0; i < x.numel(); ++i) x.data()[i] = std::abs(x.data()[i]) + 0.1;
    Tensor twice = x;
    for (long i = 0; i < twice.numel(); ++i) twice.data()[i] *= 2.0;
    Tensor a = maxpool2d(twice, 5, 1, 2);
    Tensor b = maxpool2d(x, 5, 1, 2);
    for (long i = 0; i < a.numel(); ++i)
        CHECK(a.data()[i] == doctest::Approx(2.0 * b.data()[i]).epsilon(1e-12));
}

TEST_CASE("EMA keeps the input shape") {
    ParamRng rng(13);
    EMABlock block = make_ema(64, 8, rng);
    Tensor x = random_tensor({2, 64, 40, 40}, 14);
    CHECK(block.forward(x).shape() == x.shape());

    for (auto [c, g] : {std::pair{4, 1}, {6, 2}, {12, 3}, {32, 8}}) {
        ParamRng r2(static_cast<std::uint64_t>(c * 100 + g));
        EMABlock b2 = make_ema(c, g, r2);
        Tensor x2 = random_tensor({1, c, 5, 7}, 15);
        CHECK(b2.forward(x2).shape() == x2.shape());
    }
}

TEST_CASE("EMA on a spatially constant input is spatially uniform") {
    ParamRng rng(16);
    EMABlock block = make_ema(16, 4, rng);
    Tensor x(Shape{1, 16, 6, 6});
    for (long c = 0; c < 16; ++c)
        for (long h = 0; h < 6; ++h)
            for (long w = 0; w < 6; ++w) x.at(0, c, h, w) = 0.1 * static_cast<double>(c) - 0.4;
    Tensor y = block.forward(x);
    for (long c = 0; c < 16; ++c) {
        const double v = y.at(0, c, 0, 0);
        for (long h = 0; h < 6; ++h)
            for (long w = 0; w < 6; ++w)
                CHECK(y.at(0, c, h, w) == doctest::Approx(v).epsilon(1e-10));
    }
}

TEST_CASE("EMA attention softmax vectors sum to 1") {
    ParamRng rng(17);
    EMABlock block = make_ema(24, 4, rng);
    Tensor x = random_tensor({3, 24, 5, 5}, 18);
    EmaDebug dbg;
    ema_forward(block, x, &dbg);
    REQUIRE(dbg.softmax_gated.size() == 3 * 4);
    REQUIRE(dbg.softmax_conv3.size() == 3 * 4);
    for (const auto& v : dbg.softmax_gated) {
        double sum = 0;
        for (double e : v) sum += e;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
    for (const auto& v : dbg.softmax_conv3) {
        double sum = 0;
        for (double e : v) sum += e;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("EMA gating stays inside the sigmoid range") {
    ParamRng rng(19);
    EMABlock block = make_ema(8, 2, rng);
    Tensor x(Shape{1, 8, 4, 4}, 2.0);
    Tensor y = block.forward(x);
    for (long i = 0; i < y.numel(); ++i) {
        CHECK(y.data()[i] > 0.0);
        CHECK(y.data()[i] < 2.0);
    }
}

TEST_CASE("C2f-EMA matches the C2f shape contract") {
    ParamRng rng(20);
    C2fEMABlock block = make_c2f_ema(32, 48, 2, true, 4, rng);
    Tensor x = random_tensor({1, 32, 8, 8}, 21);
    CHECK(block.forward(x).shape() == Shape{1, 48, 8, 8});
    CHECK(block.ema_stage == 2);
}

TEST_CASE("gate bypass reduces C2f-EMA to plain C2f") {
    ParamRng ra(22), rb(22);
    C2fEMABlock attn = make_c2f_ema(16, 16, 1, true, 4, ra);
    C2fBlock plain = make_c2f(16, 16, 1, true, rb);
    REQUIRE(attn.c2f.cv1.weight.raw() == plain.cv1.weight.raw());
    REQUIRE(attn.c2f.cv2.weight.raw() == plain.cv2.weight.raw());

    std::fill(attn.ema.gate_weight.raw().begin(), attn.ema.gate_weight.raw().end(), 0.0);
    std::fill(attn.ema.gate_bias.begin(), attn.ema.gate_bias.end(), 30.0);
    std::fill(attn.ema.conv3_weight.raw().begin(), attn.ema.conv3_weight.raw().end(), 0.0);
    std::fill(attn.ema.conv3_bias.begin(), attn.ema.conv3_bias.end(), 60.0);

    Tensor x = random_tensor({2, 16, 6, 6}, 23);
    Tensor ya = attn.forward(x);
    Tensor yp = plain.forward(x);
    REQUIRE(ya.shape() == yp.shape());
    for (long i = 0; i < ya.numel(); ++i)
        CHECK(std::abs(ya.data()[i] - yp.data()[i]) < 1e-9);
}

TEST_CASE("C2f-EMA stays finite across seeded configs") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        ParamRng rng(seed);
        const int c = 8 + 4 * static_cast<int>(seed % 3);
        C2fEMABlock block = make_c2f_ema(c, c, 1 + static_cast<int>(seed % 2), true, 2, rng);
        Tensor x = random_tensor({1, c, 6, 6}, seed + 100);
        Tensor y = block.forward(x);
        CHECK(all_finite(y));
    }
}

TEST_CASE("forwards are deterministic") {
    ParamRng ra(24), rb(24);
    C2fEMABlock a = make_c2f_ema(16, 16, 1, true, 4, ra);
    C2fEMABlock b = make_c2f_ema(16, 16, 1, true, 4, rb);
    Tensor x = random_tensor({1, 16, 7, 7}, 25);
    CHECK(a.forward(x).raw() == b.forward(x).raw());
}
