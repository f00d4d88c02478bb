#include <doctest.h>

#include <cmath>

#include "dunet/reference.hpp"
#include "dunet/rng.hpp"
#include "dunet/tape.hpp"

using namespace dunet;

namespace {

Tensor<float> rand_tensor(Rng& rng, const Shape& s, float lo, float hi) {
    Tensor<float> t(s);
    for (auto& v : t.data) v = rng.uniform_f(lo, hi);
    return t;
}

} // namespace

TEST_CASE("shape validation") {
    CHECK_THROWS_AS(Shape({0, 3}), std::invalid_argument);
    CHECK_THROWS_AS(Shape({1, 2, 3, 4, 5}), std::invalid_argument);
    CHECK(Shape({2, 3, 4}).numel() == 24);
    CHECK(Shape({2, 3}) != Shape({2, 3, 1}));
}

TEST_CASE("non-finite values are rejected at op boundaries") {
    Tensor<float> bad(Shape{1, 2, 2});
    bad.data[2] = std::nanf("");
    Tape<float> t;
    CHECK_THROWS_AS(t.leaf(bad), NumericError);
}

TEST_CASE("conv2d identity and averaging") {
    Tape<float> t;
    Rng rng(1);
    const auto x = t.leaf(rand_tensor(rng, Shape{1, 4, 5}, -5.f, 5.f));

    // 1x1 kernel of value 1, zero bias: output equals input
    Tensor<float> k1 = Tensor<float>::full(Shape{1, 1, 1, 1}, 1.0f);
    const auto y = t.conv2d_valid(x, t.leaf(k1), t.leaf(Tensor<float>(Shape{1})));
    CHECK(t.value(y).shape == Shape{1, 4, 5});
    for (std::size_t i = 0; i < t.value(y).data.size(); ++i)
        CHECK(t.value(y).data[i] == t.value(x).data[i]);

    // normalized 3x3 averaging kernel on a constant input: constant output
    const auto c = t.leaf(Tensor<float>::full(Shape{1, 6, 6}, 7.25f));
    Tensor<float> avg = Tensor<float>::full(Shape{1, 1, 3, 3}, 1.0f / 9.0f);
    const auto z = t.conv2d_valid(c, t.leaf(avg), Tape<float>::none());
    for (float v : t.value(z).data) CHECK(v == doctest::Approx(7.25f).epsilon(1e-6));
}

TEST_CASE("conv2d matches the nested-loop oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const int cin = 1 + static_cast<int>(rng.uniform_int(3));
        const int cout = 1 + static_cast<int>(rng.uniform_int(3));
        const int k = 1 + 2 * static_cast<int>(rng.uniform_int(3));
        const int h = k + static_cast<int>(rng.uniform_int(8));
        const int w = k + static_cast<int>(rng.uniform_int(8));
        Tape<float> t;
        const auto x = t.leaf(rand_tensor(rng, Shape{cin, h, w}, -2.f, 2.f));
        const auto kk = t.leaf(rand_tensor(rng, Shape{cout, cin, k, k}, -1.f, 1.f));
        const auto b = t.leaf(rand_tensor(rng, Shape{cout}, -1.f, 1.f));
        const auto y = t.conv2d_valid(x, kk, b);

        Tensor<float> expect(Shape{cout, h - k + 1, w - k + 1});
        ref::conv2d_valid_serial(t.value(x).ptr(), cin, h, w, t.value(kk).ptr(), cout, k,
                                 t.value(b).ptr(), expect.ptr());
        for (std::size_t i = 0; i < expect.data.size(); ++i)
            CHECK(t.value(y).data[i] == doctest::Approx(expect.data[i]).epsilon(1e-6));
    }
}

TEST_CASE("conv2d preconditions") {
    Tape<float> t;
    Rng rng(3);
    const auto x = t.leaf(rand_tensor(rng, Shape{2, 5, 5}, -1.f, 1.f));
    CHECK_THROWS_AS(t.conv2d_valid(x, t.leaf(rand_tensor(rng, Shape{1, 3, 3, 3}, -1.f, 1.f)),
                                   Tape<float>::none()),
                    std::invalid_argument); // cin mismatch
    CHECK_THROWS_AS(t.conv2d_valid(x, t.leaf(rand_tensor(rng, Shape{1, 2, 2, 2}, -1.f, 1.f)),
                                   Tape<float>::none()),
                    std::invalid_argument); // even k
    CHECK_THROWS_AS(t.conv2d_valid(x, t.leaf(rand_tensor(rng, Shape{1, 2, 7, 7}, -1.f, 1.f)),
                                   Tape<float>::none()),
                    std::invalid_argument); // k > extent
}

TEST_CASE("maxpool2 basics and oracle") {
    Tape<float> t;
    Tensor<float> x(Shape{1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    CHECK(t.value(t.maxpool2(t.leaf(x))).data[0] == 4.0f);

    const auto c = t.leaf(Tensor<float>::full(Shape{2, 4, 6}, 3.5f));
    const auto y = t.maxpool2(c);
    CHECK(t.value(y).shape == Shape{2, 2, 3});
    for (float v : t.value(y).data) CHECK(v == 3.5f);

    Rng rng(5);
    const auto r = t.leaf(rand_tensor(rng, Shape{1, 8, 8}, -3.f, 3.f));
    const auto p = t.maxpool2(r);
    Tensor<float> expect(Shape{1, 4, 4});
    ref::maxpool2_serial(t.value(r).ptr(), 1, 8, 8, expect.ptr());
    for (std::size_t i = 0; i < expect.data.size(); ++i)
        CHECK(t.value(p).data[i] == expect.data[i]);

    CHECK_THROWS_AS(t.maxpool2(t.leaf(rand_tensor(rng, Shape{1, 3, 4}, 0.f, 1.f))),
                    std::invalid_argument);
}

TEST_CASE("upsample2 duplication and backward") {
    Tape<float> t;
    Tensor<float> x(Shape{1, 1, 1}, {5.f});
    const auto y = t.upsample2(t.leaf(x));
    CHECK(t.value(y).shape == Shape{1, 2, 2});
    for (float v : t.value(y).data) CHECK(v == 5.0f);

    Rng rng(6);
    const auto a = t.leaf(rand_tensor(rng, Shape{3, 4, 6}, -1.f, 1.f));
    CHECK(t.value(t.upsample2(a)).shape == Shape{3, 8, 12});

    // d(sum(upsample2(x)))/dx is 4 everywhere
    Tape<float> t2;
    const auto b = t2.leaf(rand_tensor(rng, Shape{2, 3, 3}, -1.f, 1.f), true);
    t2.backward(t2.sum(t2.upsample2(b)));
    for (float v : t2.grad(b).data) CHECK(v == 4.0f);
}

TEST_CASE("concat_channels layout and slicing") {
    Tape<float> t;
    Rng rng(7);
    const auto a = t.leaf(rand_tensor(rng, Shape{2, 3, 4}, -1.f, 1.f));
    const auto b = t.leaf(rand_tensor(rng, Shape{3, 3, 4}, -1.f, 1.f));
    const auto y = t.concat_channels(a, b);
    CHECK(t.value(y).shape == Shape{5, 3, 4});

    const Tensor<float> back_a = channel_slice(t.value(y), 0, 2);
    const Tensor<float> back_b = channel_slice(t.value(y), 2, 5);
    CHECK(back_a.data == t.value(a).data);
    CHECK(back_b.data == t.value(b).data);

    const auto big = t.leaf(rand_tensor(rng, Shape{512, 2, 2}, -1.f, 1.f));
    CHECK(t.value(t.concat_channels(big, big)).shape == Shape{1024, 2, 2});

    CHECK_THROWS_AS(t.concat_channels(a, t.leaf(rand_tensor(rng, Shape{1, 2, 4}, 0.f, 1.f))),
                    std::invalid_argument);
}

TEST_CASE("elementwise op values") {
    Tape<float> t;
    Tensor<float> z(Shape{1, 1, 1}, {0.f});
    CHECK(t.value(t.log1p_pos(t.leaf(z))).data[0] == 0.0f);
    Tensor<float> neg(Shape{1, 1, 1}, {-3.f});
    CHECK(t.value(t.relu(t.leaf(neg))).data[0] == 0.0f);
    Tensor<float> pos(Shape{1, 1, 1}, {3.f});
    CHECK(t.value(t.relu(t.leaf(pos))).data[0] == 3.0f);
    CHECK_THROWS_AS(t.log1p_pos(t.leaf(neg)), NumericError);
    CHECK_THROWS_AS(t.log_shift(t.leaf(neg), 1.0f), NumericError);
}

TEST_CASE("bce_with_logits values and gradient") {
    Tape<float> t;
    Tensor<float> z(Shape{1, 1, 1}, {0.f});
    Tensor<float> one = Tensor<float>::full(Shape{1, 1, 1}, 1.0f);
    const auto zv = t.leaf(z, true);
    const auto loss = t.bce_with_logits(zv, one);
    CHECK(t.value(loss).data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    t.backward(loss);
    CHECK(t.grad(zv).data[0] == doctest::Approx(-0.5).epsilon(1e-6));

    Tape<float> t2;
    Tensor<float> sat(Shape{1, 1, 1}, {20.f});
    CHECK(t2.value(t2.bce_with_logits(t2.leaf(sat), one)).data[0] <= 1e-8f);

    Tensor<float> bad = Tensor<float>::full(Shape{1, 1, 1}, 0.5f);
    CHECK_THROWS_AS(t2.bce_with_logits(t2.leaf(z), bad), std::invalid_argument);

    // -0.5/N per pixel on a larger map
    Tape<float> t3;
    Tensor<float> z9(Shape{1, 3, 3});
    Tensor<float> t9 = Tensor<float>::full(Shape{1, 3, 3}, 1.0f);
    const auto z9v = t3.leaf(z9, true);
    t3.backward(t3.bce_with_logits(z9v, t9));
    for (float g : t3.grad(z9v).data) CHECK(g == doctest::Approx(-0.5 / 9.0).epsilon(1e-6));
}

TEST_CASE("shape algebra over randomized shapes") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const int c = 1 + static_cast<int>(rng.uniform_int(4));
        const int h = 2 * (1 + static_cast<int>(rng.uniform_int(8)));
        const int w = 2 * (1 + static_cast<int>(rng.uniform_int(8)));
        const int k = 1 + 2 * static_cast<int>(rng.uniform_int(3));
        Tape<float> t;
        const auto x = t.leaf(rand_tensor(rng, Shape{c, h, w}, -1.f, 1.f));
        CHECK(t.value(t.maxpool2(x)).shape == Shape{c, h / 2, w / 2});
        CHECK(t.value(t.upsample2(x)).shape == Shape{c, 2 * h, 2 * w});
        if (k <= h && k <= w) {
            const auto kk = t.leaf(rand_tensor(rng, Shape{2, c, k, k}, -1.f, 1.f));
            CHECK(t.value(t.conv2d_valid(x, kk, Tape<float>::none())).shape ==
                  Shape{2, h - k + 1, w - k + 1});
        }
    }
}

TEST_CASE("determinism: identical inputs give bit-identical outputs and grads") {
    const auto run = [] {
        Rng rng(123);
        Tape<float> t;
        Parameter<float> k(Tensor<float>(Shape{2, 1, 3, 3}));
        for (auto& v : k.value.data) v = rng.uniform_f(-1.f, 1.f);
        const auto x = t.leaf(Tensor<float>::full(Shape{1, 8, 8}, 0.5f));
        const auto y = t.relu(t.conv2d_valid(x, t.param(k), Tape<float>::none()));
        const auto loss = t.sum(t.maxpool2(y));
        t.backward(loss);
        return std::make_pair(t.value(loss).data[0], k.grad.data);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}
