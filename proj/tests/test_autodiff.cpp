#include <doctest.h>

#include <cmath>

#include "dunet/gradcheck.hpp"
#include "dunet/rng.hpp"
#include "dunet/tape.hpp"

using namespace dunet;

TEST_CASE("backward of sum gives all-ones; disconnected parameters stay zero") {
    Tape<float> t;
    Parameter<float> used(Tensor<float>::full(Shape{2, 3}, 1.5f));
    Parameter<float> unused(Tensor<float>::full(Shape{2, 2}, 1.5f));
    const auto x = t.param(used);
    t.param(unused); // recorded but not reachable from the loss
    t.backward(t.sum(x));
    for (float g : used.grad.data) CHECK(g == 1.0f);
    for (float g : unused.grad.data) CHECK(g == 0.0f);
    CHECK(used.has_grad);
    CHECK_FALSE(unused.has_grad);
}

TEST_CASE("backward rejects non-scalar losses") {
    Tape<float> t;
    const auto x = t.leaf(Tensor<float>::full(Shape{2, 2}, 1.0f), true);
    CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("repeated backward calls accumulate parameter gradients") {
    Parameter<float> p(Tensor<float>::full(Shape{3}, 2.0f));
    {
        Tape<float> t;
        t.backward(t.sum(t.param(p)));
    }
    {
        Tape<float> t;
        t.backward(t.scale(t.sum(t.param(p)), 2.0f));
    }
    for (float g : p.grad.data) CHECK(g == 3.0f); // 1 + 2
}

TEST_CASE("linearity: backward of a sum equals the sum of backwards") {
    Rng rng(17);
    const auto make_param = [&] {
        Parameter<float> p(Tensor<float>(Shape{1, 1, 3, 3}));
        for (auto& v : p.value.data) v = rng.uniform_f(-1.f, 1.f);
        return p;
    };
    Parameter<float> p1 = make_param();
    Parameter<float> p2 = make_param();
    p2.value = p1.value;
    Tensor<float> img(Shape{1, 6, 6});
    for (auto& v : img.data) v = rng.uniform_f(0.f, 1.f);

    // two separate losses, two backwards
    for (int rep = 0; rep < 2; ++rep) {
        Tape<float> t;
        auto y = t.conv2d_valid(t.leaf(img), t.param(p1), Tape<float>::none());
        t.backward(rep == 0 ? t.sum(y) : t.scale(t.sum(y), 3.0f));
    }
    // single combined loss
    {
        Tape<float> t;
        auto y = t.conv2d_valid(t.leaf(img), t.param(p2), Tape<float>::none());
        auto s = t.sum(y);
        t.backward(t.add(s, t.scale(s, 3.0f)));
    }
    for (std::size_t i = 0; i < p1.grad.data.size(); ++i)
        CHECK(p1.grad.data[i] == doctest::Approx(p2.grad.data[i]).epsilon(1e-5));
}

TEST_CASE("rmsprop update rule") {
    // hand evaluation: p=1, g=1, s=0, decay=0.99, lr=1e-4 -> p ~= 0.999
    Parameter<float> p(Tensor<float>::full(Shape{1}, 1.0f));
    p.grad.data[0] = 1.0f;
    p.has_grad = true;
    rmsprop_step<float>({&p}, 1e-4f, 0.99f, 1e-8f);
    CHECK(p.value.data[0] == doctest::Approx(0.999).epsilon(1e-5));
    CHECK(p.rms.data[0] == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(p.grad.data[0] == 0.0f);
    CHECK_FALSE(p.has_grad);
}

TEST_CASE("rmsprop: zero gradients leave parameters unchanged") {
    Parameter<float> p(Tensor<float>::full(Shape{4}, 2.5f));
    p.has_grad = true; // populated with zeros
    rmsprop_step<float>({&p}, 0.1f, 0.99f, 1e-8f);
    for (float v : p.value.data) CHECK(v == 2.5f);
}

TEST_CASE("rmsprop requires populated gradients") {
    Parameter<float> p(Tensor<float>::full(Shape{2}, 1.0f));
    CHECK_THROWS_AS(rmsprop_step<float>({&p}, 0.1f, 0.99f, 1e-8f), std::invalid_argument);
}

TEST_CASE("rmsprop determinism") {
    const auto run = [] {
        Parameter<float> p(Tensor<float>::full(Shape{8}, 1.25f));
        Rng rng(3);
        for (auto& g : p.grad.data) g = rng.uniform_f(-1.f, 1.f);
        p.has_grad = true;
        rmsprop_step<float>({&p}, 1e-3f, 0.99f, 1e-8f);
        return p.value.data;
    };
    CHECK(run() == run());
}

TEST_CASE("gradcheck suite passes at unit-test depth") {
    const auto rows = gradcheck_suite(3);
    for (const auto& r : rows) {
        INFO(r.op, " err=", r.max_err, " threshold=", r.threshold);
        CHECK(r.pass);
    }
    CHECK(gradcheck_all_pass(rows));
}

TEST_CASE("gradcheck harness catches an injected sign-flipped backward") {
    const auto rows = gradcheck_suite(1, true);
    bool saw_fault = false;
    for (const auto& r : rows)
        if (r.op.find("injected") != std::string::npos) {
            saw_fault = true;
            CHECK_FALSE(r.pass);
        }
    CHECK(saw_fault);
    CHECK_FALSE(gradcheck_all_pass(rows));
}

TEST_CASE("whole-graph finite differences: conv -> relu -> pool -> bce") {
    // the suite row runs this composite in 64-bit mode; pin the threshold here too
    const auto rows = gradcheck_suite(2);
    for (const auto& r : rows)
        if (r.op.find("composite conv") != std::string::npos) CHECK(r.max_err <= 1e-3);
}
