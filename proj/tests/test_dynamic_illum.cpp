#include <doctest.h>

#include <cmath>

#include "dunet/data.hpp"
#include "dunet/dynamic_illum.hpp"
#include "dunet/retinex.hpp"
#include "dunet/rng.hpp"

using namespace dunet;

namespace {

CorrectionParams desk_params() {
    CorrectionParams p;
    p.sigmas = {1.0, 2.5, 6.0};
    return p;
}

} // namespace

TEST_CASE("init: kernels equal the Gaussian filters bit-exactly") {
    const CorrectionParams p = desk_params();
    DynamicIllumModule m(p);
    for (int i = 0; i < 3; ++i) {
        const double sigma = p.sigmas[static_cast<std::size_t>(i)];
        const int r = static_cast<int>(std::ceil(3.0 * sigma));
        const Tensor<double> g = gaussian_kernel({sigma, r});
        const Parameter<float>& k = m.kernel(i);
        CHECK(k.value.shape == Shape{1, 1, 2 * r + 1, 2 * r + 1});
        for (std::size_t j = 0; j < g.data.size(); ++j)
            CHECK(k.value.data[j] == static_cast<float>(g.data[j]));
    }
}

TEST_CASE("init: odd sizes from the 3-sigma truncation") {
    CorrectionParams p;
    p.sigmas = {12.0, 80.0, 250.0};
    DynamicIllumModule m(p);
    CHECK(m.kernel(0).value.shape[3] == 2 * 36 + 1);
    CHECK(m.kernel(1).value.shape[3] == 2 * 240 + 1);
    CHECK(m.kernel(2).value.shape[3] == 2 * 750 + 1);
    for (int i = 0; i < 3; ++i) CHECK(m.kernel(i).value.shape[3] % 2 == 1);
}

TEST_CASE("init determinism: two modules from the same params agree") {
    const CorrectionParams p = desk_params();
    DynamicIllumModule a(p), b(p);
    for (int i = 0; i < 3; ++i) CHECK(a.kernel(i).value.data == b.kernel(i).value.data);
}

TEST_CASE("freshly initialized forward matches the static pipeline") {
    const CorrectionParams p = desk_params();
    DynamicIllumModule m(p);
    const auto samples = synth_generate(3, 5, 32, 40, 0.6, 1.4);
    for (const auto& s : samples) {
        const Tensor<float> dynamic_out = m.forward(s.sample.image);
        const Tensor<float> static_out = correct(s.sample.image, p);
        CHECK(dynamic_out.shape == s.sample.image.shape);
        double max_abs = 0.0;
        for (std::size_t i = 0; i < dynamic_out.data.size(); ++i)
            max_abs = std::max(max_abs,
                               static_cast<double>(std::abs(dynamic_out.data[i] - static_out.data[i])));
        CHECK(max_abs <= 1e-4 * 255.0);
    }
}

TEST_CASE("deterministic forward") {
    const CorrectionParams p = desk_params();
    DynamicIllumModule m(p);
    const auto samples = synth_generate(1, 6, 24, 32, 0.7, 1.3);
    const Tensor<float> a = m.forward(samples[0].sample.image);
    const Tensor<float> b = m.forward(samples[0].sample.image);
    CHECK(a.data == b.data);
}

TEST_CASE("parameters: exactly three kernels in scale order") {
    const CorrectionParams p = desk_params();
    DynamicIllumModule m(p);
    const auto params = m.parameters();
    CHECK(params.size() == 3);
    std::int64_t total = 0;
    for (const auto* q : params) total += q->value.numel();
    std::int64_t expect = 0;
    for (double sigma : p.sigmas) {
        const std::int64_t k = 2 * static_cast<std::int64_t>(std::ceil(3.0 * sigma)) + 1;
        expect += k * k;
    }
    CHECK(total == expect);
    CHECK(params[0]->value.shape[3] < params[1]->value.shape[3]);
    CHECK(params[1]->value.shape[3] < params[2]->value.shape[3]);
}

TEST_CASE("gradients reach all kernels, and one step moves them") {
    const CorrectionParams p = desk_params();
    DynamicIllumModule m(p);
    const auto samples = synth_generate(1, 7, 24, 32, 0.6, 1.5);

    Tape<float> tape;
    const auto img = tape.leaf(samples[0].sample.image, false, "image");
    const auto out = m.build_graph(tape, img);
    Rng rng(9);
    Tensor<float> w(tape.value(out).shape);
    for (auto& v : w.data) v = rng.uniform_f(-1.f, 1.f);
    tape.backward(tape.weighted_sum(out, w));

    const std::array<Tensor<float>, 3> init{m.kernel(0).value, m.kernel(1).value, m.kernel(2).value};
    for (int i = 0; i < 3; ++i) {
        double norm = 0.0;
        for (float g : m.kernel(i).grad.data) norm += static_cast<double>(g) * g;
        INFO("kernel ", i);
        CHECK(norm > 0.0);
    }
    rmsprop_step<float>(m.parameters(), 1e-4f, 0.99f, 1e-8f);
    bool moved = false;
    for (int i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < init[static_cast<std::size_t>(i)].data.size(); ++j)
            if (m.kernel(i).value.data[j] != init[static_cast<std::size_t>(i)].data[j]) moved = true;
    CHECK(moved);
}

TEST_CASE("non-finite intermediates raise errors naming the stage") {
    const CorrectionParams p = desk_params();
    DynamicIllumModule m(p);
    m.kernel(2).value.data[0] = std::nanf("");
    const auto samples = synth_generate(1, 8, 24, 32, 0.8, 1.2);
    try {
        m.forward(samples[0].sample.image);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("illum/") != std::string::npos);
    }
}

TEST_CASE("negative-going kernels keep the forward finite via the blur clamp") {
    const CorrectionParams p = desk_params();
    DynamicIllumModule m(p);
    for (auto& v : m.kernel(2).value.data) v = -1.0f;
    const auto samples = synth_generate(1, 8, 24, 32, 0.8, 1.2);
    const Tensor<float> out = m.forward(samples[0].sample.image);
    for (float v : out.data) CHECK(std::isfinite(v));
}

TEST_CASE("kernel too large for the enlarge cap is rejected") {
    CorrectionParams p;
    p.sigmas = {1.0, 2.0, 80.0}; // k = 481 exceeds 2*32+1 on a 24x32 image
    DynamicIllumModule m(p);
    const auto samples = synth_generate(1, 9, 24, 32, 0.9, 1.1);
    CHECK_THROWS_AS(m.forward(samples[0].sample.image), std::invalid_argument);
}
