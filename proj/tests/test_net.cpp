#include <doctest.h>

#include <cmath>

#include "dunet/data.hpp"
#include "dunet/net.hpp"
#include "dunet/retinex.hpp"
#include "dunet/rng.hpp"

using namespace dunet;

namespace {

DUNetConfig desk_config(Variant v, int h = 32, int w = 32) {
    DUNetConfig c;
    c.variant = v;
    c.base_channels = 4;
    c.depth = 3;
    c.in_h = h;
    c.in_w = w;
    c.illum.sigmas = {1.0, 2.0, 4.0};
    return c;
}

Tensor<float> random_image(Rng& rng, int h, int w) {
    Tensor<float> img(Shape{3, h, w});
    for (auto& v : img.data) v = rng.uniform_f(0.f, 255.f);
    return img;
}

// closed-form parameter count mirroring the layer recipe
std::int64_t expected_count(const DUNetConfig& c) {
    const auto conv = [](std::int64_t cin, std::int64_t cout, std::int64_t k) {
        return cout * cin * k * k + cout;
    };
    const std::int64_t b = c.base_channels, d = c.depth;
    const std::int64_t branches = c.dual() ? 2 : 1;
    std::int64_t n = 0;
    for (std::int64_t l = 0; l < d; ++l) {
        const std::int64_t cin = l == 0 ? 3 : b << (l - 1);
        const std::int64_t cl = b << l;
        n += branches * (conv(cin, cl, 3) + conv(cl, cl, 3));
    }
    n += branches * (conv(b << (d - 1), b << d, 3) + conv(b << d, b << d, 3));
    for (std::int64_t l = d - 1; l >= 0; --l) {
        const std::int64_t cl = b << l;
        const std::int64_t below = l == d - 1 ? branches * (b << d) : b << (l + 1);
        const std::int64_t skip = branches * cl;
        n += conv(below, cl, 3) + conv(cl + skip, cl, 3) + conv(cl, cl, 3);
    }
    n += conv(b, 1, 1);
    if (c.has_illum())
        for (double sigma : c.illum.sigmas) {
            const std::int64_t k = 2 * static_cast<std::int64_t>(std::ceil(3.0 * sigma)) + 1;
            n += k * k;
        }
    return n;
}

} // namespace

TEST_CASE("config validation") {
    DUNetConfig c = desk_config(Variant::unet);
    CHECK_NOTHROW(c.validate());
    c.in_h = 30; // not divisible by 8
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = desk_config(Variant::unet);
    c.base_channels = 1024;
    c.depth = 8;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument); // memory cap
    CHECK_THROWS_AS(variant_from_string("resnet"), std::invalid_argument);
}

TEST_CASE("bottleneck channel arithmetic: desk config") {
    DUNetConfig c = desk_config(Variant::unet);
    c.base_channels = 8;
    // bottleneck = base * 2^depth channels at 1/2^depth resolution
    CHECK((c.base_channels << c.depth) == 64);
    Model m(c, 0);
    // the decoder's first stage consumes the bottleneck; parameter bank agrees
    // with the closed-form recipe, which pins the channel plan
    CHECK(m.parameter_count() == expected_count(c));
}

TEST_CASE("same seed gives an identical parameter bank") {
    const DUNetConfig c = desk_config(Variant::dunet);
    Model a(c, 17), b(c, 17);
    const auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);

    Model other(c, 18);
    bool differs = false;
    const auto po = other.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (pa[i]->value.data != po[i]->value.data) differs = true;
    CHECK(differs);
}

TEST_CASE("forward shape contract for every variant") {
    Rng rng(31);
    const Tensor<float> img = random_image(rng, 32, 32);
    for (Variant v : {Variant::unet, Variant::dicu, Variant::dvsfn, Variant::dunet}) {
        Model m(desk_config(v), 3);
        Tensor<float> logits;
        if (v == Variant::dvsfn) {
            const Tensor<float> corr = correct(img, m.config().illum);
            logits = m.forward(img, &corr);
        } else {
            logits = m.forward(img);
        }
        INFO(to_string(v));
        CHECK(logits.shape == Shape{1, 32, 32});
        for (float z : logits.data) CHECK(std::isfinite(z));
    }
}

TEST_CASE("forward arity errors") {
    Rng rng(32);
    const Tensor<float> img = random_image(rng, 32, 32);
    Model u(desk_config(Variant::unet), 0);
    CHECK_THROWS_AS(u.forward(img, &img), std::invalid_argument);
    Model d(desk_config(Variant::dvsfn), 0);
    CHECK_THROWS_AS(d.forward(img), std::invalid_argument);
    Model du(desk_config(Variant::dunet), 0);
    CHECK_NOTHROW(du.forward(img, &img)); // corrected argument ignored
    // spatial mismatch
    const Tensor<float> odd = random_image(rng, 24, 20);
    CHECK_THROWS_AS(u.forward(odd), std::invalid_argument);
}

TEST_CASE("dvsfn fed a duplicated input is deterministic, finite and pinned") {
    Rng rng(33);
    const Tensor<float> img = random_image(rng, 32, 32);
    Model m(desk_config(Variant::dvsfn), 7);
    const Tensor<float> a = m.forward(img, &img);
    const Tensor<float> b = m.forward(img, &img);
    CHECK(a.data == b.data);
    double sum = 0.0;
    for (float z : a.data) {
        CHECK(std::isfinite(z));
        sum += static_cast<double>(z);
    }
    // regression pin: frozen from direct evaluation at seed 7 / image rng 33
    CHECK(sum == doctest::Approx(1.0234191864).epsilon(1e-3));
    CHECK(a.data[0] == doctest::Approx(0.0002858007).epsilon(1e-2));
}

TEST_CASE("parameter counts: dual exceeds single, closed form matches enumeration") {
    for (Variant v : {Variant::unet, Variant::dicu, Variant::dvsfn, Variant::dunet}) {
        const DUNetConfig c = desk_config(v);
        Model m(c, 1);
        INFO(to_string(v));
        CHECK(m.parameter_count() == expected_count(c));
        Model m2(c, 99);
        CHECK(m2.parameter_count() == m.parameter_count()); // deterministic per config
    }
    Model single(desk_config(Variant::unet), 0);
    Model dual(desk_config(Variant::dunet), 0);
    CHECK(dual.parameter_count() > single.parameter_count());
}

TEST_CASE("dunet: loss gradients flow into the illumination kernels") {
    const auto samples = synth_generate(1, 11, 32, 32, 0.6, 1.5);
    Model m(desk_config(Variant::dunet), 5);
    Tape<float> tape;
    const auto img = tape.leaf(samples[0].sample.image, false, "input");
    const auto logits = m.forward_graph(tape, img, std::nullopt);
    Tensor<float> target(Shape{1, 32, 32});
    for (std::size_t i = 0; i < target.data.size(); ++i)
        target.data[i] = samples[0].sample.mask.data[i] ? 1.0f : 0.0f;
    tape.backward(tape.bce_with_logits(logits, target));
    for (int i = 0; i < 3; ++i) {
        double norm = 0.0;
        for (float g : m.illum()->kernel(i).grad.data) norm += static_cast<double>(g) * g;
        INFO("kernel ", i);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("resolution invariant: logits match input resolution for valid sizes") {
    Rng rng(34);
    Model m(desk_config(Variant::unet), 2);
    for (int hw : {8, 16, 24, 40}) {
        const Tensor<float> img = random_image(rng, hw, hw);
        CHECK(m.forward(img).shape == Shape{1, hw, hw});
    }
}

TEST_CASE("encoder independence: only dual variants respond to encoder-B weights") {
    Rng rng(35);
    const Tensor<float> img = random_image(rng, 32, 32);
    const DUNetConfig c = desk_config(Variant::dvsfn);
    Model m(c, 4);
    const Tensor<float> corr = correct(img, c.illum);
    const Tensor<float> before = m.forward(img, &corr);

    // encoder B starts right after encoder A and its bottleneck in the bank:
    // depth levels x 2 convs x (w,b) plus 4 bottleneck tensors
    Model single(desk_config(Variant::unet), 4);
    const std::size_t enc_b_start = static_cast<std::size_t>(4 * c.depth + 4);
    const auto params = m.parameters();
    REQUIRE(params.size() > enc_b_start);
    params[enc_b_start]->value.data[0] += 0.25f; // first encoder-B tensor
    const Tensor<float> after = m.forward(img, &corr);
    CHECK(before.data != after.data);

    // the single-variant model is untouched by construction: same bank as before
    Model single2(desk_config(Variant::unet), 4);
    const auto p1 = single.parameters(), p2 = single2.parameters();
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value.data == p2[i]->value.data);
}
