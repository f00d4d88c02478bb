#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dunet/data.hpp"
#include "dunet/metrics.hpp"
#include "dunet/rng.hpp"
#include "dunet/train.hpp"

using namespace dunet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& name) : path(fs::temp_directory_path() / ("dunet_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

DUNetConfig tiny_config(Variant v) {
    DUNetConfig c;
    c.variant = v;
    c.base_channels = 4;
    c.depth = 2;
    c.in_h = 16;
    c.in_w = 16;
    c.illum.sigmas = {0.8, 1.5, 2.5};
    return c;
}

std::vector<Sample> tiny_dataset(int count, std::uint64_t seed) {
    std::vector<Sample> out;
    for (const auto& s : synth_generate(count, seed, 16, 16, 0.7, 1.4)) out.push_back(s.sample);
    return out;
}

std::vector<char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("iou identities") {
    Tensor<std::uint8_t> a(Shape{2, 3}, {1, 0, 1, 0, 0, 1});
    Tensor<std::uint8_t> b(Shape{2, 3}, {0, 1, 0, 1, 0, 0});
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, b) == 0.0); // disjoint, both nonempty
    CHECK(iou(b, a) == iou(a, b));

    Tensor<std::uint8_t> empty(Shape{2, 3});
    CHECK(iou(empty, empty) == 1.0);

    // TP=1, FP=1, FN=1
    Tensor<std::uint8_t> p(Shape{1, 3}, {1, 1, 0});
    Tensor<std::uint8_t> g(Shape{1, 3}, {1, 0, 1});
    CHECK(iou(p, g) == doctest::Approx(1.0 / 3.0));

    Tensor<std::uint8_t> other(Shape{3, 2});
    CHECK_THROWS_AS(iou(a, other), std::invalid_argument);
}

TEST_CASE("iou symmetry over random masks") {
    Rng rng(51);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor<std::uint8_t> a(Shape{8, 8}), b(Shape{8, 8});
        for (auto& v : a.data) v = rng.uniform() < 0.3 ? 1 : 0;
        for (auto& v : b.data) v = rng.uniform() < 0.3 ? 1 : 0;
        CHECK(iou(a, b) == iou(b, a));
        CHECK(iou(a, a) == 1.0);
        CHECK(iou(a, b) >= 0.0);
        CHECK(iou(a, b) <= 1.0);
    }
}

TEST_CASE("mask_from_logits thresholding") {
    Tensor<float> z = Tensor<float>::full(Shape{1, 4, 4}, -40.0f);
    const auto saturated = mask_from_logits(z, 0.5);
    CHECK(std::count(saturated.data.begin(), saturated.data.end(), 1) == 0);
    const auto all_fg = mask_from_logits(z, 0.0);
    CHECK(std::count(all_fg.data.begin(), all_fg.data.end(), 1) == 16);

    Rng rng(52);
    Tensor<float> r(Shape{1, 6, 6});
    for (auto& v : r.data) v = rng.uniform_f(-4.f, 4.f);
    std::int64_t prev = 36;
    for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const auto m = mask_from_logits(r, thr);
        const std::int64_t on = std::count(m.data.begin(), m.data.end(), 1);
        CHECK(on <= prev); // raising the threshold never adds pixels
        prev = on;
    }
}

TEST_CASE("evaluate: self-predicted masks give mIoU 1, ordering is irrelevant") {
    auto ds = tiny_dataset(4, 60);
    Model m(tiny_config(Variant::unet), 1);
    for (auto& s : ds) s.mask = predict_mask(m, s, 0.5);
    const EvalReport rep = evaluate(m, ds, 0.5, "self");
    CHECK(rep.miou == doctest::Approx(1.0));
    CHECK(rep.records.size() == 4);

    std::reverse(ds.begin(), ds.end());
    const EvalReport rep2 = evaluate(m, ds, 0.5, "self");
    REQUIRE(rep2.records.size() == rep.records.size());
    for (std::size_t i = 0; i < rep.records.size(); ++i) {
        CHECK(rep.records[i].id == rep2.records[i].id);
        CHECK(rep.records[i].iou == rep2.records[i].iou);
    }

    // a fresh random model stays in range on real masks
    const auto ds2 = tiny_dataset(4, 61);
    const EvalReport rep3 = evaluate(m, ds2, 0.5);
    CHECK(rep3.miou >= 0.0);
    CHECK(rep3.miou <= 1.0);
}

TEST_CASE("exceed_rate") {
    EvalReport a, b;
    for (int i = 0; i < 5; ++i) {
        const std::string id = "s" + std::to_string(i);
        a.records.push_back({id, 0.5 + 0.05 * i});
        b.records.push_back({id, 0.4});
    }
    CHECK(exceed_rate(a, a) == 0.0); // strict inequality
    CHECK(exceed_rate(a, b) == 1.0);
    CHECK(exceed_rate(b, a) == 0.0);
    CHECK(exceed_rate(a, b) + exceed_rate(b, a) <= 1.0);

    EvalReport c = b;
    c.records[2].id = "other";
    CHECK_THROWS_AS(exceed_rate(a, c), DataError);
}

TEST_CASE("report serialization round-trips and is byte-stable") {
    TempDir dir("report");
    auto ds = tiny_dataset(3, 62);
    Model m(tiny_config(Variant::unet), 2);
    const EvalReport rep = evaluate(m, ds, 0.5, "m");
    save_report(rep, dir.path / "a.txt");
    save_report(rep, dir.path / "b.txt");
    CHECK(file_bytes(dir.path / "a.txt") == file_bytes(dir.path / "b.txt"));

    const EvalReport back = load_report(dir.path / "a.txt");
    REQUIRE(back.records.size() == rep.records.size());
    for (std::size_t i = 0; i < rep.records.size(); ++i) {
        CHECK(back.records[i].id == rep.records[i].id);
        CHECK(back.records[i].iou == doctest::Approx(rep.records[i].iou).epsilon(1e-9));
    }
    CHECK(back.miou == doctest::Approx(rep.miou).epsilon(1e-9));
}

TEST_CASE("train: lr 0 leaves parameters bit-identical") {
    const auto ds = tiny_dataset(4, 63);
    Model m(tiny_config(Variant::unet), 3);
    std::vector<Tensor<float>> before;
    for (const auto* p : m.parameters()) before.push_back(p->value);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 2;
    tc.lr = 0.0;
    const TrainResult r = train(m, ds, ds, tc);
    CHECK(r.steps == 4);
    const auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i]->value.data == before[i].data);
}

TEST_CASE("train: determinism across identical runs, checkpoints byte-identical") {
    TempDir dir("det");
    const auto ds = tiny_dataset(4, 64);
    const auto run = [&](const fs::path& out) {
        Model m(tiny_config(Variant::dunet), 11);
        TrainConfig tc;
        tc.epochs = 2;
        tc.batch_size = 2;
        tc.lr = 1e-3;
        tc.seed = 11;
        const TrainResult r = train(m, ds, ds, tc);
        save_checkpoint(out, m, static_cast<std::uint64_t>(r.steps), 11);
    };
    run(dir.path / "a.ckpt");
    run(dir.path / "b.ckpt");
    CHECK(file_bytes(dir.path / "a.ckpt") == file_bytes(dir.path / "b.ckpt"));
}

TEST_CASE("train: non-finite loss aborts with epoch and step context") {
    const auto ds = tiny_dataset(2, 65);
    Model m(tiny_config(Variant::unet), 4);
    m.parameters()[0]->value.data[0] = std::nanf(""); // poison a weight
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 2;
    try {
        train(m, ds, ds, tc);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch 1") != std::string::npos);
        CHECK(msg.find("step") != std::string::npos);
    }
}

TEST_CASE("train: weak monotonic loss trend while overfitting") {
    const auto ds = tiny_dataset(2, 66);
    Model m(tiny_config(Variant::unet), 5);
    TrainConfig tc;
    tc.epochs = 9;
    tc.batch_size = 2;
    tc.lr = 2e-3;
    tc.eval_every = 3;
    const TrainResult r = train(m, ds, ds, tc);
    REQUIRE(r.log.size() == 9);
    CHECK(r.log[2].mean_loss >= r.log[8].mean_loss); // epoch 3 vs epoch 9
    CHECK(r.best_val_miou >= 0.0);
    double best_seen = 0.0;
    for (const auto& row : r.log)
        if (row.has_val) best_seen = std::max(best_seen, row.val_miou);
    CHECK(r.best_val_miou == doctest::Approx(best_seen)); // maxIoU is the best validation pass
}

TEST_CASE("checkpoint round-trip preserves forward outputs bit-exactly") {
    TempDir dir("ckpt");
    Rng rng(53);
    Model m(tiny_config(Variant::dunet), 21);
    // move weights off their init so the test is not trivial
    for (auto* p : m.parameters())
        for (auto& v : p->value.data) v += rng.uniform_f(-0.01f, 0.01f);
    save_checkpoint(dir.path / "m.ckpt", m, 123, 21);

    std::uint64_t step = 0, seed = 0;
    Model back = load_checkpoint(dir.path / "m.ckpt", &step, &seed);
    CHECK(step == 123);
    CHECK(seed == 21);
    CHECK(back.config().variant == Variant::dunet);

    for (int trial = 0; trial < 5; ++trial) {
        Tensor<float> img(Shape{3, 16, 16});
        for (auto& v : img.data) v = rng.uniform_f(0.f, 255.f);
        const Tensor<float> a = m.forward(img);
        const Tensor<float> b = back.forward(img);
        CHECK(a.data == b.data);
    }
}

TEST_CASE("checkpoint loader rejects foreign and truncated files") {
    TempDir dir("ckbad");
    {
        std::ofstream out(dir.path / "junk.ckpt", std::ios::binary);
        out << "NOTACKPT--------";
    }
    CHECK_THROWS_AS(load_checkpoint(dir.path / "junk.ckpt"), DataError);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.ckpt"), DataError);

    Model m(tiny_config(Variant::unet), 0);
    save_checkpoint(dir.path / "ok.ckpt", m, 1, 0);
    const auto bytes = file_bytes(dir.path / "ok.ckpt");
    {
        std::ofstream out(dir.path / "short.ckpt", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(dir.path / "short.ckpt"), DataError);
}
