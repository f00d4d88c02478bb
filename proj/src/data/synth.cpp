#include <cmath>
#include <fstream>

#include "dunet/data.hpp"
#include "dunet/errors.hpp"
#include "dunet/kernels.hpp"
#include "dunet/rng.hpp"

namespace dunet {

namespace {

struct Ellipse {
    double cy, cx, ay, ax, rot;
};

bool inside(const Ellipse& e, int y, int x) {
    const double dy = y - e.cy, dx = x - e.cx;
    const double c = std::cos(e.rot), s = std::sin(e.rot);
    const double u = (dx * c + dy * s) / e.ax;
    const double v = (-dx * s + dy * c) / e.ay;
    return u * u + v * v <= 1.0;
}

} // namespace

std::vector<SynthSample> synth_generate(int count, std::uint64_t seed, int h, int w,
                                        double s_lo, double s_hi) {
    if (count < 1) throw std::invalid_argument("synth_generate: count must be >= 1");
    if (!(s_lo > 0.0) || !(s_hi >= s_lo))
        throw std::invalid_argument("synth_generate: need 0 < s_lo <= s_hi");
    if (h < 8 || w < 8)
        throw std::invalid_argument("synth_generate: degenerate size " + std::to_string(h) + "x" +
                                    std::to_string(w));

    Rng rng(seed);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    std::vector<SynthSample> out;
    out.reserve(static_cast<std::size_t>(count));

    for (int s = 0; s < count; ++s) {
        SynthSample ss;
        ss.sample.id = "sample_" + std::string(4 - std::min<std::size_t>(4, std::to_string(s).size()), '0') +
                       std::to_string(s);

        // background and lesion palettes, jittered per image; lesions are kept
        // small and dark so the correction's percentile window is anchored well
        // below the skin band
        const std::array<double, 3> bg{210.0 + rng.uniform(-12.0, 12.0),
                                       170.0 + rng.uniform(-12.0, 12.0),
                                       150.0 + rng.uniform(-12.0, 12.0)};
        const std::array<double, 3> lesion{48.0 + rng.uniform(-8.0, 8.0),
                                           15.0 + rng.uniform(-5.0, 5.0),
                                           15.0 + rng.uniform(-5.0, 5.0)};

        // lesion layout, re-rolled until the coverage fraction lands in [0.02, 0.40]
        Tensor<std::uint8_t> mask(Shape{h, w});
        const double min_dim = static_cast<double>(h < w ? h : w);
        int tries = 0;
        while (true) {
            if (++tries > 1000)
                throw DataError("synth_generate: could not satisfy coverage bounds");
            const int n_lesions = 1 + static_cast<int>(rng.uniform_int(3));
            std::vector<Ellipse> shapes;
            for (int l = 0; l < n_lesions; ++l) {
                Ellipse e;
                e.cy = rng.uniform(0.2, 0.8) * h;
                e.cx = rng.uniform(0.2, 0.8) * w;
                e.ay = rng.uniform(0.035, 0.07) * min_dim;
                e.ax = rng.uniform(0.035, 0.07) * min_dim;
                e.rot = rng.uniform(0.0, 3.141592653589793);
                shapes.push_back(e);
            }
            std::int64_t covered = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    std::uint8_t m = 0;
                    for (const Ellipse& e : shapes)
                        if (inside(e, y, x)) {
                            m = 1;
                            break;
                        }
                    mask.data[static_cast<std::size_t>(y) * w + x] = m;
                    covered += m;
                }
            const double frac = static_cast<double>(covered) / static_cast<double>(plane);
            if (frac >= 0.02 && frac <= 0.40) break;
        }

        // reflectance: palette + mild per-pixel texture noise
        Tensor<float> reflectance(Shape{3, h, w});
        for (int c = 0; c < 3; ++c)
            for (std::int64_t p = 0; p < plane; ++p) {
                const bool in_lesion = mask.data[static_cast<std::size_t>(p)] != 0;
                const double base = in_lesion ? lesion[static_cast<std::size_t>(c)]
                                              : bg[static_cast<std::size_t>(c)];
                reflectance.data[static_cast<std::size_t>(c * plane + p)] =
                    static_cast<float>(base + rng.uniform(-3.0, 3.0));
            }

        // smooth illumination: 4x4 grid, bilinearly upsampled
        Tensor<float> grid(Shape{1, 4, 4});
        for (auto& v : grid.data) v = rng.uniform_f(static_cast<float>(s_lo), static_cast<float>(s_hi));
        ss.illum = Tensor<float>(Shape{1, h, w});
        kern::bilinear_resize_forward(grid.ptr(), 1, 4, 4, ss.illum.ptr(), h, w);

        ss.sample.mask = std::move(mask);
        ss.flat_image = Tensor<float>(Shape{3, h, w});
        ss.sample.image = Tensor<float>(Shape{3, h, w});
        for (int c = 0; c < 3; ++c)
            for (std::int64_t p = 0; p < plane; ++p) {
                const float r = reflectance.data[static_cast<std::size_t>(c * plane + p)];
                const float flat = std::min(255.0f, std::max(0.0f, r));
                const float lit = std::min(255.0f, std::max(0.0f, ss.illum.data[static_cast<std::size_t>(p)] * r));
                ss.flat_image.data[static_cast<std::size_t>(c * plane + p)] = flat;
                ss.sample.image.data[static_cast<std::size_t>(c * plane + p)] = lit;
            }
        out.push_back(std::move(ss));
    }
    return out;
}

void write_synth_dataset(const std::vector<SynthSample>& samples, std::uint64_t seed,
                         double s_lo, double s_hi, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "masks");
    fs::create_directories(out_dir / "flat");
    for (const SynthSample& s : samples) {
        save_ppm(s.sample.image, out_dir / "images" / (s.sample.id + ".ppm"));
        save_mask(s.sample.mask, out_dir / "masks" / (s.sample.id + ".pgm"));
        save_ppm(s.flat_image, out_dir / "flat" / (s.sample.id + ".ppm"));
    }
    std::ofstream meta(out_dir / "meta.txt");
    if (!meta) throw DataError((out_dir / "meta.txt").string() + ": cannot open for writing");
    const int h = samples.empty() ? 0 : samples[0].sample.image.shape[1];
    const int w = samples.empty() ? 0 : samples[0].sample.image.shape[2];
    meta << "seed=" << seed << "\n"
         << "count=" << samples.size() << "\n"
         << "size=" << h << "x" << w << "\n"
         << "illum=" << s_lo << "," << s_hi << "\n";
}

} // namespace dunet
