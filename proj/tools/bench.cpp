// Times the OpenMP kernels against the serial reference implementations on the
// shapes the training loop actually runs, and reports the agreement between the
// two paths.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "dunet/gaussian.hpp"
#include "dunet/kernels.hpp"
#include "dunet/reference.hpp"
#include "dunet/rng.hpp"
#include "dunet/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm-up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
    return m;
}

void fill(dunet::Rng& rng, std::vector<float>& v, float lo, float hi) {
    for (auto& x : v) x = rng.uniform_f(lo, hi);
}

void report(const char* name, double parallel_ms, double serial_ms, double diff) {
    std::printf("%-34s %10.2f ms %10.2f ms %8.2fx   max|d|=%.3e\n", name, parallel_ms, serial_ms,
                serial_ms / parallel_ms, diff);
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP\n");
#endif
    std::printf("%-34s %13s %13s %9s\n", "kernel", "parallel", "serial", "speedup");
    dunet::Rng rng(7);

    { // the illumination blur that dominates desk-scale training (sigma 30)
        const int h = 276, w = 308, k = 181;
        std::vector<float> in(static_cast<std::size_t>(h) * w), kern(static_cast<std::size_t>(k) * k);
        fill(rng, in, 0.f, 255.f);
        fill(rng, kern, 0.f, 1e-4f);
        std::vector<float> out_p(static_cast<std::size_t>(h - k + 1) * (w - k + 1)), out_s(out_p.size());
        const double tp = time_ms([&] { dunet::kern::conv2d_valid(in.data(), 1, h, w, kern.data(), 1, k, static_cast<const float*>(nullptr), out_p.data()); }, 3);
        const double ts = time_ms([&] { dunet::ref::conv2d_valid_serial(in.data(), 1, h, w, kern.data(), 1, k, static_cast<const float*>(nullptr), out_s.data()); }, 3);
        report("conv2d 1x276x308 k=181", tp, ts, max_abs_diff(out_p, out_s));
    }

    { // an encoder-interior convolution
        const int c = 32, h = 48, w = 64, co = 32, k = 3;
        std::vector<float> in(static_cast<std::size_t>(c) * h * w);
        std::vector<float> kern(static_cast<std::size_t>(co) * c * k * k), bias(co);
        fill(rng, in, -1.f, 1.f);
        fill(rng, kern, -0.1f, 0.1f);
        fill(rng, bias, -0.1f, 0.1f);
        std::vector<float> out_p(static_cast<std::size_t>(co) * (h - 2) * (w - 2)), out_s(out_p.size());
        const double tp = time_ms([&] { dunet::kern::conv2d_valid(in.data(), c, h, w, kern.data(), co, k, bias.data(), out_p.data()); }, 10);
        const double ts = time_ms([&] { dunet::ref::conv2d_valid_serial(in.data(), c, h, w, kern.data(), co, k, bias.data(), out_s.data()); }, 10);
        report("conv2d 32x48x64 k=3 co=32", tp, ts, max_abs_diff(out_p, out_s));
    }

    { // separable blur against the dense kernel on the same data
        const int h = 276, w = 308;
        const dunet::GaussianKernelSpec spec{10.0, 30};
        const int k = spec.size();
        const auto taps = dunet::gaussian_taps_1d(spec);
        const dunet::Tensor<double> g2 = dunet::gaussian_kernel(spec);
        std::vector<float> kern2(g2.data.size());
        for (std::size_t i = 0; i < kern2.size(); ++i) kern2[i] = static_cast<float>(g2.data[i]);
        std::vector<float> in(static_cast<std::size_t>(h) * w);
        fill(rng, in, 0.f, 255.f);
        std::vector<float> out_p(static_cast<std::size_t>(h - k + 1) * (w - k + 1)), out_s(out_p.size());
        const double tp = time_ms([&] { dunet::kern::separable_valid_blur(in.data(), 1, h, w, taps.data(), k, out_p.data()); }, 5);
        const double ts = time_ms([&] { dunet::ref::conv2d_valid_serial(in.data(), 1, h, w, kern2.data(), 1, k, static_cast<const float*>(nullptr), out_s.data()); }, 5);
        report("separable blur k=61 vs dense", tp, ts, max_abs_diff(out_p, out_s));
    }

    { // pooling and upsampling on a mid-level feature map
        const int c = 16, h = 96, w = 128;
        std::vector<float> in(static_cast<std::size_t>(c) * h * w);
        fill(rng, in, -1.f, 1.f);
        std::vector<float> out_p(in.size() / 4), out_s(out_p.size());
        const double tp = time_ms([&] { dunet::kern::maxpool2_forward(in.data(), c, h, w, out_p.data()); }, 50);
        const double ts = time_ms([&] { dunet::ref::maxpool2_serial(in.data(), c, h, w, out_s.data()); }, 50);
        report("maxpool2 16x96x128", tp, ts, max_abs_diff(out_p, out_s));

        std::vector<float> up_p(in.size() * 4), up_s(up_p.size());
        const double tp2 = time_ms([&] { dunet::kern::upsample2_forward(in.data(), c, h, w, up_p.data()); }, 50);
        const double ts2 = time_ms([&] { dunet::ref::upsample2_serial(in.data(), c, h, w, up_s.data()); }, 50);
        report("upsample2 16x96x128", tp2, ts2, max_abs_diff(up_p, up_s));
    }

    { // the enlarge step of the correction pipeline
        const int h = 96, w = 128, oh = 276, ow = 308;
        std::vector<float> in(static_cast<std::size_t>(h) * w);
        fill(rng, in, 0.f, 255.f);
        std::vector<float> out_p(static_cast<std::size_t>(oh) * ow), out_s(out_p.size());
        const double tp = time_ms([&] { dunet::kern::bilinear_resize_forward(in.data(), 1, h, w, out_p.data(), oh, ow); }, 50);
        const double ts = time_ms([&] { dunet::ref::bilinear_resize_serial(in.data(), 1, h, w, out_s.data(), oh, ow); }, 50);
        report("bilinear resize 96x128->276x308", tp, ts, max_abs_diff(out_p, out_s));
    }

    return 0;
}
