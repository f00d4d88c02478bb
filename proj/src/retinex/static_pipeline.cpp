#include "dunet/retinex.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dunet/errors.hpp"
#include "dunet/kernels.hpp"

namespace dunet {

void CorrectionParams::validate() const {
    for (double s : sigmas)
        if (s <= 0.0) throw std::invalid_argument("CorrectionParams: sigma must be positive");
    if (!(s1 >= 0.0 && s1 < 0.5) || !(s2 >= 0.0 && s2 < 0.5))
        throw std::invalid_argument("CorrectionParams: s1, s2 must lie in [0, 0.5)");
    if (!(s1 + s2 < 1.0)) throw std::invalid_argument("CorrectionParams: s1 + s2 must be < 1");
    if (log_offset <= 0.0) throw std::invalid_argument("CorrectionParams: log_offset must be positive");
}

Tensor<float> intensity(const Tensor<float>& image) {
    if (image.shape.nd != 3 || image.shape[0] != 3)
        throw std::invalid_argument("intensity: expected a 3-channel image, got " + image.shape.str());
    const int h = image.shape[1], w = image.shape[2];
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor<float> out(Shape{1, h, w});
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < plane; ++p) {
        const float s = image.data[static_cast<std::size_t>(p)] +
                        image.data[static_cast<std::size_t>(plane + p)] +
                        image.data[static_cast<std::size_t>(2 * plane + p)];
        out.data[static_cast<std::size_t>(p)] = s / 3.0f;
    }
    return out;
}

Tensor<float> enlarge_for_valid(const Tensor<float>& map, int k, int max_k) {
    if (map.shape.nd != 3) throw std::invalid_argument("enlarge_for_valid: expected [C,H,W]");
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("enlarge_for_valid: k must be odd and positive");
    const int c = map.shape[0], h = map.shape[1], w = map.shape[2];
    const int cap = max_k >= 0 ? max_k : 2 * (h > w ? h : w) + 1;
    if (k > cap)
        throw std::invalid_argument("enlarge_for_valid: k " + std::to_string(k) +
                                    " exceeds the configured maximum " + std::to_string(cap));
    if (k == 1) return map;
    Tensor<float> out(Shape{c, h + k - 1, w + k - 1});
    kern::bilinear_resize_forward(map.ptr(), c, h, w, out.ptr(), h + k - 1, w + k - 1);
    return out;
}

Tensor<float> pipeline_blur(const Tensor<float>& int_map, double sigma) {
    const int h = int_map.shape[1], w = int_map.shape[2];
    const GaussianKernelSpec spec{sigma, pipeline_radius(sigma, h, w)};
    const int k = spec.size();
    const Tensor<float> big = enlarge_for_valid(int_map, k);
    const std::vector<double> taps = gaussian_taps_1d(spec);
    Tensor<float> out(Shape{int_map.shape[0], h, w});
    kern::separable_valid_blur(big.ptr(), big.shape[0], big.shape[1], big.shape[2], taps.data(), k,
                               out.ptr());
    return out;
}

Tensor<float> msr(const Tensor<float>& int_map, const CorrectionParams& params) {
    params.validate();
    if (int_map.shape.nd != 3 || int_map.shape[0] != 1)
        throw std::invalid_argument("msr: expected [1,H,W]");
    for (float v : int_map.data)
        if (v < 0.0f) throw NumericError("msr: intensity map must be non-negative");
    const float off = static_cast<float>(params.log_offset);
    const std::int64_t n = int_map.numel();
    Tensor<float> out(int_map.shape);
    for (double sigma : params.sigmas) {
        const Tensor<float> blur = pipeline_blur(int_map, sigma);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            const float d = std::log(off + int_map.data[static_cast<std::size_t>(i)]) -
                            std::log(off + blur.data[static_cast<std::size_t>(i)]);
            out.data[static_cast<std::size_t>(i)] += d;
        }
    }
    ensure_finite(out, "msr");
    return out;
}

Tensor<float> simplest_color_balance(const Tensor<float>& map, double s1, double s2) {
    if (!(s1 >= 0.0 && s1 < 0.5) || !(s2 >= 0.0 && s2 < 0.5) || !(s1 + s2 < 1.0))
        throw std::invalid_argument("simplest_color_balance: need s1,s2 in [0,0.5) with s1+s2 < 1");
    const std::int64_t n = map.numel();
    std::vector<float> sorted(map.data);
    std::sort(sorted.begin(), sorted.end());
    std::int64_t i1 = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * s1));
    std::int64_t i2 = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * (1.0 - s2)));
    i1 = std::clamp<std::int64_t>(i1, 0, n - 1);
    i2 = std::clamp<std::int64_t>(i2, 0, n - 1);
    const float vmin = sorted[static_cast<std::size_t>(i1)];
    const float vmax = sorted[static_cast<std::size_t>(i2)];
    Tensor<float> out(map.shape);
    if (!(vmax > vmin)) return out; // flat map: declared degenerate, all zeros
    const float sc = 255.0f / (vmax - vmin);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        float v = map.data[static_cast<std::size_t>(i)];
        if (v > vmax) v = vmax;
        if (v < vmin) v = vmin;
        out.data[static_cast<std::size_t>(i)] = (v - vmin) * sc;
    }
    return out;
}

Tensor<float> chromatic_scale(const Tensor<float>& image, const Tensor<float>& int_map,
                              const Tensor<float>& int1) {
    if (image.shape.nd != 3 || image.shape[0] != 3)
        throw std::invalid_argument("chromatic_scale: expected a 3-channel image");
    const int h = image.shape[1], w = image.shape[2];
    if (int_map.shape != Shape{1, h, w} || int1.shape != Shape{1, h, w})
        throw std::invalid_argument("chromatic_scale: intensity maps must match the image size");
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor<float> out(image.shape);
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < plane; ++p) {
        const float r = image.data[static_cast<std::size_t>(p)];
        const float g = image.data[static_cast<std::size_t>(plane + p)];
        const float b = image.data[static_cast<std::size_t>(2 * plane + p)];
        float big = r;
        if (g > big) big = g;
        if (b > big) big = b;
        const float iv = int_map.data[static_cast<std::size_t>(p)];
        if (big <= 0.0f || iv <= 0.0f) {
            out.data[static_cast<std::size_t>(p)] = 0.0f;
            out.data[static_cast<std::size_t>(plane + p)] = 0.0f;
            out.data[static_cast<std::size_t>(2 * plane + p)] = 0.0f;
            continue;
        }
        const float t1 = 255.0f / big;
        const float t2 = int1.data[static_cast<std::size_t>(p)] / iv;
        const float a = t1 <= t2 ? t1 : t2;
        for (int c = 0; c < 3; ++c) {
            float v = a * image.data[static_cast<std::size_t>(c * plane + p)];
            if (v > 255.0f) v = 255.0f;
            if (v < 0.0f) v = 0.0f;
            out.data[static_cast<std::size_t>(c * plane + p)] = v;
        }
    }
    return out;
}

Tensor<float> correct(const Tensor<float>& image, const CorrectionParams& params) {
    params.validate();
    if (image.shape.nd != 3 || image.shape[0] != 3)
        throw std::invalid_argument("correct: expected a 3-channel image, got " + image.shape.str());
    for (float v : image.data)
        if (!(v >= 0.0f && v <= 255.0f))
            throw NumericError("correct: image values must lie in [0,255]");
    const Tensor<float> int_map = intensity(image);
    const Tensor<float> retinex = msr(int_map, params);
    const Tensor<float> int1 = simplest_color_balance(retinex, params.s1, params.s2);
    return chromatic_scale(image, int_map, int1);
}

} // namespace dunet
