#pragma once

#include <array>

#include "dunet/gaussian.hpp"
#include "dunet/tensor.hpp"

namespace dunet {

// Parameters of the illumination-correction pipeline: the three blur scales,
// the clip fractions of the color-balance step and the log-domain offset.
struct CorrectionParams {
    std::array<double, 3> sigmas{12.0, 80.0, 250.0};
    double s1 = 0.01;
    double s2 = 0.01;
    double log_offset = 1.0;

    void validate() const;
};

// Static reference pipeline. Pure functions over value inputs; images are
// [3,H,W] float tensors in [0,255], intensity maps are [1,H,W].

// per-pixel channel mean
Tensor<float> intensity(const Tensor<float>& image);

// Bilinear align-corners resize to (H+k-1, W+k-1) so a k x k valid convolution
// lands back on H x W. max_k < 0 means the default cap 2*max(H,W)+1.
Tensor<float> enlarge_for_valid(const Tensor<float>& map, int k, int max_k = -1);

// Gaussian blur of an intensity map at the pipeline truncation radius, via
// enlarge_for_valid plus a separable two-pass valid convolution. Returns H x W.
Tensor<float> pipeline_blur(const Tensor<float>& int_map, double sigma);

// sum over scales of ln(off+Int) - ln(off+blur_sigma(Int))
Tensor<float> msr(const Tensor<float>& int_map, const CorrectionParams& params);

// Percentile clip and linear stretch to [0,255]. A flat map (Vmax == Vmin)
// yields all zeros.
Tensor<float> simplest_color_balance(const Tensor<float>& map, double s1, double s2);

// A = min(255/max(R,G,B), Int1/Int) applied per channel; pixels with
// max(R,G,B) == 0 or Int == 0 map to black.
Tensor<float> chromatic_scale(const Tensor<float>& image, const Tensor<float>& int_map,
                              const Tensor<float>& int1);

// Full correction: intensity -> msr -> simplest_color_balance -> chromatic_scale.
Tensor<float> correct(const Tensor<float>& image, const CorrectionParams& params);

} // namespace dunet
