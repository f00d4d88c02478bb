#pragma once

#include <vector>

#include "dunet/tensor.hpp"

namespace dunet {

// Truncated discrete Gaussian F(x,y) = C * exp(-(x^2+y^2)/(2*sigma^2)) on
// [-radius, radius]^2 with C chosen so the entries sum to 1.
struct GaussianKernelSpec {
    double sigma = 1.0;
    int radius = 1;

    int size() const { return 2 * radius + 1; }
};

// Rendered in double as the outer product of 1-D samples, so the 4-fold symmetry
// is exact. Center entry is the maximum.
Tensor<double> gaussian_kernel(const GaussianKernelSpec& spec);

// Normalized 1-D taps whose outer product equals gaussian_kernel(spec).
std::vector<double> gaussian_taps_1d(const GaussianKernelSpec& spec);

// Truncation rule used by the correction pipelines: min(ceil(3*sigma), max(h,w)-1).
int pipeline_radius(double sigma, int h, int w);

} // namespace dunet
