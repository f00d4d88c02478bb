#include "dunet/gaussian.hpp"

#include <cmath>

namespace dunet {

std::vector<double> gaussian_taps_1d(const GaussianKernelSpec& spec) {
    if (spec.sigma <= 0.0)
        throw std::invalid_argument("gaussian_kernel: sigma must be positive, got " + std::to_string(spec.sigma));
    if (spec.radius < 0)
        throw std::invalid_argument("gaussian_kernel: radius must be non-negative");
    const int k = spec.size();
    std::vector<double> taps(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (int x = -spec.radius; x <= spec.radius; ++x) {
        const double v = std::exp(-(static_cast<double>(x) * x) / (2.0 * spec.sigma * spec.sigma));
        taps[static_cast<std::size_t>(x + spec.radius)] = v;
        sum += v;
    }
    for (double& v : taps) v /= sum;
    return taps;
}

Tensor<double> gaussian_kernel(const GaussianKernelSpec& spec) {
    const std::vector<double> taps = gaussian_taps_1d(spec);
    const int k = spec.size();
    Tensor<double> out(Shape{k, k});
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x)
            out.data[static_cast<std::size_t>(y) * k + x] = taps[static_cast<std::size_t>(y)] * taps[static_cast<std::size_t>(x)];
    return out;
}

int pipeline_radius(double sigma, int h, int w) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    const int cap = (h > w ? h : w) - 1;
    return r < cap ? r : cap;
}

} // namespace dunet
