#include "dunet/dynamic_illum.hpp"

#include <cmath>

namespace dunet {

template <class T>
IllumGraph<T> illum_forward_graph(Tape<T>& tape, typename Tape<T>::Var image,
                                  const std::array<typename Tape<T>::Var, 3>& kernels,
                                  const CorrectionParams& params,
                                  const T* fixed_vmin, const T* fixed_vmax) {
    using Var = typename Tape<T>::Var;
    params.validate();
    const Tensor<T>& img = tape.value(image);
    if (img.shape.nd != 3 || img.shape[0] != 3)
        throw std::invalid_argument("illum: expected a 3-channel image, got " + img.shape.str());
    for (T v : img.data)
        if (!(v >= T(0) && v <= T(255)))
            throw NumericError("illum: image values must lie in [0,255]");
    const int h = img.shape[1], w = img.shape[2];
    const int cap = 2 * (h > w ? h : w) + 1;
    const T off = static_cast<T>(params.log_offset);

    const Var int_map = tape.channel_mean(image, "illum/intensity");
    const Var log_int = tape.log_shift(int_map, off, "illum/log-intensity");

    Var msr_sum{};
    for (int i = 0; i < 3; ++i) {
        const std::string idx = "[" + std::to_string(i) + "]";
        const Tensor<T>& kt = tape.value(kernels[static_cast<std::size_t>(i)]);
        if (kt.shape.nd != 4 || kt.shape[0] != 1 || kt.shape[1] != 1 || kt.shape[2] != kt.shape[3])
            throw std::invalid_argument("illum/blur" + idx + ": kernel must be [1,1,k,k]");
        const int k = kt.shape[3];
        if (k > cap)
            throw std::invalid_argument("illum/enlarge" + idx + ": kernel size " + std::to_string(k) +
                                        " exceeds the enlarge cap " + std::to_string(cap) +
                                        " for a " + std::to_string(h) + "x" + std::to_string(w) + " image");
        const Var big = k == 1 ? int_map
                               : tape.bilinear_resize(int_map, h + k - 1, w + k - 1, "illum/enlarge" + idx);
        const Var blur = tape.conv2d_valid(big, kernels[static_cast<std::size_t>(i)], Tape<T>::none(),
                                           "illum/blur" + idx);
        // Training leaves the kernels unconstrained, so the blur of a non-negative
        // map can dip below zero; clamp at zero to keep the log defined. A
        // non-negative kernel (the Gaussian init in particular) never clamps.
        const Var blur_pos = tape.relu(blur, "illum/blur-clamp" + idx);
        const Var diff = tape.sub(log_int, tape.log_shift(blur_pos, off, "illum/log-blur" + idx),
                                  "illum/diff" + idx);
        msr_sum = i == 0 ? diff : tape.add(msr_sum, diff, "illum/msr");
    }

    const Var int1 = tape.color_balance(msr_sum, params.s1, params.s2, fixed_vmin, fixed_vmax,
                                        "illum/balance");
    const auto window = tape.last_balance_window();
    const Var out = tape.chromatic_scale(image, int_map, int1, "illum/chromatic");
    return IllumGraph<T>{out, int_map, msr_sum, int1, window.first, window.second};
}

template IllumGraph<float> illum_forward_graph<float>(
    Tape<float>&, Tape<float>::Var, const std::array<Tape<float>::Var, 3>&,
    const CorrectionParams&, const float*, const float*);
template IllumGraph<double> illum_forward_graph<double>(
    Tape<double>&, Tape<double>::Var, const std::array<Tape<double>::Var, 3>&,
    const CorrectionParams&, const double*, const double*);

DynamicIllumModule::DynamicIllumModule(const CorrectionParams& params) : params_(params) {
    params_.validate();
    for (int i = 0; i < 3; ++i) {
        const double sigma = params_.sigmas[static_cast<std::size_t>(i)];
        const GaussianKernelSpec spec{sigma, static_cast<int>(std::ceil(3.0 * sigma))};
        const Tensor<double> g = gaussian_kernel(spec);
        const int k = spec.size();
        Tensor<float> init(Shape{1, 1, k, k});
        for (std::size_t j = 0; j < g.data.size(); ++j) init.data[j] = static_cast<float>(g.data[j]);
        kernels_[static_cast<std::size_t>(i)] = Parameter<float>(std::move(init));
    }
}

Tensor<float> DynamicIllumModule::forward(const Tensor<float>& image) {
    Tape<float> tape;
    const auto img = tape.leaf(image, false, "illum/image");
    std::array<Tape<float>::Var, 3> kv;
    for (int i = 0; i < 3; ++i)
        kv[static_cast<std::size_t>(i)] = tape.leaf(kernels_[static_cast<std::size_t>(i)].value, false,
                                                    "illum/kernel");
    return tape.value(illum_forward_graph(tape, img, kv, params_).out);
}

Tape<float>::Var DynamicIllumModule::build_graph(Tape<float>& tape, Tape<float>::Var image) {
    std::array<Tape<float>::Var, 3> kv;
    for (int i = 0; i < 3; ++i)
        kv[static_cast<std::size_t>(i)] = tape.param(kernels_[static_cast<std::size_t>(i)], "illum/kernel");
    return illum_forward_graph(tape, image, kv, params_).out;
}

std::vector<Parameter<float>*> DynamicIllumModule::parameters() {
    return {&kernels_[0], &kernels_[1], &kernels_[2]};
}

std::array<double, 3> DynamicIllumModule::kernel_sums() const {
    std::array<double, 3> sums{};
    for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (float v : kernels_[static_cast<std::size_t>(i)].value.data) s += static_cast<double>(v);
        sums[static_cast<std::size_t>(i)] = s;
    }
    return sums;
}

} // namespace dunet
