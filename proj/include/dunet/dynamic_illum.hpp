#pragma once

#include <array>
#include <vector>

#include "dunet/retinex.hpp"
#include "dunet/tape.hpp"

namespace dunet {

template <class T>
struct IllumGraph {
    typename Tape<T>::Var out;
    typename Tape<T>::Var int_map;
    typename Tape<T>::Var msr;
    typename Tape<T>::Var int1;
    T vmin;
    T vmax;
};

// Records the full correction pipeline on a tape: channel mean, per-scale
// enlarge + valid convolution with the given kernels, log-domain differences,
// color balance and chromatic scaling. The balance window is recomputed each
// forward and treated as constant by backward; fixed_vmin/fixed_vmax pin it
// (finite-difference checks differentiate the pinned function).
template <class T>
IllumGraph<T> illum_forward_graph(Tape<T>& tape, typename Tape<T>::Var image,
                                  const std::array<typename Tape<T>::Var, 3>& kernels,
                                  const CorrectionParams& params,
                                  const T* fixed_vmin = nullptr, const T* fixed_vmax = nullptr);

extern template IllumGraph<float> illum_forward_graph<float>(
    Tape<float>&, Tape<float>::Var, const std::array<Tape<float>::Var, 3>&,
    const CorrectionParams&, const float*, const float*);
extern template IllumGraph<double> illum_forward_graph<double>(
    Tape<double>&, Tape<double>::Var, const std::array<Tape<double>::Var, 3>&,
    const CorrectionParams&, const double*, const double*);

// The trainable correction stage: three blur kernels held as parameters,
// initialized to the Gaussian filters of the configured scales (radius
// ceil(3*sigma)) and updated by whatever loss gradient reaches them. No
// normalization layers anywhere, and the kernels are never renormalized.
class DynamicIllumModule {
public:
    explicit DynamicIllumModule(const CorrectionParams& params);

    // standalone inference on a private tape
    Tensor<float> forward(const Tensor<float>& image);

    // records the correction onto the caller's tape with the kernels as
    // trainable parameter leaves
    Tape<float>::Var build_graph(Tape<float>& tape, Tape<float>::Var image);

    // exactly the three kernel matrices, in scale order
    std::vector<Parameter<float>*> parameters();

    const CorrectionParams& params() const { return params_; }
    const Parameter<float>& kernel(int i) const { return kernels_[static_cast<std::size_t>(i)]; }
    Parameter<float>& kernel(int i) { return kernels_[static_cast<std::size_t>(i)]; }

    // per-kernel entry sums, logged during training to expose normalization drift
    std::array<double, 3> kernel_sums() const;

private:
    CorrectionParams params_;
    std::array<Parameter<float>, 3> kernels_;
};

} // namespace dunet
