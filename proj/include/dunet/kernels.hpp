#pragma once

#include <cstdint>

namespace dunet::kern {

// OpenMP-parallel kernels. Every loop assigns each output element to exactly one
// thread with a fixed per-element accumulation order, so results are bit-identical
// for any thread count. Dot products accumulate float rows into a double sum to keep
// large kernels (up to 181x181 at desk scale) well inside test tolerances.

// out[cout, h-k+1, w-k+1]; bias may be null.
template <class T>
void conv2d_valid(const T* in, int cin, int h, int w,
                  const T* kernels, int cout, int k,
                  const T* bias, T* out);

// gk += d(loss)/d(kernels); gk has cout*cin*k*k entries.
template <class T>
void conv2d_backward_kernel(const T* in, int cin, int h, int w,
                            const T* gout, int cout, int k, T* gk);

// gin += d(loss)/d(in), gather form over the valid offsets.
template <class T>
void conv2d_backward_input(const T* kernels, int cout, int cin, int k,
                           const T* gout, int oh, int ow,
                           T* gin, int h, int w);

template <class T>
void conv2d_backward_bias(const T* gout, int cout, int oh, int ow, T* gb);

template <class T>
void maxpool2_forward(const T* in, int c, int h, int w, T* out);

// Routes each block's gradient to the first row-major maximum.
template <class T>
void maxpool2_backward(const T* in, int c, int h, int w, const T* gout, T* gin);

template <class T>
void upsample2_forward(const T* in, int c, int h, int w, T* out);

template <class T>
void upsample2_backward(const T* gout, int c, int h, int w, T* gin);

// Align-corners bilinear resize of a [c,h,w] tensor to [c,oh,ow]. Uses the lerp
// form a + t*(b-a) so constant inputs reproduce exactly and corner samples land
// on corner pixels.
template <class T>
void bilinear_resize_forward(const T* in, int c, int h, int w, T* out, int oh, int ow);

// Scatter transpose of the forward sampling (serial; resize gradients are cheap).
template <class T>
void bilinear_resize_backward(const T* gout, int c, int oh, int ow, T* gin, int h, int w);

template <class T>
void replicate_pad1_forward(const T* in, int c, int h, int w, T* out);

template <class T>
void replicate_pad1_backward(const T* gout, int c, int h, int w, T* gin);

// Two-pass separable convolution with a length-k taps vector, valid in both
// directions: [c, h, w] -> [c, h-k+1, w-k+1].
template <class T>
void separable_valid_blur(const T* in, int c, int h, int w,
                          const double* taps, int k, T* out);

} // namespace dunet::kern
