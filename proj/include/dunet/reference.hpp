#pragma once

namespace dunet::ref {

// Plain serial loops, written independently of the kernels in dunet::kern.
// These are the oracles the unit and acceptance suites compare against, and the
// baselines the benchmark tool times the parallel kernels against. Nothing in
// the library proper may call into this namespace.

// quadruple-nested-loop valid convolution oracle
template <class T>
void conv2d_valid_serial(const T* in, int cin, int h, int w,
                         const T* kernels, int cout, int k,
                         const T* bias, T* out);

// blockwise 2x2 max scan oracle
template <class T>
void maxpool2_serial(const T* in, int c, int h, int w, T* out);

template <class T>
void upsample2_serial(const T* in, int c, int h, int w, T* out);

template <class T>
void bilinear_resize_serial(const T* in, int c, int h, int w, T* out, int oh, int ow);

} // namespace dunet::ref
