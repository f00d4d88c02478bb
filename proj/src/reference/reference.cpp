#include "dunet/reference.hpp"

#include <cstdint>

namespace dunet::ref {

template <class T>
void conv2d_valid_serial(const T* in, int cin, int h, int w,
                         const T* kernels, int cout, int k,
                         const T* bias, T* out) {
    const int oh = h - k + 1, ow = w - k + 1;
    std::int64_t oi = 0;
    for (int o = 0; o < cout; ++o) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x, ++oi) {
                double acc = bias ? static_cast<double>(bias[o]) : 0.0;
                for (int c = 0; c < cin; ++c)
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j)
                            acc += static_cast<double>(in[(static_cast<std::int64_t>(c) * h + y + i) * w + x + j]) *
                                   static_cast<double>(kernels[((static_cast<std::int64_t>(o) * cin + c) * k + i) * k + j]);
                out[oi] = static_cast<T>(acc);
            }
        }
    }
}

template <class T>
void maxpool2_serial(const T* in, int c, int h, int w, T* out) {
    std::int64_t oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; y += 2) {
            for (int x = 0; x < w; x += 2, ++oi) {
                T m = in[(static_cast<std::int64_t>(ch) * h + y) * w + x];
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        const T v = in[(static_cast<std::int64_t>(ch) * h + y + i) * w + x + j];
                        if (v > m) m = v;
                    }
                out[oi] = m;
            }
        }
    }
}

template <class T>
void upsample2_serial(const T* in, int c, int h, int w, T* out) {
    std::int64_t oi = 0;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x, ++oi)
                out[oi] = in[(static_cast<std::int64_t>(ch) * h + y / 2) * w + x / 2];
}

template <class T>
void bilinear_resize_serial(const T* in, int c, int h, int w, T* out, int oh, int ow) {
    std::int64_t oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        const T* ip = in + static_cast<std::int64_t>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox, ++oi) {
                T py = (oh == 1 || h == 1) ? T(0) : static_cast<T>(oy) * static_cast<T>(h - 1) / static_cast<T>(oh - 1);
                T px = (ow == 1 || w == 1) ? T(0) : static_cast<T>(ox) * static_cast<T>(w - 1) / static_cast<T>(ow - 1);
                int y0 = static_cast<int>(py), x0 = static_cast<int>(px);
                if (y0 > h - 2) y0 = h > 1 ? h - 2 : 0;
                if (x0 > w - 2) x0 = w > 1 ? w - 2 : 0;
                const int y1 = h > 1 ? y0 + 1 : 0, x1 = w > 1 ? x0 + 1 : 0;
                const T fy = py - static_cast<T>(y0), fx = px - static_cast<T>(x0);
                const T a = ip[static_cast<std::int64_t>(y0) * w + x0];
                const T b = ip[static_cast<std::int64_t>(y0) * w + x1];
                const T cc = ip[static_cast<std::int64_t>(y1) * w + x0];
                const T d = ip[static_cast<std::int64_t>(y1) * w + x1];
                const T top = a + fx * (b - a);
                const T bot = cc + fx * (d - cc);
                out[oi] = top + fy * (bot - top);
            }
        }
    }
}

template void conv2d_valid_serial<float>(const float*, int, int, int, const float*, int, int, const float*, float*);
template void conv2d_valid_serial<double>(const double*, int, int, int, const double*, int, int, const double*, double*);
template void maxpool2_serial<float>(const float*, int, int, int, float*);
template void maxpool2_serial<double>(const double*, int, int, int, double*);
template void upsample2_serial<float>(const float*, int, int, int, float*);
template void upsample2_serial<double>(const double*, int, int, int, double*);
template void bilinear_resize_serial<float>(const float*, int, int, int, float*, int, int);
template void bilinear_resize_serial<double>(const double*, int, int, int, double*, int, int);

} // namespace dunet::ref
