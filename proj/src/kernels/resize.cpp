#include "dunet/kernels.hpp"

#include <cmath>

namespace dunet::kern {

namespace {

template <class T>
inline T lerp(T a, T b, T t) { return a + t * (b - a); }

// align-corners source coordinate and integer/fraction split
template <class T>
inline void src_coord(int oi, int on, int in_n, int& i0, int& i1, T& f) {
    if (on == 1 || in_n == 1) {
        i0 = i1 = 0;
        f = T(0);
        return;
    }
    const T pos = static_cast<T>(oi) * static_cast<T>(in_n - 1) / static_cast<T>(on - 1);
    i0 = static_cast<int>(pos);
    if (i0 > in_n - 2) i0 = in_n - 2;
    i1 = i0 + 1;
    f = pos - static_cast<T>(i0);
}

} // namespace

template <class T>
void bilinear_resize_forward(const T* in, int c, int h, int w, T* out, int oh, int ow) {
    const std::int64_t rows = static_cast<std::int64_t>(c) * oh;
#pragma omp parallel for schedule(static) if (rows * ow > 16384)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int ch = static_cast<int>(r / oh);
        const int oy = static_cast<int>(r % oh);
        int y0, y1, x0, x1;
        T fy, fx;
        src_coord<T>(oy, oh, h, y0, y1, fy);
        const T* ip = in + static_cast<std::int64_t>(ch) * h * w;
        T* op = out + r * ow;
        for (int ox = 0; ox < ow; ++ox) {
            src_coord<T>(ox, ow, w, x0, x1, fx);
            const T top = lerp(ip[static_cast<std::int64_t>(y0) * w + x0], ip[static_cast<std::int64_t>(y0) * w + x1], fx);
            const T bot = lerp(ip[static_cast<std::int64_t>(y1) * w + x0], ip[static_cast<std::int64_t>(y1) * w + x1], fx);
            op[ox] = lerp(top, bot, fy);
        }
    }
}

template <class T>
void bilinear_resize_backward(const T* gout, int c, int oh, int ow, T* gin, int h, int w) {
    for (int ch = 0; ch < c; ++ch) {
        const T* gp = gout + static_cast<std::int64_t>(ch) * oh * ow;
        T* ip = gin + static_cast<std::int64_t>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            int y0, y1, x0, x1;
            T fy, fx;
            src_coord<T>(oy, oh, h, y0, y1, fy);
            for (int ox = 0; ox < ow; ++ox) {
                src_coord<T>(ox, ow, w, x0, x1, fx);
                const T g = gp[static_cast<std::int64_t>(oy) * ow + ox];
                ip[static_cast<std::int64_t>(y0) * w + x0] += g * (T(1) - fy) * (T(1) - fx);
                ip[static_cast<std::int64_t>(y0) * w + x1] += g * (T(1) - fy) * fx;
                ip[static_cast<std::int64_t>(y1) * w + x0] += g * fy * (T(1) - fx);
                ip[static_cast<std::int64_t>(y1) * w + x1] += g * fy * fx;
            }
        }
    }
}

template <class T>
void replicate_pad1_forward(const T* in, int c, int h, int w, T* out) {
    const int oh = h + 2, ow = w + 2;
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(c) * oh * ow > 16384)
    for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(c) * oh * ow; ++idx) {
        const int ch = static_cast<int>(idx / (static_cast<std::int64_t>(oh) * ow));
        const std::int64_t p = idx % (static_cast<std::int64_t>(oh) * ow);
        int y = static_cast<int>(p / ow) - 1;
        int x = static_cast<int>(p % ow) - 1;
        if (y < 0) y = 0;
        if (y > h - 1) y = h - 1;
        if (x < 0) x = 0;
        if (x > w - 1) x = w - 1;
        out[idx] = in[(static_cast<std::int64_t>(ch) * h + y) * w + x];
    }
}

template <class T>
void replicate_pad1_backward(const T* gout, int c, int h, int w, T* gin) {
    const int ow = w + 2;
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(c) * h * w > 16384)
    for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(c) * h * w; ++idx) {
        const int ch = static_cast<int>(idx / (static_cast<std::int64_t>(h) * w));
        const std::int64_t p = idx % (static_cast<std::int64_t>(h) * w);
        const int y = static_cast<int>(p / w);
        const int x = static_cast<int>(p % w);
        int rows[3], cols[3];
        int nr = 0, nc = 0;
        rows[nr++] = y + 1;
        if (y == 0) rows[nr++] = 0;
        if (y == h - 1) rows[nr++] = h + 1;
        cols[nc++] = x + 1;
        if (x == 0) cols[nc++] = 0;
        if (x == w - 1) cols[nc++] = w + 1;
        const T* gp = gout + static_cast<std::int64_t>(ch) * (h + 2) * ow;
        T acc = T(0);
        for (int i = 0; i < nr; ++i)
            for (int j = 0; j < nc; ++j)
                acc += gp[static_cast<std::int64_t>(rows[i]) * ow + cols[j]];
        gin[idx] += acc;
    }
}

template void bilinear_resize_forward<float>(const float*, int, int, int, float*, int, int);
template void bilinear_resize_forward<double>(const double*, int, int, int, double*, int, int);
template void bilinear_resize_backward<float>(const float*, int, int, int, float*, int, int);
template void bilinear_resize_backward<double>(const double*, int, int, int, double*, int, int);
template void replicate_pad1_forward<float>(const float*, int, int, int, float*);
template void replicate_pad1_forward<double>(const double*, int, int, int, double*);
template void replicate_pad1_backward<float>(const float*, int, int, int, float*);
template void replicate_pad1_backward<double>(const double*, int, int, int, double*);

} // namespace dunet::kern
