#include "dunet/kernels.hpp"

namespace dunet::kern {

template <class T>
void maxpool2_forward(const T* in, int c, int h, int w, T* out) {
    const int oh = h / 2, ow = w / 2;
    const std::int64_t rows = static_cast<std::int64_t>(c) * oh;
#pragma omp parallel for schedule(static) if (rows * ow > 16384)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int ch = static_cast<int>(r / oh);
        const int y = static_cast<int>(r % oh) * 2;
        const T* ip = in + (static_cast<std::int64_t>(ch) * h + y) * w;
        T* op = out + r * ow;
        for (int x = 0; x < ow; ++x) {
            const T* b = ip + 2 * x;
            T m = b[0];
            if (b[1] > m) m = b[1];
            if (b[w] > m) m = b[w];
            if (b[w + 1] > m) m = b[w + 1];
            op[x] = m;
        }
    }
}

template <class T>
void maxpool2_backward(const T* in, int c, int h, int w, const T* gout, T* gin) {
    const int oh = h / 2, ow = w / 2;
    const std::int64_t rows = static_cast<std::int64_t>(c) * oh;
    // 2x2 blocks are disjoint, so per-block writes cannot race
#pragma omp parallel for schedule(static) if (rows * ow > 16384)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int ch = static_cast<int>(r / oh);
        const int y = static_cast<int>(r % oh) * 2;
        const std::int64_t row_base = (static_cast<std::int64_t>(ch) * h + y) * w;
        const T* gp = gout + r * ow;
        for (int x = 0; x < ow; ++x) {
            const std::int64_t base = row_base + 2 * x;
            const std::int64_t offs[4] = {0, 1, w, w + 1};
            std::int64_t best = 0;
            for (int i = 1; i < 4; ++i)
                if (in[base + offs[i]] > in[base + offs[best]]) best = i;
            gin[base + offs[best]] += gp[x];
        }
    }
}

template <class T>
void upsample2_forward(const T* in, int c, int h, int w, T* out) {
    const std::int64_t rows = static_cast<std::int64_t>(c) * h * 2;
    const int ow = w * 2;
#pragma omp parallel for schedule(static) if (rows * ow > 16384)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int ch = static_cast<int>(r / (h * 2));
        const int y = static_cast<int>(r % (h * 2)) / 2;
        const T* ip = in + (static_cast<std::int64_t>(ch) * h + y) * w;
        T* op = out + r * ow;
        for (int x = 0; x < w; ++x) {
            op[2 * x] = ip[x];
            op[2 * x + 1] = ip[x];
        }
    }
}

template <class T>
void upsample2_backward(const T* gout, int c, int h, int w, T* gin) {
    const std::int64_t rows = static_cast<std::int64_t>(c) * h;
    const int ow = w * 2;
#pragma omp parallel for schedule(static) if (rows * w > 16384)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int ch = static_cast<int>(r / h);
        const int y = static_cast<int>(r % h);
        const T* g0 = gout + (static_cast<std::int64_t>(ch) * h * 2 + 2 * y) * ow;
        const T* g1 = g0 + ow;
        T* ip = gin + r * w;
        for (int x = 0; x < w; ++x)
            ip[x] += g0[2 * x] + g0[2 * x + 1] + g1[2 * x] + g1[2 * x + 1];
    }
}

template void maxpool2_forward<float>(const float*, int, int, int, float*);
template void maxpool2_forward<double>(const double*, int, int, int, double*);
template void maxpool2_backward<float>(const float*, int, int, int, const float*, float*);
template void maxpool2_backward<double>(const double*, int, int, int, const double*, double*);
template void upsample2_forward<float>(const float*, int, int, int, float*);
template void upsample2_forward<double>(const double*, int, int, int, double*);
template void upsample2_backward<float>(const float*, int, int, int, float*);
template void upsample2_backward<double>(const double*, int, int, int, double*);

} // namespace dunet::kern
