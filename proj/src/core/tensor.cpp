#include "dunet/tensor.hpp"

#include <cmath>

namespace dunet {

Shape::Shape(std::initializer_list<int> dims) {
    if (dims.size() < 1 || dims.size() > 4)
        throw std::invalid_argument("Shape: rank must be 1..4, got " + std::to_string(dims.size()));
    nd = static_cast<int>(dims.size());
    int i = 0;
    for (int v : dims) {
        if (v <= 0) throw std::invalid_argument("Shape: dims must be positive, got " + std::to_string(v));
        d[static_cast<std::size_t>(i++)] = v;
    }
}

std::int64_t Shape::numel() const {
    std::int64_t n = 1;
    for (int i = 0; i < nd; ++i) n *= d[static_cast<std::size_t>(i)];
    return n;
}

std::string Shape::str() const {
    std::string s = "[";
    for (int i = 0; i < nd; ++i) {
        if (i) s += ",";
        s += std::to_string(d[static_cast<std::size_t>(i)]);
    }
    return s + "]";
}

template <class T>
void ensure_finite(const Tensor<T>& t, const char* where) {
    const T* p = t.ptr();
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i]))
            throw NumericError(std::string(where) + ": non-finite value at flat index " +
                               std::to_string(i));
    }
}

template <class T>
Tensor<T> channel_slice(const Tensor<T>& t, int c0, int c1) {
    if (t.shape.nd != 3) throw std::invalid_argument("channel_slice: rank-3 tensor required");
    const int c = t.shape.d[0], h = t.shape.d[1], w = t.shape.d[2];
    if (c0 < 0 || c1 > c || c0 >= c1) throw std::invalid_argument("channel_slice: bad channel range");
    Tensor<T> out(Shape{c1 - c0, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(c0 * plane),
              t.data.begin() + static_cast<std::ptrdiff_t>(c1 * plane), out.data.begin());
    return out;
}

template void ensure_finite<float>(const Tensor<float>&, const char*);
template void ensure_finite<double>(const Tensor<double>&, const char*);
template Tensor<float> channel_slice<float>(const Tensor<float>&, int, int);
template Tensor<double> channel_slice<double>(const Tensor<double>&, int, int);

} // namespace dunet
