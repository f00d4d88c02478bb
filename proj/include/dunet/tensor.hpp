#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "dunet/errors.hpp"

namespace dunet {

// Dense row-major shape, rank 1..4, all dims positive.
struct Shape {
    int nd = 0;
    std::array<int, 4> d{1, 1, 1, 1};

    Shape() = default;
    Shape(std::initializer_list<int> dims);

    int operator[](int i) const { return d[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const;
    bool operator==(const Shape& o) const { return nd == o.nd && d == o.d; }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const;
};

template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(const Shape& s) : shape(s), data(static_cast<std::size_t>(s.numel()), T(0)) {}
    Tensor(const Shape& s, std::vector<T> v) : shape(s), data(std::move(v)) {
        if (static_cast<std::int64_t>(data.size()) != shape.numel())
            throw std::invalid_argument("Tensor: data size " + std::to_string(data.size()) +
                                        " does not match shape " + shape.str());
    }

    static Tensor full(const Shape& s, T v) {
        Tensor t(s);
        for (auto& x : t.data) x = v;
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    // rank-3 [C,H,W] accessor
    T& at3(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape.d[1] + y) * shape.d[2] + x];
    }
    T at3(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape.d[1] + y) * shape.d[2] + x];
    }
};

template <class T>
void ensure_finite(const Tensor<T>& t, const char* where);

template <class U, class T>
Tensor<U> cast_tensor(const Tensor<T>& t) {
    Tensor<U> out(t.shape);
    for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<U>(t.data[i]);
    return out;
}

// Channels [c0, c1) of a rank-3 tensor, layout-exact copy.
template <class T>
Tensor<T> channel_slice(const Tensor<T>& t, int c0, int c1);

extern template void ensure_finite<float>(const Tensor<float>&, const char*);
extern template void ensure_finite<double>(const Tensor<double>&, const char*);
extern template Tensor<float> channel_slice<float>(const Tensor<float>&, int, int);
extern template Tensor<double> channel_slice<double>(const Tensor<double>&, int, int);

} // namespace dunet
