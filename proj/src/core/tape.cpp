#include "dunet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "dunet/kernels.hpp"

namespace dunet {

namespace {

template <class T>
inline T sigmoid(T z) {
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

} // namespace

template <class T>
Tensor<T>& Tape<T>::grad_buf(int i) {
    Node& n = node(i);
    if (!n.has_grad) {
        if (n.grad.shape != n.out.shape) n.grad = Tensor<T>(n.out.shape);
        else std::fill(n.grad.data.begin(), n.grad.data.end(), T(0));
        n.has_grad = true;
    }
    return n.grad;
}

template <class T>
typename Tape<T>::Var Tape<T>::push(Tensor<T> out, bool needs_grad, const std::string& tag,
                                    std::function<void(Tape&, const Tensor<T>&)> back) {
    ensure_finite(out, tag.c_str());
    Node n;
    n.out = std::move(out);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
typename Tape<T>::Var Tape<T>::leaf(Tensor<T> value, bool needs_grad, const std::string& tag) {
    return push(std::move(value), needs_grad, tag, nullptr);
}

template <class T>
typename Tape<T>::Var Tape<T>::param(Parameter<T>& p, const std::string& tag) {
    Var v = push(p.value, true, tag, nullptr);
    node(v.i).external = &p;
    return v;
}

template <class T>
Tensor<T> Tape<T>::grad(Var v) const {
    const Node& n = node(v.i);
    if (!n.has_grad) return Tensor<T>(n.out.shape);
    return n.grad;
}

template <class T>
typename Tape<T>::Var Tape<T>::conv2d_valid(Var input, Var kernels, Var bias, const std::string& tag) {
    const Tensor<T>& x = value(input);
    const Tensor<T>& k = value(kernels);
    if (x.shape.nd != 3 || k.shape.nd != 4)
        throw std::invalid_argument(tag + ": expected input [Cin,H,W] and kernels [Cout,Cin,k,k]");
    const int cin = x.shape[0], h = x.shape[1], w = x.shape[2];
    const int cout = k.shape[0], ksz = k.shape[3];
    if (k.shape[1] != cin)
        throw std::invalid_argument(tag + ": kernel Cin " + std::to_string(k.shape[1]) +
                                    " does not match input Cin " + std::to_string(cin));
    if (k.shape[2] != ksz) throw std::invalid_argument(tag + ": kernel must be square");
    if (ksz % 2 == 0) throw std::invalid_argument(tag + ": kernel size must be odd");
    if (ksz > h || ksz > w)
        throw std::invalid_argument(tag + ": kernel size " + std::to_string(ksz) +
                                    " exceeds image extent " + x.shape.str());
    const T* bp = nullptr;
    if (bias.ok()) {
        const Tensor<T>& b = value(bias);
        if (b.shape.nd != 1 || b.shape[0] != cout)
            throw std::invalid_argument(tag + ": bias must be [Cout]");
        bp = b.ptr();
    }
    Tensor<T> out(Shape{cout, h - ksz + 1, w - ksz + 1});
    kern::conv2d_valid(x.ptr(), cin, h, w, k.ptr(), cout, ksz, bp, out.ptr());

    const bool ng = needs(input.i) || needs(kernels.i) || (bias.ok() && needs(bias.i));
    const int xi = input.i, ki = kernels.i, bi = bias.ok() ? bias.i : -1;
    return push(std::move(out), ng, tag, [xi, ki, bi, cin, h, w, cout, ksz](Tape& t, const Tensor<T>& g) {
        const int oh = h - ksz + 1, ow = w - ksz + 1;
        if (t.needs(xi))
            kern::conv2d_backward_input(t.value(Var{ki}).ptr(), cout, cin, ksz, g.ptr(), oh, ow,
                                        t.grad_buf(xi).ptr(), h, w);
        if (t.needs(ki))
            kern::conv2d_backward_kernel(t.value(Var{xi}).ptr(), cin, h, w, g.ptr(), cout, ksz,
                                         t.grad_buf(ki).ptr());
        if (bi >= 0 && t.needs(bi))
            kern::conv2d_backward_bias(g.ptr(), cout, oh, ow, t.grad_buf(bi).ptr());
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::maxpool2(Var x, const std::string& tag) {
    const Tensor<T>& in = value(x);
    if (in.shape.nd != 3) throw std::invalid_argument(tag + ": expected [C,H,W]");
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    if (h % 2 || w % 2)
        throw std::invalid_argument(tag + ": spatial dims must be even, got " + in.shape.str());
    Tensor<T> out(Shape{c, h / 2, w / 2});
    kern::maxpool2_forward(in.ptr(), c, h, w, out.ptr());
    const int xi = x.i;
    return push(std::move(out), needs(xi), tag, [xi, c, h, w](Tape& t, const Tensor<T>& g) {
        if (t.needs(xi))
            kern::maxpool2_backward(t.value(Var{xi}).ptr(), c, h, w, g.ptr(), t.grad_buf(xi).ptr());
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::upsample2(Var x, const std::string& tag) {
    const Tensor<T>& in = value(x);
    if (in.shape.nd != 3) throw std::invalid_argument(tag + ": expected [C,H,W]");
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    Tensor<T> out(Shape{c, h * 2, w * 2});
    kern::upsample2_forward(in.ptr(), c, h, w, out.ptr());
    const int xi = x.i;
    return push(std::move(out), needs(xi), tag, [xi, c, h, w](Tape& t, const Tensor<T>& g) {
        if (t.needs(xi)) kern::upsample2_backward(g.ptr(), c, h, w, t.grad_buf(xi).ptr());
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::concat_channels(Var a, Var b, const std::string& tag) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (ta.shape.nd != 3 || tb.shape.nd != 3 || ta.shape[1] != tb.shape[1] || ta.shape[2] != tb.shape[2])
        throw std::invalid_argument(tag + ": spatial mismatch " + ta.shape.str() + " vs " + tb.shape.str());
    const int ca = ta.shape[0], cb = tb.shape[0], h = ta.shape[1], w = ta.shape[2];
    Tensor<T> out(Shape{ca + cb, h, w});
    const std::size_t na = ta.data.size();
    std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
    std::copy(tb.data.begin(), tb.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(na));
    const int ai = a.i, bi = b.i;
    return push(std::move(out), needs(ai) || needs(bi), tag, [ai, bi, na](Tape& t, const Tensor<T>& g) {
        if (t.needs(ai)) {
            Tensor<T>& ga = t.grad_buf(ai);
            for (std::size_t i = 0; i < na; ++i) ga.data[i] += g.data[i];
        }
        if (t.needs(bi)) {
            Tensor<T>& gb = t.grad_buf(bi);
            for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[na + i];
        }
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::relu(Var x, const std::string& tag) {
    const Tensor<T>& in = value(x);
    Tensor<T> out(in.shape);
    const std::int64_t n = in.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) out.data[i] = in.data[i] > T(0) ? in.data[i] : T(0);
    const int xi = x.i;
    return push(std::move(out), needs(xi), tag, [xi, n](Tape& t, const Tensor<T>& g) {
        if (!t.needs(xi)) return;
        const Tensor<T>& in2 = t.value(Var{xi});
        Tensor<T>& gx = t.grad_buf(xi);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i)
            if (in2.data[i] > T(0)) gx.data[i] += g.data[i];
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::log1p_pos(Var x, const std::string& tag) {
    const Tensor<T>& in = value(x);
    Tensor<T> out(in.shape);
    const std::int64_t n = in.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        if (in.data[i] < T(0))
            throw NumericError(tag + ": negative input " + std::to_string(static_cast<double>(in.data[i])));
        out.data[i] = std::log1p(in.data[i]);
    }
    const int xi = x.i;
    return push(std::move(out), needs(xi), tag, [xi, n](Tape& t, const Tensor<T>& g) {
        if (!t.needs(xi)) return;
        const Tensor<T>& in2 = t.value(Var{xi});
        Tensor<T>& gx = t.grad_buf(xi);
        for (std::int64_t i = 0; i < n; ++i) gx.data[i] += g.data[i] / (T(1) + in2.data[i]);
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::log_shift(Var x, T offset, const std::string& tag) {
    const Tensor<T>& in = value(x);
    Tensor<T> out(in.shape);
    const std::int64_t n = in.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const T a = offset + in.data[i];
        if (!(a > T(0)))
            throw NumericError(tag + ": log argument " + std::to_string(static_cast<double>(a)) +
                               " is not positive");
        out.data[i] = std::log(a);
    }
    const int xi = x.i;
    return push(std::move(out), needs(xi), tag, [xi, n, offset](Tape& t, const Tensor<T>& g) {
        if (!t.needs(xi)) return;
        const Tensor<T>& in2 = t.value(Var{xi});
        Tensor<T>& gx = t.grad_buf(xi);
        for (std::int64_t i = 0; i < n; ++i) gx.data[i] += g.data[i] / (offset + in2.data[i]);
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b, const std::string& tag) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (ta.shape != tb.shape)
        throw std::invalid_argument(tag + ": shape mismatch " + ta.shape.str() + " vs " + tb.shape.str());
    Tensor<T> out(ta.shape);
    const std::int64_t n = ta.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) out.data[i] = ta.data[i] + tb.data[i];
    const int ai = a.i, bi = b.i;
    return push(std::move(out), needs(ai) || needs(bi), tag, [ai, bi, n](Tape& t, const Tensor<T>& g) {
        if (t.needs(ai)) {
            Tensor<T>& ga = t.grad_buf(ai);
            for (std::int64_t i = 0; i < n; ++i) ga.data[i] += g.data[i];
        }
        if (t.needs(bi)) {
            Tensor<T>& gb = t.grad_buf(bi);
            for (std::int64_t i = 0; i < n; ++i) gb.data[i] += g.data[i];
        }
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::sub(Var a, Var b, const std::string& tag) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (ta.shape != tb.shape)
        throw std::invalid_argument(tag + ": shape mismatch " + ta.shape.str() + " vs " + tb.shape.str());
    Tensor<T> out(ta.shape);
    const std::int64_t n = ta.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) out.data[i] = ta.data[i] - tb.data[i];
    const int ai = a.i, bi = b.i;
    return push(std::move(out), needs(ai) || needs(bi), tag, [ai, bi, n](Tape& t, const Tensor<T>& g) {
        if (t.needs(ai)) {
            Tensor<T>& ga = t.grad_buf(ai);
            for (std::int64_t i = 0; i < n; ++i) ga.data[i] += g.data[i];
        }
        if (t.needs(bi)) {
            Tensor<T>& gb = t.grad_buf(bi);
            for (std::int64_t i = 0; i < n; ++i) gb.data[i] -= g.data[i];
        }
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::mul(Var a, Var b, const std::string& tag) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (ta.shape != tb.shape)
        throw std::invalid_argument(tag + ": shape mismatch " + ta.shape.str() + " vs " + tb.shape.str());
    Tensor<T> out(ta.shape);
    const std::int64_t n = ta.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) out.data[i] = ta.data[i] * tb.data[i];
    const int ai = a.i, bi = b.i;
    return push(std::move(out), needs(ai) || needs(bi), tag, [ai, bi, n](Tape& t, const Tensor<T>& g) {
        const Tensor<T>& va = t.value(Var{ai});
        const Tensor<T>& vb = t.value(Var{bi});
        if (t.needs(ai)) {
            Tensor<T>& ga = t.grad_buf(ai);
            for (std::int64_t i = 0; i < n; ++i) ga.data[i] += g.data[i] * vb.data[i];
        }
        if (t.needs(bi)) {
            Tensor<T>& gb = t.grad_buf(bi);
            for (std::int64_t i = 0; i < n; ++i) gb.data[i] += g.data[i] * va.data[i];
        }
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::scale(Var x, T c, const std::string& tag) {
    const Tensor<T>& in = value(x);
    Tensor<T> out(in.shape);
    const std::int64_t n = in.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) out.data[i] = in.data[i] * c;
    const int xi = x.i;
    return push(std::move(out), needs(xi), tag, [xi, c, n](Tape& t, const Tensor<T>& g) {
        if (!t.needs(xi)) return;
        Tensor<T>& gx = t.grad_buf(xi);
        for (std::int64_t i = 0; i < n; ++i) gx.data[i] += g.data[i] * c;
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::channel_mean(Var x, const std::string& tag) {
    const Tensor<T>& in = value(x);
    if (in.shape.nd != 3) throw std::invalid_argument(tag + ": expected [C,H,W]");
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor<T> out(Shape{1, h, w});
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < plane; ++p) {
        T s = in.data[static_cast<std::size_t>(p)];
        for (int ch = 1; ch < c; ++ch) s = s + in.data[static_cast<std::size_t>(ch * plane + p)];
        out.data[static_cast<std::size_t>(p)] = s / static_cast<T>(c);
    }
    const int xi = x.i;
    return push(std::move(out), needs(xi), tag, [xi, c, plane](Tape& t, const Tensor<T>& g) {
        if (!t.needs(xi)) return;
        Tensor<T>& gx = t.grad_buf(xi);
        const T inv = T(1) / static_cast<T>(c);
        for (int ch = 0; ch < c; ++ch)
            for (std::int64_t p = 0; p < plane; ++p)
                gx.data[static_cast<std::size_t>(ch * plane + p)] += g.data[static_cast<std::size_t>(p)] * inv;
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::bilinear_resize(Var x, int oh, int ow, const std::string& tag) {
    const Tensor<T>& in = value(x);
    if (in.shape.nd != 3) throw std::invalid_argument(tag + ": expected [C,H,W]");
    if (oh < 1 || ow < 1) throw std::invalid_argument(tag + ": target size must be positive");
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    Tensor<T> out(Shape{c, oh, ow});
    kern::bilinear_resize_forward(in.ptr(), c, h, w, out.ptr(), oh, ow);
    const int xi = x.i;
    return push(std::move(out), needs(xi), tag, [xi, c, h, w, oh, ow](Tape& t, const Tensor<T>& g) {
        if (t.needs(xi)) kern::bilinear_resize_backward(g.ptr(), c, oh, ow, t.grad_buf(xi).ptr(), h, w);
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::replicate_pad1(Var x, const std::string& tag) {
    const Tensor<T>& in = value(x);
    if (in.shape.nd != 3) throw std::invalid_argument(tag + ": expected [C,H,W]");
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    Tensor<T> out(Shape{c, h + 2, w + 2});
    kern::replicate_pad1_forward(in.ptr(), c, h, w, out.ptr());
    const int xi = x.i;
    return push(std::move(out), needs(xi), tag, [xi, c, h, w](Tape& t, const Tensor<T>& g) {
        if (t.needs(xi)) kern::replicate_pad1_backward(g.ptr(), c, h, w, t.grad_buf(xi).ptr());
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::color_balance(Var x, double s1, double s2,
                                             const T* fixed_vmin, const T* fixed_vmax,
                                             const std::string& tag) {
    if (!(s1 >= 0.0 && s1 < 0.5) || !(s2 >= 0.0 && s2 < 0.5) || !(s1 + s2 < 1.0))
        throw std::invalid_argument(tag + ": clip fractions must satisfy s1,s2 in [0,0.5), s1+s2 < 1");
    const Tensor<T>& in = value(x);
    const std::int64_t n = in.numel();
    T vmin, vmax;
    if (fixed_vmin && fixed_vmax) {
        vmin = *fixed_vmin;
        vmax = *fixed_vmax;
    } else {
        std::vector<T> sorted(in.data);
        std::sort(sorted.begin(), sorted.end());
        std::int64_t i1 = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * s1));
        std::int64_t i2 = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * (1.0 - s2)));
        i1 = std::clamp<std::int64_t>(i1, 0, n - 1);
        i2 = std::clamp<std::int64_t>(i2, 0, n - 1);
        vmin = sorted[static_cast<std::size_t>(i1)];
        vmax = sorted[static_cast<std::size_t>(i2)];
    }
    last_vmin_ = vmin;
    last_vmax_ = vmax;

    Tensor<T> out(in.shape);
    const bool degenerate = !(vmax > vmin);
    if (!degenerate) {
        const T sc = T(255) / (vmax - vmin);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            T v = in.data[i];
            if (v > vmax) v = vmax;
            if (v < vmin) v = vmin;
            out.data[i] = (v - vmin) * sc;
        }
    }
    const int xi = x.i;
    return push(std::move(out), needs(xi), tag,
                [xi, n, vmin, vmax, degenerate](Tape& t, const Tensor<T>& g) {
                    if (!t.needs(xi) || degenerate) return;
                    const Tensor<T>& in2 = t.value(Var{xi});
                    Tensor<T>& gx = t.grad_buf(xi);
                    const T sc = T(255) / (vmax - vmin);
                    for (std::int64_t i = 0; i < n; ++i) {
                        const T v = in2.data[i];
                        if (v >= vmin && v <= vmax) gx.data[i] += g.data[i] * sc;
                    }
                });
}

template <class T>
typename Tape<T>::Var Tape<T>::chromatic_scale(Var image, Var int_map, Var int1, const std::string& tag) {
    const Tensor<T>& img = value(image);
    const Tensor<T>& im = value(int_map);
    const Tensor<T>& i1 = value(int1);
    if (img.shape.nd != 3 || img.shape[0] != 3)
        throw std::invalid_argument(tag + ": image must be [3,H,W]");
    const int h = img.shape[1], w = img.shape[2];
    if (im.shape != Shape{1, h, w} || i1.shape != Shape{1, h, w})
        throw std::invalid_argument(tag + ": intensity maps must be [1,H,W] matching the image");
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;

    Tensor<T> out(img.shape);
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < plane; ++p) {
        const T r = img.data[static_cast<std::size_t>(p)];
        const T gch = img.data[static_cast<std::size_t>(plane + p)];
        const T b = img.data[static_cast<std::size_t>(2 * plane + p)];
        T big = r;
        if (gch > big) big = gch;
        if (b > big) big = b;
        const T intv = im.data[static_cast<std::size_t>(p)];
        if (big <= T(0) || intv <= T(0)) {
            out.data[static_cast<std::size_t>(p)] = T(0);
            out.data[static_cast<std::size_t>(plane + p)] = T(0);
            out.data[static_cast<std::size_t>(2 * plane + p)] = T(0);
            continue;
        }
        const T t1 = T(255) / big;
        const T t2 = i1.data[static_cast<std::size_t>(p)] / intv;
        const T a = t1 <= t2 ? t1 : t2;
        for (int c = 0; c < 3; ++c) {
            T v = a * img.data[static_cast<std::size_t>(c * plane + p)];
            if (v > T(255)) v = T(255);
            if (v < T(0)) v = T(0);
            out.data[static_cast<std::size_t>(c * plane + p)] = v;
        }
    }

    const int ii = image.i, mi = int_map.i, oi = int1.i;
    const bool ng = needs(ii) || needs(mi) || needs(oi);
    return push(std::move(out), ng, tag, [ii, mi, oi, plane](Tape& t, const Tensor<T>& g) {
        const Tensor<T>& img2 = t.value(Var{ii});
        const Tensor<T>& im2 = t.value(Var{mi});
        const Tensor<T>& i12 = t.value(Var{oi});
        const bool wi = t.needs(ii), wm = t.needs(mi), wo = t.needs(oi);
        Tensor<T>* gi = wi ? &t.grad_buf(ii) : nullptr;
        Tensor<T>* gm = wm ? &t.grad_buf(mi) : nullptr;
        Tensor<T>* go = wo ? &t.grad_buf(oi) : nullptr;
#pragma omp parallel for schedule(static)
        for (std::int64_t p = 0; p < plane; ++p) {
            const T ch[3] = {img2.data[static_cast<std::size_t>(p)],
                             img2.data[static_cast<std::size_t>(plane + p)],
                             img2.data[static_cast<std::size_t>(2 * plane + p)]};
            int am = 0;
            if (ch[1] > ch[am]) am = 1;
            if (ch[2] > ch[am]) am = 2;
            const T big = ch[am];
            const T intv = im2.data[static_cast<std::size_t>(p)];
            if (big <= T(0) || intv <= T(0)) continue;
            const T i1v = i12.data[static_cast<std::size_t>(p)];
            const T t1 = T(255) / big;
            const T t2 = i1v / intv;
            const bool sel1 = t1 <= t2;
            const T a = sel1 ? t1 : t2;
            T ga = T(0);
            for (int c = 0; c < 3; ++c) {
                const T pre = a * ch[c];
                if (pre < T(0) || pre > T(255)) continue;
                const T gc = g.data[static_cast<std::size_t>(c * plane + p)];
                ga += gc * ch[c];
                if (wi) gi->data[static_cast<std::size_t>(c * plane + p)] += gc * a;
            }
            if (sel1) {
                if (wi) gi->data[static_cast<std::size_t>(am * plane + p)] += ga * (-T(255) / (big * big));
            } else {
                if (wo) go->data[static_cast<std::size_t>(p)] += ga / intv;
                if (wm) gm->data[static_cast<std::size_t>(p)] += ga * (-i1v / (intv * intv));
            }
        }
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::bce_with_logits(Var logits, const Tensor<T>& target, const std::string& tag) {
    const Tensor<T>& z = value(logits);
    if (z.shape.nd != 3 || z.shape[0] != 1)
        throw std::invalid_argument(tag + ": logits must be [1,H,W]");
    if (target.shape != z.shape)
        throw std::invalid_argument(tag + ": target shape " + target.shape.str() +
                                    " does not match logits " + z.shape.str());
    const std::int64_t n = z.numel();
    for (std::int64_t i = 0; i < n; ++i)
        if (target.data[i] != T(0) && target.data[i] != T(1))
            throw std::invalid_argument(tag + ": target must be binary");
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const T zi = z.data[i];
        const T ti = target.data[i];
        const T m = zi > T(0) ? zi : T(0);
        acc += static_cast<double>(m - zi * ti + std::log1p(std::exp(-std::abs(zi))));
    }
    Tensor<T> out(Shape{1});
    out.data[0] = static_cast<T>(acc / static_cast<double>(n));
    const int zi_idx = logits.i;
    Tensor<T> tgt = target;
    return push(std::move(out), needs(zi_idx), tag,
                [zi_idx, n, tgt = std::move(tgt)](Tape& t, const Tensor<T>& g) {
                    if (!t.needs(zi_idx)) return;
                    const Tensor<T>& z2 = t.value(Var{zi_idx});
                    Tensor<T>& gx = t.grad_buf(zi_idx);
                    const T g0 = g.data[0] / static_cast<T>(n);
                    for (std::int64_t i = 0; i < n; ++i)
                        gx.data[i] += g0 * (sigmoid(z2.data[i]) - tgt.data[i]);
                });
}

template <class T>
typename Tape<T>::Var Tape<T>::sum(Var x, const std::string& tag) {
    const Tensor<T>& in = value(x);
    double acc = 0.0;
    for (const T v : in.data) acc += static_cast<double>(v);
    Tensor<T> out(Shape{1});
    out.data[0] = static_cast<T>(acc);
    const int xi = x.i;
    const std::int64_t n = in.numel();
    return push(std::move(out), needs(xi), tag, [xi, n](Tape& t, const Tensor<T>& g) {
        if (!t.needs(xi)) return;
        Tensor<T>& gx = t.grad_buf(xi);
        for (std::int64_t i = 0; i < n; ++i) gx.data[i] += g.data[0];
    });
}

template <class T>
typename Tape<T>::Var Tape<T>::weighted_sum(Var x, const Tensor<T>& weights, const std::string& tag) {
    const Tensor<T>& in = value(x);
    if (weights.shape != in.shape)
        throw std::invalid_argument(tag + ": weight shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < in.data.size(); ++i)
        acc += static_cast<double>(in.data[i]) * static_cast<double>(weights.data[i]);
    Tensor<T> out(Shape{1});
    out.data[0] = static_cast<T>(acc);
    const int xi = x.i;
    Tensor<T> wts = weights;
    return push(std::move(out), needs(xi), tag, [xi, wts = std::move(wts)](Tape& t, const Tensor<T>& g) {
        if (!t.needs(xi)) return;
        Tensor<T>& gx = t.grad_buf(xi);
        for (std::size_t i = 0; i < wts.data.size(); ++i) gx.data[i] += g.data[0] * wts.data[i];
    });
}

template <class T>
void Tape<T>::backward(Var loss) {
    if (!loss.ok() || loss.i >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("backward: invalid loss var");
    if (node(loss.i).out.numel() != 1)
        throw std::invalid_argument("backward: loss is not scalar, shape " + node(loss.i).out.shape.str());
    for (Node& n : nodes_) n.has_grad = false;
    grad_buf(loss.i).data[0] = T(1);
    for (int i = loss.i; i >= 0; --i) {
        Node& n = node(i);
        if (!n.has_grad || !n.needs_grad) continue;
        if (n.back) n.back(*this, n.grad);
        if (n.external) {
            Parameter<T>* p = n.external;
            for (std::size_t j = 0; j < p->grad.data.size(); ++j) p->grad.data[j] += n.grad.data[j];
            p->has_grad = true;
        }
    }
}

template <class T>
void rmsprop_step(const std::vector<Parameter<T>*>& params, T lr, T decay, T eps) {
    bool any = false;
    for (const Parameter<T>* p : params) any = any || p->has_grad;
    if (!any) throw std::invalid_argument("rmsprop_step: no gradients populated; call backward first");
    for (Parameter<T>* p : params) {
        const std::int64_t n = p->value.numel();
        T* v = p->value.ptr();
        T* g = p->grad.ptr();
        T* s = p->rms.ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            s[i] = decay * s[i] + (T(1) - decay) * g[i] * g[i];
            v[i] -= lr * g[i] / (std::sqrt(s[i]) + eps);
            g[i] = T(0);
        }
        p->has_grad = false;
    }
}

template class Tape<float>;
template class Tape<double>;
template void rmsprop_step<float>(const std::vector<Parameter<float>*>&, float, float, float);
template void rmsprop_step<double>(const std::vector<Parameter<double>*>&, double, double, double);

} // namespace dunet
