#include "dunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dunet/dynamic_illum.hpp"
#include "dunet/gaussian.hpp"
#include "dunet/rng.hpp"

namespace dunet {

namespace {

double eval_loss(const CheckFn& fn, const std::vector<Tensor<double>>& inputs) {
    Tape<double> tape;
    std::vector<CheckVar> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, false, "fd-input"));
    return tape.value(fn(tape, vars)).data[0];
}

Tensor<double> rand_tensor(Rng& rng, const Shape& s, double lo, double hi) {
    Tensor<double> t(s);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

} // namespace

double fd_max_rel_error(const CheckFn& fn, const std::vector<Tensor<double>>& inputs,
                        const FdOptions& opts) {
    Tape<double> tape;
    std::vector<CheckVar> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, true, "fd-input"));
    const CheckVar loss = fn(tape, vars);
    if (tape.value(loss).numel() != 1)
        throw std::invalid_argument("fd_max_rel_error: check function must return a scalar");
    tape.backward(loss);
    std::vector<Tensor<double>> analytic;
    analytic.reserve(inputs.size());
    for (const CheckVar v : vars) analytic.push_back(tape.grad(v));

    double max_err = 0.0;
    std::vector<Tensor<double>> work = inputs;
    for (std::size_t ii = 0; ii < inputs.size(); ++ii) {
        std::vector<std::int64_t> elems;
        if (ii < opts.check_elems.size() && opts.check_elems[ii].has_value()) {
            elems = *opts.check_elems[ii];
        } else {
            elems.resize(static_cast<std::size_t>(inputs[ii].numel()));
            for (std::size_t e = 0; e < elems.size(); ++e) elems[e] = static_cast<std::int64_t>(e);
        }
        for (const std::int64_t e : elems) {
            const double x0 = inputs[ii].data[static_cast<std::size_t>(e)];
            const double eps = opts.eps_scale * std::max(1.0, std::abs(x0));
            work[ii].data[static_cast<std::size_t>(e)] = x0 + eps;
            const double fp = eval_loss(fn, work);
            work[ii].data[static_cast<std::size_t>(e)] = x0 - eps;
            const double fm = eval_loss(fn, work);
            work[ii].data[static_cast<std::size_t>(e)] = x0;
            const double numeric = (fp - fm) / (2.0 * eps);
            double a = analytic[ii].data[static_cast<std::size_t>(e)];
            if (opts.flip_analytic_sign) a = -a;
            const double denom = std::max({std::abs(a), std::abs(numeric), opts.denom_floor});
            max_err = std::max(max_err, std::abs(a - numeric) / denom);
        }
    }
    return max_err;
}

namespace {

Tensor<double> rand_weights(Rng& rng, const Shape& s) {
    Tensor<double> w(s);
    for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);
    return w;
}

// One row of the table: run `seeds` independent cases and keep the worst error.
template <class CaseFn>
GradCheckRow run_row(const std::string& name, double threshold, int seeds, CaseFn make_case) {
    GradCheckRow row{name, 0.0, threshold, seeds, false};
    for (int s = 0; s < seeds; ++s) row.max_err = std::max(row.max_err, make_case(s));
    row.pass = row.max_err <= threshold;
    return row;
}

double check_composite_illum(int seed) {
    Rng rng(0xD1CEu + static_cast<std::uint64_t>(seed));
    const int h = 16, w = 20;
    CorrectionParams params;
    params.sigmas = {1.0, 2.0, 4.0};
    params.s1 = 0.05;
    params.s2 = 0.05;

    // smooth image from a coarse grid keeps every pixel away from the 0/255
    // clamps and the degenerate-pixel branches
    Tensor<double> image(Shape{3, h, w});
    {
        Tape<double> t;
        Tensor<double> grid(Shape{3, 3, 4});
        for (auto& v : grid.data) v = rng.uniform(70.0, 200.0);
        const auto g = t.leaf(grid, false);
        image = t.value(t.bilinear_resize(g, h, w));
    }

    std::array<Tensor<double>, 3> kernels;
    std::array<std::int64_t, 3> ksize{};
    for (int i = 0; i < 3; ++i) {
        const double sigma = params.sigmas[static_cast<std::size_t>(i)];
        kernels[static_cast<std::size_t>(i)] =
            gaussian_kernel({sigma, static_cast<int>(std::ceil(3.0 * sigma))});
        const int k = kernels[static_cast<std::size_t>(i)].shape[0];
        // reshape to [1,1,k,k] and jitter so the check is not at the symmetric point
        kernels[static_cast<std::size_t>(i)].shape = Shape{1, 1, k, k};
        for (auto& v : kernels[static_cast<std::size_t>(i)].data) v += rng.uniform(-1e-4, 1e-4);
        ksize[static_cast<std::size_t>(i)] = kernels[static_cast<std::size_t>(i)].numel();
    }

    // pass 1: record the balance window the backward pass treats as constant,
    // and zero the loss weight of every pixel sitting near a clamp, quantile or
    // min-branch switching point (the jitter the check contract calls for)
    double vmin, vmax;
    Tensor<double> wts(Shape{3, h, w});
    {
        Tape<double> t;
        const auto img = t.leaf(image, false);
        std::array<CheckVar, 3> kv;
        for (int i = 0; i < 3; ++i)
            kv[static_cast<std::size_t>(i)] = t.leaf(kernels[static_cast<std::size_t>(i)], false);
        const auto graph = illum_forward_graph(t, img, kv, params);
        vmin = graph.vmin;
        vmax = graph.vmax;

        Rng wrng(0xBEEFu + static_cast<std::uint64_t>(seed));
        for (auto& v : wts.data) v = wrng.uniform(-1.0, 1.0);
        const Tensor<double>& msr = t.value(graph.msr);
        const Tensor<double>& intm = t.value(graph.int_map);
        const Tensor<double>& int1 = t.value(graph.int1);
        const std::int64_t plane = static_cast<std::int64_t>(h) * w;
        for (std::int64_t p = 0; p < plane; ++p) {
            bool keep = std::abs(msr.data[static_cast<std::size_t>(p)] - vmin) > 1e-3 &&
                        std::abs(msr.data[static_cast<std::size_t>(p)] - vmax) > 1e-3;
            double big = image.data[static_cast<std::size_t>(p)];
            for (int c = 1; c < 3; ++c)
                big = std::max(big, image.data[static_cast<std::size_t>(c * plane + p)]);
            const double t1 = 255.0 / big;
            const double t2 = int1.data[static_cast<std::size_t>(p)] /
                              intm.data[static_cast<std::size_t>(p)];
            keep = keep && std::abs(t1 - t2) > 5e-3;
            const double a = std::min(t1, t2);
            for (int c = 0; c < 3; ++c) {
                const double pre = a * image.data[static_cast<std::size_t>(c * plane + p)];
                keep = keep && pre > 0.5 && pre < 254.5;
            }
            if (!keep)
                for (int c = 0; c < 3; ++c) wts.data[static_cast<std::size_t>(c * plane + p)] = 0.0;
        }
    }

    const CheckFn fn = [&](Tape<double>& t, const std::vector<CheckVar>& vars) {
        const auto img = t.leaf(image, false);
        std::array<CheckVar, 3> kv{vars[0], vars[1], vars[2]};
        const auto graph = illum_forward_graph(t, img, kv, params, &vmin, &vmax);
        return t.weighted_sum(graph.out, wts);
    };

    // sample kernel entries; full sweeps over 81+169+625 entries x 20 seeds
    // would dominate the suite runtime
    FdOptions opts;
    opts.eps_scale = 1e-6;
    opts.check_elems.resize(3);
    Rng erng(0xE125u + static_cast<std::uint64_t>(seed));
    for (int i = 0; i < 3; ++i) {
        std::vector<std::int64_t> elems;
        for (int j = 0; j < 12; ++j) elems.push_back(erng.uniform_int(ksize[static_cast<std::size_t>(i)]));
        std::sort(elems.begin(), elems.end());
        elems.erase(std::unique(elems.begin(), elems.end()), elems.end());
        opts.check_elems[static_cast<std::size_t>(i)] = std::move(elems);
    }
    return fd_max_rel_error(fn, {kernels[0], kernels[1], kernels[2]}, opts);
}

} // namespace

std::vector<GradCheckRow> gradcheck_suite(int seeds, bool inject_fault) {
    std::vector<GradCheckRow> rows;

    rows.push_back(run_row("scale(x,3)", 1e-9, seeds, [](int seed) {
        Rng rng(100 + static_cast<std::uint64_t>(seed));
        const auto x = rand_tensor(rng, Shape{2, 4, 5}, -2.0, 2.0);
        const auto w = rand_weights(rng, x.shape);
        FdOptions opts;
        opts.denom_floor = 1.0; // exact up to rounding; measure against the O(1) scale
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.scale(v[0], 3.0), w);
            },
            {x}, opts);
    }));

    rows.push_back(run_row("add", 1e-3, seeds, [](int seed) {
        Rng rng(200 + static_cast<std::uint64_t>(seed));
        const auto a = rand_tensor(rng, Shape{3, 4, 4}, -2.0, 2.0);
        const auto b = rand_tensor(rng, Shape{3, 4, 4}, -2.0, 2.0);
        const auto w = rand_weights(rng, a.shape);
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.add(v[0], v[1]), w);
            },
            {a, b});
    }));

    rows.push_back(run_row("sub", 1e-3, seeds, [](int seed) {
        Rng rng(300 + static_cast<std::uint64_t>(seed));
        const auto a = rand_tensor(rng, Shape{3, 4, 4}, -2.0, 2.0);
        const auto b = rand_tensor(rng, Shape{3, 4, 4}, -2.0, 2.0);
        const auto w = rand_weights(rng, a.shape);
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.sub(v[0], v[1]), w);
            },
            {a, b});
    }));

    rows.push_back(run_row("mul", 1e-3, seeds, [](int seed) {
        Rng rng(400 + static_cast<std::uint64_t>(seed));
        const auto a = rand_tensor(rng, Shape{3, 4, 4}, -2.0, 2.0);
        const auto b = rand_tensor(rng, Shape{3, 4, 4}, -2.0, 2.0);
        const auto w = rand_weights(rng, a.shape);
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.mul(v[0], v[1]), w);
            },
            {a, b});
    }));

    rows.push_back(run_row("relu", 1e-3, seeds, [](int seed) {
        Rng rng(500 + static_cast<std::uint64_t>(seed));
        Tensor<double> x(Shape{2, 5, 5});
        // keep every element at least 0.01 from the kink (eps here is <= 1e-5)
        for (auto& v : x.data) {
            const double u = rng.uniform(-1.0, 1.0);
            v = (u < 0 ? -1.0 : 1.0) * (0.01 + std::abs(u));
        }
        const auto w = rand_weights(rng, x.shape);
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.relu(v[0]), w);
            },
            {x});
    }));

    rows.push_back(run_row("log1p_pos", 1e-3, seeds, [](int seed) {
        Rng rng(600 + static_cast<std::uint64_t>(seed));
        const auto x = rand_tensor(rng, Shape{2, 4, 4}, 0.0, 4.0);
        const auto w = rand_weights(rng, x.shape);
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.log1p_pos(v[0]), w);
            },
            {x});
    }));

    rows.push_back(run_row("log_shift", 1e-3, seeds, [](int seed) {
        Rng rng(700 + static_cast<std::uint64_t>(seed));
        const auto x = rand_tensor(rng, Shape{2, 4, 4}, 0.0, 200.0);
        const auto w = rand_weights(rng, x.shape);
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.log_shift(v[0], 0.5), w);
            },
            {x});
    }));

    rows.push_back(run_row("conv2d_valid", 1e-3, seeds, [](int seed) {
        Rng rng(800 + static_cast<std::uint64_t>(seed));
        const auto x = rand_tensor(rng, Shape{2, 6, 7}, -1.0, 1.0);
        const auto k = rand_tensor(rng, Shape{3, 2, 3, 3}, -1.0, 1.0);
        const auto b = rand_tensor(rng, Shape{3}, -0.5, 0.5);
        Rng wrng(801 + static_cast<std::uint64_t>(seed));
        const auto w = rand_weights(wrng, Shape{3, 4, 5});
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.conv2d_valid(v[0], v[1], v[2]), w);
            },
            {x, k, b});
    }));

    rows.push_back(run_row("maxpool2", 1e-3, seeds, [](int seed) {
        Rng rng(900 + static_cast<std::uint64_t>(seed));
        Tensor<double> x(Shape{2, 4, 6});
        // regenerate until every 2x2 block has a clear maximum
        bool ok = false;
        while (!ok) {
            for (auto& v : x.data) v = rng.uniform(0.0, 1.0);
            ok = true;
            for (int c = 0; c < 2 && ok; ++c)
                for (int y = 0; y < 4 && ok; y += 2)
                    for (int xx = 0; xx < 6 && ok; xx += 2) {
                        double vals[4] = {x.at3(c, y, xx), x.at3(c, y, xx + 1),
                                          x.at3(c, y + 1, xx), x.at3(c, y + 1, xx + 1)};
                        std::sort(vals, vals + 4);
                        if (vals[3] - vals[2] < 1e-3) ok = false;
                    }
        }
        const auto w = rand_weights(rng, Shape{2, 2, 3});
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.maxpool2(v[0]), w);
            },
            {x});
    }));

    rows.push_back(run_row("upsample2", 1e-3, seeds, [](int seed) {
        Rng rng(1000 + static_cast<std::uint64_t>(seed));
        const auto x = rand_tensor(rng, Shape{2, 3, 4}, -2.0, 2.0);
        const auto w = rand_weights(rng, Shape{2, 6, 8});
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.upsample2(v[0]), w);
            },
            {x});
    }));

    rows.push_back(run_row("concat_channels", 1e-3, seeds, [](int seed) {
        Rng rng(1100 + static_cast<std::uint64_t>(seed));
        const auto a = rand_tensor(rng, Shape{2, 4, 4}, -1.0, 1.0);
        const auto b = rand_tensor(rng, Shape{3, 4, 4}, -1.0, 1.0);
        const auto w = rand_weights(rng, Shape{5, 4, 4});
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.concat_channels(v[0], v[1]), w);
            },
            {a, b});
    }));

    rows.push_back(run_row("channel_mean", 1e-3, seeds, [](int seed) {
        Rng rng(1200 + static_cast<std::uint64_t>(seed));
        const auto x = rand_tensor(rng, Shape{3, 5, 4}, 0.0, 255.0);
        const auto w = rand_weights(rng, Shape{1, 5, 4});
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.channel_mean(v[0]), w);
            },
            {x});
    }));

    rows.push_back(run_row("bilinear_resize", 1e-3, seeds, [](int seed) {
        Rng rng(1300 + static_cast<std::uint64_t>(seed));
        const auto x = rand_tensor(rng, Shape{1, 5, 6}, 0.0, 10.0);
        const auto w = rand_weights(rng, Shape{1, 9, 11});
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.bilinear_resize(v[0], 9, 11), w);
            },
            {x});
    }));

    rows.push_back(run_row("replicate_pad1", 1e-3, seeds, [](int seed) {
        Rng rng(1400 + static_cast<std::uint64_t>(seed));
        const auto x = rand_tensor(rng, Shape{2, 4, 5}, -2.0, 2.0);
        const auto w = rand_weights(rng, Shape{2, 6, 7});
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.replicate_pad1(v[0]), w);
            },
            {x});
    }));

    rows.push_back(run_row("bce_with_logits", 1e-3, seeds, [](int seed) {
        Rng rng(1500 + static_cast<std::uint64_t>(seed));
        const auto z = rand_tensor(rng, Shape{1, 5, 6}, -3.0, 3.0);
        Tensor<double> tgt(z.shape);
        for (auto& v : tgt.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.bce_with_logits(v[0], tgt);
            },
            {z});
    }));

    rows.push_back(run_row("color_balance", 1e-3, seeds, [](int seed) {
        Rng rng(1600 + static_cast<std::uint64_t>(seed));
        const int n = 48;
        Tensor<double> x(Shape{1, 6, 8});
        for (auto& v : x.data) v = rng.uniform(0.0, 10.0);
        // exclude elements on or near the quantile values: perturbing those
        // moves the window the backward treats as constant
        std::vector<double> sorted(x.data.begin(), x.data.end());
        std::sort(sorted.begin(), sorted.end());
        const double vmin = sorted[static_cast<std::size_t>(std::floor(n * 0.1))];
        const double vmax = sorted[static_cast<std::size_t>(std::floor(n * 0.85))];
        std::vector<std::int64_t> elems;
        for (std::int64_t i = 0; i < n; ++i) {
            const double v = x.data[static_cast<std::size_t>(i)];
            if (std::abs(v - vmin) > 1e-2 && std::abs(v - vmax) > 1e-2) elems.push_back(i);
        }
        const auto w = rand_weights(rng, x.shape);
        FdOptions opts;
        opts.check_elems.push_back(std::move(elems));
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.color_balance(v[0], 0.1, 0.15), w);
            },
            {x}, opts);
    }));

    rows.push_back(run_row("chromatic_scale", 1e-3, seeds, [](int seed) {
        Rng rng(1700 + static_cast<std::uint64_t>(seed));
        const int h = 4, w = 5;
        Tensor<double> img(Shape{3, h, w});
        Tensor<double> intm(Shape{1, h, w});
        Tensor<double> int1(Shape{1, h, w});
        for (int p = 0; p < h * w; ++p) {
            // margins: distinct channel max, min branches separated, products
            // clear of the 0/255 clamp
            while (true) {
                double r = rng.uniform(40.0, 220.0);
                double g = rng.uniform(40.0, 220.0);
                double b = rng.uniform(40.0, 220.0);
                double iv = rng.uniform(60.0, 200.0);
                double ov = rng.uniform(20.0, 230.0);
                double big = std::max({r, g, b});
                double mid = r + g + b - big - std::min({r, g, b});
                const double t1 = 255.0 / big, t2 = ov / iv;
                const double a = std::min(t1, t2);
                const double pre_max = a * big;
                if (big - mid < 0.5) continue;
                if (std::abs(t1 - t2) < 0.02) continue;
                if (pre_max > 254.0) continue;
                img.data[static_cast<std::size_t>(p)] = r;
                img.data[static_cast<std::size_t>(h * w + p)] = g;
                img.data[static_cast<std::size_t>(2 * h * w + p)] = b;
                intm.data[static_cast<std::size_t>(p)] = iv;
                int1.data[static_cast<std::size_t>(p)] = ov;
                break;
            }
        }
        const auto wt = rand_weights(rng, img.shape);
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                return t.weighted_sum(t.chromatic_scale(v[0], v[1], v[2]), wt);
            },
            {img, intm, int1});
    }));

    rows.push_back(run_row("composite conv-relu-pool-bce", 1e-3, seeds, [](int seed) {
        Rng rng(1800 + static_cast<std::uint64_t>(seed));
        // positive weights keep the conv outputs away from the relu kink
        const auto x = rand_tensor(rng, Shape{1, 8, 8}, 0.5, 1.5);
        const auto k = rand_tensor(rng, Shape{1, 1, 3, 3}, 0.2, 1.0);
        const auto b = rand_tensor(rng, Shape{1}, 0.1, 0.5);
        Tensor<double> tgt(Shape{1, 3, 3});
        for (auto& v : tgt.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        return fd_max_rel_error(
            [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                auto y = t.conv2d_valid(v[0], v[1], v[2]);
                y = t.relu(y);
                y = t.maxpool2(y);
                return t.bce_with_logits(y, tgt);
            },
            {x, k, b});
    }));

    rows.push_back(run_row("dynamic-illum composite (kernels)", 1e-2, seeds, check_composite_illum));

    if (inject_fault) {
        rows.push_back(run_row("conv2d_valid [injected sign-flip]", 1e-3, 1, [](int seed) {
            Rng rng(4242 + static_cast<std::uint64_t>(seed));
            const auto x = rand_tensor(rng, Shape{1, 5, 5}, -1.0, 1.0);
            const auto k = rand_tensor(rng, Shape{1, 1, 3, 3}, -1.0, 1.0);
            const auto w = rand_weights(rng, Shape{1, 3, 3});
            FdOptions opts;
            opts.flip_analytic_sign = true;
            return fd_max_rel_error(
                [&](Tape<double>& t, const std::vector<CheckVar>& v) {
                    return t.weighted_sum(t.conv2d_valid(v[0], v[1], Tape<double>::none()), w);
                },
                {x, k}, opts);
        }));
    }

    return rows;
}

bool gradcheck_all_pass(const std::vector<GradCheckRow>& rows) {
    for (const auto& r : rows)
        if (!r.pass) return false;
    return !rows.empty();
}

} // namespace dunet
