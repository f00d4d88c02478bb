#include "dunet/net.hpp"

#include <cmath>

#include "dunet/rng.hpp"

namespace dunet {

Variant variant_from_string(const std::string& s) {
    if (s == "unet") return Variant::unet;
    if (s == "dicu") return Variant::dicu;
    if (s == "dvsfn") return Variant::dvsfn;
    if (s == "dunet") return Variant::dunet;
    throw std::invalid_argument("unknown variant '" + s + "' (expected unet|dicu|dvsfn|dunet)");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::unet: return "unet";
        case Variant::dicu: return "dicu";
        case Variant::dvsfn: return "dvsfn";
        case Variant::dunet: return "dunet";
    }
    return "?";
}

void DUNetConfig::validate() const {
    if (base_channels < 1) throw std::invalid_argument("DUNetConfig: base_channels must be positive");
    if (depth < 1) throw std::invalid_argument("DUNetConfig: depth must be positive");
    if (depth > 16) throw std::invalid_argument("DUNetConfig: depth too large");
    const int stride = 1 << depth;
    if (in_h < stride || in_w < stride || in_h % stride || in_w % stride)
        throw std::invalid_argument("DUNetConfig: input size " + std::to_string(in_h) + "x" +
                                    std::to_string(in_w) + " must be divisible by 2^depth = " +
                                    std::to_string(stride));
    const long long bottleneck = static_cast<long long>(base_channels) << depth;
    if (bottleneck > max_bottleneck_channels)
        throw std::invalid_argument("DUNetConfig: base_channels*2^depth = " + std::to_string(bottleneck) +
                                    " exceeds the memory cap " + std::to_string(max_bottleneck_channels));
    illum.validate();
}

namespace {

ConvLayer make_conv(Rng& rng, int cin, int cout, int k) {
    Tensor<float> w(Shape{cout, cin, k, k});
    const float bound = 1.0f / std::sqrt(static_cast<float>(cin * k * k));
    for (auto& v : w.data) v = rng.uniform_f(-bound, bound);
    return ConvLayer{Parameter<float>(std::move(w)), Parameter<float>(Tensor<float>(Shape{cout}))};
}

using Var = Tape<float>::Var;

Var conv_same3(Tape<float>& tape, Var x, ConvLayer& l, const std::string& tag) {
    const Var padded = tape.replicate_pad1(x, tag + "/pad");
    return tape.relu(tape.conv2d_valid(padded, tape.param(l.w, tag + "/w"),
                                       tape.param(l.b, tag + "/b"), tag),
                     tag + "/relu");
}

} // namespace

Model::Model(const DUNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.has_illum()) illum_ = std::make_unique<DynamicIllumModule>(cfg_.illum);

    Rng rng(seed);
    const int base = cfg_.base_channels, depth = cfg_.depth;
    const auto build_branch = [&](std::vector<EncoderLevel>& levels, EncoderLevel& bottleneck) {
        levels.clear();
        int cin = 3;
        for (int l = 0; l < depth; ++l) {
            const int cout = base << l;
            levels.push_back(EncoderLevel{make_conv(rng, cin, cout, 3), make_conv(rng, cout, cout, 3)});
            cin = cout;
        }
        const int cb = base << depth;
        bottleneck = EncoderLevel{make_conv(rng, cin, cb, 3), make_conv(rng, cb, cb, 3)};
    };

    build_branch(enc_a_, bot_a_);
    if (cfg_.dual()) build_branch(enc_b_, bot_b_);

    const int dual_factor = cfg_.dual() ? 2 : 1;
    dec_.clear();
    for (int l = depth - 1; l >= 0; --l) {
        const int cl = base << l;
        const int below = l == depth - 1 ? dual_factor * (base << depth) : base << (l + 1);
        const int skip_ch = dual_factor * cl;
        dec_.push_back(DecoderLevel{make_conv(rng, below, cl, 3),
                                    make_conv(rng, cl + skip_ch, cl, 3),
                                    make_conv(rng, cl, cl, 3)});
    }
    head_ = make_conv(rng, base, 1, 1);
}

Model::Encoded Model::encode(Tape<float>& tape, std::vector<EncoderLevel>& levels,
                             EncoderLevel& bottleneck, Var x, const char* branch) {
    Encoded e;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const std::string tag = std::string(branch) + "/enc" + std::to_string(l);
        x = conv_same3(tape, x, levels[l].c1, tag + "/c1");
        x = conv_same3(tape, x, levels[l].c2, tag + "/c2");
        e.skips.push_back(x);
        x = tape.maxpool2(x, tag + "/pool");
    }
    const std::string tag = std::string(branch) + "/bottleneck";
    x = conv_same3(tape, x, bottleneck.c1, tag + "/c1");
    x = conv_same3(tape, x, bottleneck.c2, tag + "/c2");
    e.bottom = x;
    return e;
}

Tape<float>::Var Model::forward_graph(Tape<float>& tape, Var original, std::optional<Var> corrected) {
    const Tensor<float>& img = tape.value(original);
    if (img.shape.nd != 3 || img.shape[0] != 3)
        throw std::invalid_argument("forward: expected a [3,H,W] image, got " + img.shape.str());
    const int h = img.shape[1], w = img.shape[2];
    const int stride = 1 << cfg_.depth;
    if (h % stride || w % stride)
        throw std::invalid_argument("forward: input " + std::to_string(h) + "x" + std::to_string(w) +
                                    " not divisible by 2^depth = " + std::to_string(stride));
    if (cfg_.variant == Variant::unet && corrected.has_value())
        throw std::invalid_argument("forward: unet takes the original image only");
    if (cfg_.variant == Variant::dvsfn && !corrected.has_value())
        throw std::invalid_argument("forward: dvsfn requires a corrected image");

    const float in_scale = 1.0f / 255.0f;
    Var bottom{};
    std::vector<Var> skips_a, skips_b;
    bool dual = cfg_.dual();

    if (cfg_.variant == Variant::dicu) {
        const Var corr = illum_->build_graph(tape, original);
        Encoded ea = encode(tape, enc_a_, bot_a_, tape.scale(corr, in_scale, "in-scale"), "A");
        skips_a = std::move(ea.skips);
        bottom = ea.bottom;
    } else {
        Encoded ea = encode(tape, enc_a_, bot_a_, tape.scale(original, in_scale, "in-scale"), "A");
        skips_a = std::move(ea.skips);
        bottom = ea.bottom;
        if (dual) {
            const Var corr = cfg_.variant == Variant::dunet ? illum_->build_graph(tape, original)
                                                            : *corrected;
            Encoded eb = encode(tape, enc_b_, bot_b_, tape.scale(corr, in_scale, "in-scale-b"), "B");
            skips_b = std::move(eb.skips);
            bottom = tape.concat_channels(bottom, eb.bottom, "fuse-bottleneck");
        }
    }

    Var x = bottom;
    for (std::size_t d = 0; d < dec_.size(); ++d) {
        const std::size_t l = dec_.size() - 1 - d; // encoder level this stage mirrors
        const std::string tag = "dec" + std::to_string(l);
        x = tape.upsample2(x, tag + "/up");
        x = conv_same3(tape, x, dec_[d].up, tag + "/upconv");
        Var skip = dual ? tape.concat_channels(skips_a[l], skips_b[l], tag + "/fuse-skip")
                        : skips_a[l];
        x = tape.concat_channels(x, skip, tag + "/skip");
        x = conv_same3(tape, x, dec_[d].c1, tag + "/c1");
        x = conv_same3(tape, x, dec_[d].c2, tag + "/c2");
    }
    return tape.conv2d_valid(x, tape.param(head_.w, "head/w"), tape.param(head_.b, "head/b"), "head");
}

Tensor<float> Model::forward(const Tensor<float>& original, const Tensor<float>* corrected) {
    Tape<float> tape;
    const Var orig = tape.leaf(original, false, "input");
    std::optional<Var> corr;
    if (corrected) corr = tape.leaf(*corrected, false, "input-corrected");
    return tape.value(forward_graph(tape, orig, corr));
}

std::vector<Parameter<float>*> Model::parameters() {
    std::vector<Parameter<float>*> out;
    if (illum_)
        for (Parameter<float>* p : illum_->parameters()) out.push_back(p);
    const auto add_layer = [&](ConvLayer& l) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    };
    const auto add_branch = [&](std::vector<EncoderLevel>& levels, EncoderLevel& bot) {
        for (auto& lv : levels) {
            add_layer(lv.c1);
            add_layer(lv.c2);
        }
        add_layer(bot.c1);
        add_layer(bot.c2);
    };
    add_branch(enc_a_, bot_a_);
    if (cfg_.dual()) add_branch(enc_b_, bot_b_);
    for (auto& lv : dec_) {
        add_layer(lv.up);
        add_layer(lv.c1);
        add_layer(lv.c2);
    }
    add_layer(head_);
    return out;
}

std::int64_t Model::parameter_count() const {
    std::int64_t n = 0;
    for (const Parameter<float>* p : const_cast<Model*>(this)->parameters()) n += p->value.numel();
    return n;
}

} // namespace dunet
