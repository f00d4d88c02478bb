#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dunet/dynamic_illum.hpp"
#include "dunet/tape.hpp"

namespace dunet {

// unet: single encoder on the original image
// dicu: learnable correction in front of a single encoder
// dvsfn: dual encoders on the original and an externally corrected image
// dunet: learnable correction + dual encoders + fused decoder
enum class Variant { unet, dicu, dvsfn, dunet };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct DUNetConfig {
    Variant variant = Variant::unet;
    int base_channels = 8;
    int depth = 3;
    int in_h = 96;
    int in_w = 128;
    CorrectionParams illum{{3.0, 10.0, 30.0}, 0.01, 0.01, 1.0};
    int max_bottleneck_channels = 4096;

    bool dual() const { return variant == Variant::dvsfn || variant == Variant::dunet; }
    bool has_illum() const { return variant == Variant::dicu || variant == Variant::dunet; }
    void validate() const;
};

struct ConvLayer {
    Parameter<float> w; // [cout, cin, k, k]
    Parameter<float> b; // [cout]
};

struct EncoderLevel {
    ConvLayer c1, c2;
};

struct DecoderLevel {
    ConvLayer up, c1, c2;
};

// Parameter bank plus forward graph for one variant. Encoder level l runs two
// same-size 3x3 convolutions at base*2^l channels followed by a 2x2 max-pool;
// the bottleneck runs two convolutions at base*2^depth channels; dual variants
// keep two parameter-independent encoder/bottleneck stacks and concatenate
// both bottlenecks and both same-scale skip maps. Every 3x3 convolution is
// edge-replicated to preserve size and followed by rectification; the head is
// a 1x1 convolution to one channel with no activation.
class Model {
public:
    Model(const DUNetConfig& cfg, std::uint64_t seed);

    // logits [1,H,W]; corrected is required for dvsfn, forbidden for unet and
    // ignored by dicu/dunet (they correct internally)
    Tensor<float> forward(const Tensor<float>& original, const Tensor<float>* corrected = nullptr);

    Tape<float>::Var forward_graph(Tape<float>& tape, Tape<float>::Var original,
                                   std::optional<Tape<float>::Var> corrected);

    // build order: illumination kernels, encoder A, bottleneck A, encoder B,
    // bottleneck B, decoder (deep to shallow, up/c1/c2), head; weight before
    // bias within a layer
    std::vector<Parameter<float>*> parameters();
    std::int64_t parameter_count() const;

    const DUNetConfig& config() const { return cfg_; }
    DynamicIllumModule* illum() { return illum_ ? illum_.get() : nullptr; }

private:
    DUNetConfig cfg_;
    std::unique_ptr<DynamicIllumModule> illum_;
    std::vector<EncoderLevel> enc_a_, enc_b_;
    EncoderLevel bot_a_, bot_b_;
    std::vector<DecoderLevel> dec_; // deep to shallow
    ConvLayer head_;

    struct Encoded {
        std::vector<Tape<float>::Var> skips;
        Tape<float>::Var bottom;
    };
    Encoded encode(Tape<float>& tape, std::vector<EncoderLevel>& levels, EncoderLevel& bottleneck,
                   Tape<float>::Var x, const char* branch);
};

} // namespace dunet
