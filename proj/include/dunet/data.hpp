#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dunet/tensor.hpp"

namespace dunet {

// P6 binary PPM, maxval 255, [3,H,W] float image in [0,255]. Writing rounds to
// the nearest byte, so byte-valued images round-trip losslessly.
Tensor<float> load_ppm(const std::filesystem::path& path);
void save_ppm(const Tensor<float>& image, const std::filesystem::path& path);

// P5 binary PGM, maxval 255. Masks binarize with the >127 rule.
Tensor<std::uint8_t> load_pgm(const std::filesystem::path& path);
void save_pgm(const Tensor<std::uint8_t>& gray, const std::filesystem::path& path);

// [H,W] mask of {0,1}
Tensor<std::uint8_t> load_mask(const std::filesystem::path& path);
void save_mask(const Tensor<std::uint8_t>& mask, const std::filesystem::path& path);

struct Sample {
    std::string id;
    Tensor<float> image;       // [3,H,W] in [0,255]
    Tensor<std::uint8_t> mask; // [H,W] of {0,1}
};

// Directory convention: images/<id>.ppm + masks/<id>.pgm, every image paired,
// result sorted by id.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

// One generated scene: reflectance composed of a skin-tone background and 1-3
// reddish elliptical lesions, multiplied by a smooth illumination field
// rendered from a coarse grid. The flat twin is the same reflectance under
// unit illumination.
struct SynthSample {
    Sample sample;
    Tensor<float> flat_image; // [3,H,W], S == 1
    Tensor<float> illum;      // [1,H,W], the ground-truth S field
};

std::vector<SynthSample> synth_generate(int count, std::uint64_t seed, int h, int w,
                                        double s_lo, double s_hi);

// Writes images/, masks/, flat/ and meta.txt under out_dir.
void write_synth_dataset(const std::vector<SynthSample>& samples, std::uint64_t seed,
                         double s_lo, double s_hi, const std::filesystem::path& out_dir);

// Seed-deterministic shuffle, then floor(N*ratio) per split with the remainder
// handed out by descending fractional part.
std::array<std::vector<Sample>, 3> split_dataset(const std::vector<Sample>& dataset,
                                                 const std::array<double, 3>& ratios,
                                                 std::uint64_t seed);

} // namespace dunet
