#include <cmath>
#include <fstream>

#include "dunet/data.hpp"
#include "dunet/errors.hpp"

namespace dunet {

namespace {

// next whitespace-delimited token, skipping '#' comments
std::string next_token(std::istream& in, const std::filesystem::path& path) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw DataError(path.string() + ": truncated header");
    return tok;
}

struct PnmHeader {
    int w, h;
};

PnmHeader read_header(std::istream& in, const char* magic, const std::filesystem::path& path) {
    const std::string m = next_token(in, path);
    if (m != magic)
        throw DataError(path.string() + ": expected " + magic + " magic, got '" + m + "'");
    int w, h, maxval;
    try {
        w = std::stoi(next_token(in, path));
        h = std::stoi(next_token(in, path));
        maxval = std::stoi(next_token(in, path));
    } catch (const std::exception&) {
        throw DataError(path.string() + ": malformed header");
    }
    if (w <= 0 || h <= 0) throw DataError(path.string() + ": non-positive dimensions");
    if (maxval != 255) throw DataError(path.string() + ": maxval must be 255, got " + std::to_string(maxval));
    // exactly one whitespace byte separates the header from the payload; the
    // token reader already consumed it
    return {w, h};
}

std::uint8_t to_byte(float v) {
    long r = std::lround(v);
    if (r < 0) r = 0;
    if (r > 255) r = 255;
    return static_cast<std::uint8_t>(r);
}

} // namespace

Tensor<float> load_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open for reading");
    const PnmHeader hd = read_header(in, "P6", path);
    const std::size_t n = static_cast<std::size_t>(hd.w) * hd.h * 3;
    std::vector<std::uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw DataError(path.string() + ": truncated payload (" + std::to_string(in.gcount()) +
                        " of " + std::to_string(n) + " bytes)");
    Tensor<float> img(Shape{3, hd.h, hd.w});
    const std::size_t plane = static_cast<std::size_t>(hd.w) * hd.h;
    for (std::size_t p = 0; p < plane; ++p)
        for (std::size_t c = 0; c < 3; ++c)
            img.data[c * plane + p] = static_cast<float>(raw[p * 3 + c]);
    return img;
}

void save_ppm(const Tensor<float>& image, const std::filesystem::path& path) {
    if (image.shape.nd != 3 || image.shape[0] != 3)
        throw std::invalid_argument("save_ppm: expected [3,H,W], got " + image.shape.str());
    const int h = image.shape[1], w = image.shape[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "P6\n" << w << " " << h << "\n255\n";
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    std::vector<std::uint8_t> raw(plane * 3);
    for (std::size_t p = 0; p < plane; ++p)
        for (std::size_t c = 0; c < 3; ++c)
            raw[p * 3 + c] = to_byte(image.data[c * plane + p]);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw DataError(path.string() + ": write failed");
}

Tensor<std::uint8_t> load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open for reading");
    const PnmHeader hd = read_header(in, "P5", path);
    const std::size_t n = static_cast<std::size_t>(hd.w) * hd.h;
    Tensor<std::uint8_t> gray(Shape{hd.h, hd.w});
    in.read(reinterpret_cast<char*>(gray.data.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw DataError(path.string() + ": truncated payload");
    return gray;
}

void save_pgm(const Tensor<std::uint8_t>& gray, const std::filesystem::path& path) {
    if (gray.shape.nd != 2) throw std::invalid_argument("save_pgm: expected [H,W]");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "P5\n" << gray.shape[1] << " " << gray.shape[0] << "\n255\n";
    out.write(reinterpret_cast<const char*>(gray.data.data()),
              static_cast<std::streamsize>(gray.data.size()));
    if (!out) throw DataError(path.string() + ": write failed");
}

Tensor<std::uint8_t> load_mask(const std::filesystem::path& path) {
    Tensor<std::uint8_t> gray = load_pgm(path);
    for (auto& v : gray.data) v = v > 127 ? 1 : 0;
    return gray;
}

void save_mask(const Tensor<std::uint8_t>& mask, const std::filesystem::path& path) {
    Tensor<std::uint8_t> gray(mask.shape);
    for (std::size_t i = 0; i < mask.data.size(); ++i) gray.data[i] = mask.data[i] ? 255 : 0;
    save_pgm(gray, path);
}

} // namespace dunet
