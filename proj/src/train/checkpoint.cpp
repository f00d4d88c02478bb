#include <bit>
#include <cstring>
#include <fstream>

#include "dunet/errors.hpp"
#include "dunet/train.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

namespace dunet {

namespace {

constexpr char kMagic[8] = {'D', 'U', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw DataError(path.string() + ": truncated checkpoint");
    return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model, std::uint64_t step,
                     std::uint64_t seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out.write(kMagic, sizeof kMagic);
    put(out, kVersion);
    const DUNetConfig& c = model.config();
    put(out, static_cast<std::uint8_t>(c.variant));
    put(out, static_cast<std::int32_t>(c.base_channels));
    put(out, static_cast<std::int32_t>(c.depth));
    put(out, static_cast<std::int32_t>(c.in_h));
    put(out, static_cast<std::int32_t>(c.in_w));
    for (double s : c.illum.sigmas) put(out, s);
    put(out, c.illum.s1);
    put(out, c.illum.s2);
    put(out, c.illum.log_offset);
    put(out, step);
    put(out, seed);

    const auto params = model.parameters();
    put(out, static_cast<std::uint32_t>(params.size()));
    for (const Parameter<float>* p : params) {
        put(out, static_cast<std::uint32_t>(p->value.shape.nd));
        for (int i = 0; i < p->value.shape.nd; ++i)
            put(out, static_cast<std::uint32_t>(p->value.shape[i]));
        out.write(reinterpret_cast<const char*>(p->value.ptr()),
                  static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
    }
    if (!out) throw DataError(path.string() + ": write failed");
}

Model load_checkpoint(const std::filesystem::path& path, std::uint64_t* step, std::uint64_t* seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open for reading");
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw DataError(path.string() + ": not a dunet checkpoint");
    const auto version = get<std::uint32_t>(in, path);
    if (version != kVersion)
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));

    DUNetConfig c;
    const auto variant = get<std::uint8_t>(in, path);
    if (variant > 3) throw DataError(path.string() + ": bad variant tag");
    c.variant = static_cast<Variant>(variant);
    c.base_channels = get<std::int32_t>(in, path);
    c.depth = get<std::int32_t>(in, path);
    c.in_h = get<std::int32_t>(in, path);
    c.in_w = get<std::int32_t>(in, path);
    for (double& s : c.illum.sigmas) s = get<double>(in, path);
    c.illum.s1 = get<double>(in, path);
    c.illum.s2 = get<double>(in, path);
    c.illum.log_offset = get<double>(in, path);
    const auto step_v = get<std::uint64_t>(in, path);
    const auto seed_v = get<std::uint64_t>(in, path);
    if (step) *step = step_v;
    if (seed) *seed = seed_v;

    Model model(c, 0);
    const auto params = model.parameters();
    const auto n = get<std::uint32_t>(in, path);
    if (n != params.size())
        throw DataError(path.string() + ": checkpoint holds " + std::to_string(n) +
                        " tensors but the config builds " + std::to_string(params.size()));
    for (Parameter<float>* p : params) {
        const auto rank = get<std::uint32_t>(in, path);
        if (rank != static_cast<std::uint32_t>(p->value.shape.nd))
            throw DataError(path.string() + ": tensor rank mismatch");
        for (int i = 0; i < p->value.shape.nd; ++i) {
            const auto d = get<std::uint32_t>(in, path);
            if (d != static_cast<std::uint32_t>(p->value.shape[i]))
                throw DataError(path.string() + ": tensor dim mismatch");
        }
        in.read(reinterpret_cast<char*>(p->value.ptr()),
                static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
        if (!in) throw DataError(path.string() + ": truncated tensor payload");
    }
    return model;
}

} // namespace dunet
