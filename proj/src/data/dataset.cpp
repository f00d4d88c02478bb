#include <algorithm>
#include <cmath>
#include <map>

#include "dunet/data.hpp"
#include "dunet/errors.hpp"
#include "dunet/rng.hpp"

namespace dunet {

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path img_dir = dir / "images";
    const fs::path mask_dir = dir / "masks";

    std::map<std::string, fs::path> images, masks;
    if (fs::exists(img_dir))
        for (const auto& e : fs::directory_iterator(img_dir))
            if (e.path().extension() == ".ppm") images[e.path().stem().string()] = e.path();
    if (fs::exists(mask_dir))
        for (const auto& e : fs::directory_iterator(mask_dir))
            if (e.path().extension() == ".pgm") masks[e.path().stem().string()] = e.path();

    for (const auto& [id, p] : images)
        if (!masks.count(id)) throw DataError(dir.string() + ": image '" + id + "' has no mask");
    for (const auto& [id, p] : masks)
        if (!images.count(id)) throw DataError(dir.string() + ": mask '" + id + "' has no image");

    std::vector<Sample> out;
    out.reserve(images.size());
    for (const auto& [id, p] : images) { // std::map iterates in id order
        Sample s;
        s.id = id;
        s.image = load_ppm(p);
        s.mask = load_mask(masks.at(id));
        if (s.mask.shape[0] != s.image.shape[1] || s.mask.shape[1] != s.image.shape[2])
            throw DataError(dir.string() + ": '" + id + "' image " + s.image.shape.str() +
                            " does not match mask " + s.mask.shape.str());
        out.push_back(std::move(s));
    }
    return out;
}

std::array<std::vector<Sample>, 3> split_dataset(const std::vector<Sample>& dataset,
                                                 const std::array<double, 3>& ratios,
                                                 std::uint64_t seed) {
    for (double r : ratios)
        if (r < 0.0) throw std::invalid_argument("split_dataset: ratios must be non-negative");
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split_dataset: ratios must sum to 1, got " + std::to_string(sum));
    const std::int64_t n = static_cast<std::int64_t>(dataset.size());
    if (n < 3) throw std::invalid_argument("split_dataset: need at least 3 samples");

    std::vector<std::int64_t> idx(dataset.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
    Rng rng(seed);
    rng.shuffle(idx);

    std::array<std::int64_t, 3> sizes{};
    std::array<double, 3> frac{};
    std::int64_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = static_cast<double>(n) * ratios[static_cast<std::size_t>(i)];
        sizes[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::floor(exact));
        frac[static_cast<std::size_t>(i)] = exact - std::floor(exact);
        assigned += sizes[static_cast<std::size_t>(i)];
    }
    // hand the remainder out by descending fractional part, ties to the earlier split
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return frac[static_cast<std::size_t>(a)] > frac[static_cast<std::size_t>(b)]; });
    for (std::int64_t r = 0; r < n - assigned; ++r)
        sizes[static_cast<std::size_t>(order[static_cast<std::size_t>(r % 3)])]++;

    std::array<std::vector<Sample>, 3> out;
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        for (std::int64_t j = 0; j < sizes[static_cast<std::size_t>(i)]; ++j, ++pos)
            out[static_cast<std::size_t>(i)].push_back(dataset[static_cast<std::size_t>(idx[pos])]);
    }
    return out;
}

} // namespace dunet
