#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "hpylori/imaging.hpp"

namespace test {

struct FredCase {
    hpylori::RasterImage original;
    hpylori::RasterImage reconstruction;
    std::size_t red_orig;
    std::size_t red_recon;
};

/// An 8x8 image with exactly `n_red` red-like pixels at random positions.
/// The remaining pixels are drawn from colors the filter must reject,
/// including reddish hues that are too pale or too dark.
inline hpylori::RasterImage image_with_red(std::size_t n_red, std::mt19937_64& rng) {
    const std::vector<hpylori::Rgb> red{{0.9f, 0.1f, 0.1f}, {0.8f, 0.2f, 0.3f}, {0.7f, 0.25f, 0.1f},
                                        {0.6f, 0.1f, 0.25f}, {0.95f, 0.5f, 0.5f}};
    const std::vector<hpylori::Rgb> other{{0.3f, 0.4f, 0.8f}, {0.95f, 0.95f, 0.95f}, {0.1f, 0.02f, 0.02f},
                                          {0.9f, 0.8f, 0.8f}, {0.2f, 0.7f, 0.3f},   {0.5f, 0.2f, 0.9f}};
    std::vector<int> cells(64);
    for (int i = 0; i < 64; ++i) cells[i] = i;
    std::shuffle(cells.begin(), cells.end(), rng);
    hpylori::RasterImage img(8, 8);
    std::uniform_int_distribution<std::size_t> pick_red(0, red.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_other(0, other.size() - 1);
    for (int i = 0; i < 64; ++i) {
        const bool is_red = static_cast<std::size_t>(i) < n_red;
        img.set(cells[i] % 8, cells[i] / 8, is_red ? red[pick_red(rng)] : other[pick_other(rng)]);
    }
    return img;
}

/// 200 pairs: the first ones cover 0/0, k/0 and 0/k explicitly, the rest
/// are random counts in [0, 64].
inline std::vector<FredCase> fred_cases(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::pair<std::size_t, std::size_t>> counts{{0, 0}, {0, 0}, {1, 0}, {64, 0}, {0, 1},
                                                            {0, 64}, {5, 5}, {64, 64}, {3, 6}, {6, 3}};
    std::uniform_int_distribution<std::size_t> c(0, 64);
    while (counts.size() < 200) counts.emplace_back(c(rng), c(rng));
    std::vector<FredCase> out;
    for (auto [a, b] : counts) out.push_back({image_with_red(a, rng), image_with_red(b, rng), a, b});
    return out;
}

}  // namespace test
