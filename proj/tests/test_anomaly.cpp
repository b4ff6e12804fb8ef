#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ae_helpers.hpp"
#include "fred_cases.hpp"
#include "hpylori/anomaly.hpp"
#include "hpylori/error.hpp"
#include "oracles.hpp"

using namespace hpylori;

TEST_CASE("f_red conventions for empty counts") {
    CHECK(f_red_from_counts(0, 0) == 1.0);
    CHECK(f_red_from_counts(4, 0) == std::numeric_limits<double>::infinity());
    CHECK(f_red_from_counts(0, 4) == 0.0);
    CHECK(f_red_from_counts(6, 4) == 1.5);
}

TEST_CASE("f_red on constructed pairs equals the hand-counted ratio") {
    for (const auto& c : test::fred_cases(21)) {
        REQUIRE(oracle::count_red(c.original) == c.red_orig);
        REQUIRE(oracle::count_red(c.reconstruction) == c.red_recon);
        double want;
        if (c.red_recon > 0) want = static_cast<double>(c.red_orig) / static_cast<double>(c.red_recon);
        else want = c.red_orig > 0 ? std::numeric_limits<double>::infinity() : 1.0;
        CHECK(f_red(c.original, c.reconstruction) == want);
    }
}

TEST_CASE("f_red rejects mismatched sizes") {
    CHECK_THROWS_AS(f_red(RasterImage(4, 4), RasterImage(4, 5)), Error);
}

TEST_CASE("window scores flag only ratios above one") {
    const auto model = AutoencoderModel::init({}, 2);
    std::vector<RasterImage> imgs;
    std::vector<WindowSpec> specs;
    for (int i = 0; i < 5; ++i) {
        imgs.push_back(test::random_smooth_image(28, 30 + i));
        specs.push_back({"s1", "p1", {i, i}, 224, 28});
    }
    // A saturated red square that an untrained sigmoid output cannot match.
    for (int y = 4; y < 12; ++y)
        for (int x = 4; x < 12; ++x) imgs[2].set(x, y, {0.9f, 0.05f, 0.05f});
    const auto batch = score_windows(model, imgs, specs);
    REQUIRE(batch.size() == 5);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        CHECK(batch[i].window == specs[i]);
        CHECK(batch[i].positive == (batch[i].f_red > 1.0));
        const auto single = score_window(model, imgs[i], specs[i]);
        CHECK(single.red_orig == batch[i].red_orig);
    }
    CHECK(batch[2].red_orig >= 64);
    CHECK_THROWS_AS(score_windows(model, imgs, std::span<const WindowSpec>(specs).first(2)), Error);
}
