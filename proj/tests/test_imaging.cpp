#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "hpylori/error.hpp"
#include "hpylori/imaging.hpp"
#include "oracles.hpp"

using namespace hpylori;

namespace {
std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "hpylori_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}
}  // namespace

TEST_CASE("rgb_to_hsv on primaries and grays") {
    auto red = rgb_to_hsv({1, 0, 0});
    CHECK(red.hue == 0.0);
    CHECK(red.saturation == 1.0);
    CHECK(red.value == 1.0);
    CHECK(rgb_to_hsv({0, 1, 0}).hue == doctest::Approx(120.0));
    CHECK(rgb_to_hsv({0, 0, 1}).hue == doctest::Approx(240.0));
    auto gray = rgb_to_hsv({0.5f, 0.5f, 0.5f});
    CHECK(gray.hue == 0.0);
    CHECK(gray.saturation == 0.0);
    CHECK(rgb_to_hsv({0, 0, 0}).saturation == 0.0);
}

TEST_CASE("rgb_to_hsv agrees with the hexcone oracle on random colors") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int i = 0; i < 2000; ++i) {
        const Rgb c{u(rng), u(rng), u(rng)};
        const auto got = rgb_to_hsv(c);
        const auto want = oracle::hexcone(c.r, c.g, c.b);
        double dh = std::fabs(got.hue - want.h);
        dh = std::min(dh, 360.0 - dh);
        CHECK(dh <= 1e-9);
        CHECK(got.saturation == doctest::Approx(want.s).epsilon(1e-12));
        CHECK(got.value == doctest::Approx(want.v).epsilon(1e-12));
    }
}

TEST_CASE("hsv_to_rgb inverts rgb_to_hsv") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int i = 0; i < 500; ++i) {
        const Rgb c{u(rng), u(rng), u(rng)};
        const Rgb back = hsv_to_rgb(rgb_to_hsv(c));
        CHECK(back.r == doctest::Approx(c.r).epsilon(1e-5));
        CHECK(back.g == doctest::Approx(c.g).epsilon(1e-5));
        CHECK(back.b == doctest::Approx(c.b).epsilon(1e-5));
    }
}

TEST_CASE("red filter hue window is inclusive at both edges") {
    const RedFilterConfig cfg;
    CHECK(is_red_like(HsvPixel{0.0, 0.5, 0.5}, cfg));
    CHECK(is_red_like(HsvPixel{20.0, 0.5, 0.5}, cfg));
    CHECK(is_red_like(HsvPixel{340.0, 0.5, 0.5}, cfg));
    CHECK_FALSE(is_red_like(HsvPixel{20.001, 0.5, 0.5}, cfg));
    CHECK_FALSE(is_red_like(HsvPixel{339.999, 0.5, 0.5}, cfg));
    CHECK_FALSE(is_red_like(HsvPixel{180.0, 1.0, 1.0}, cfg));
}

TEST_CASE("red filter rejects washed-out and dark pixels") {
    const RedFilterConfig cfg;
    CHECK_FALSE(is_red_like(HsvPixel{0.0, 0.19, 0.9}, cfg));
    CHECK_FALSE(is_red_like(HsvPixel{0.0, 0.9, 0.19}, cfg));
    CHECK(is_red_like(HsvPixel{0.0, 0.2, 0.2}, cfg));
    CHECK_FALSE(is_red_like(Rgb{1, 1, 1}, cfg));
    CHECK_FALSE(is_red_like(Rgb{0, 0, 0}, cfg));
}

TEST_CASE("count_red counts exactly the red pixels") {
    RasterImage img(4, 3, Rgb{0.9f, 0.9f, 0.95f});
    img.set(0, 0, {0.8f, 0.1f, 0.1f});
    img.set(3, 2, {0.7f, 0.2f, 0.25f});
    img.set(1, 1, {0.2f, 0.3f, 0.8f});
    CHECK(count_red(img) == 2);
    CHECK(count_red(img) == oracle::count_red(img));
}

TEST_CASE("from_data validates length and range") {
    CHECK_THROWS_AS(RasterImage::from_data(2, 2, std::vector<float>(11, 0.5f)), Error);
    CHECK_THROWS_AS(RasterImage::from_data(1, 1, {0.1f, 1.5f, 0.2f}), Error);
    auto img = RasterImage::from_data(1, 1, {0.1f, 0.2f, 0.3f});
    CHECK(img.at(0, 0) == Rgb{0.1f, 0.2f, 0.3f});
}

TEST_CASE("resize by an integral factor is an exact block average") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    RasterImage img(16, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 16; ++x) img.set(x, y, {u(rng), u(rng), u(rng)});
    const RasterImage small = resize(img, 4, 2);
    REQUIRE(small.width() == 4);
    REQUIRE(small.height() == 2);
    for (int by = 0; by < 2; ++by) {
        for (int bx = 0; bx < 4; ++bx) {
            double r = 0;
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x) r += img.at(4 * bx + x, 4 * by + y).r;
            CHECK(small.at(bx, by).r == doctest::Approx(r / 16.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("resize keeps a constant image constant and rejects empty targets") {
    RasterImage img(10, 7, Rgb{0.3f, 0.6f, 0.9f});
    const RasterImage out = resize(img, 3, 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 3; ++x) CHECK(out.at(x, y).g == doctest::Approx(0.6f).epsilon(1e-6));
    CHECK_THROWS_AS(resize(img, 0, 4), Error);
}

TEST_CASE("crop copies the requested rectangle") {
    RasterImage img(5, 5);
    img.set(3, 4, {1, 0, 0});
    const RasterImage c = img.crop(2, 3, 3, 2);
    CHECK(c.width() == 3);
    CHECK(c.at(1, 1) == Rgb{1, 0, 0});
    CHECK_THROWS_AS(img.crop(4, 4, 2, 2), Error);
}

TEST_CASE("PNG round trip preserves 8-bit quantized values") {
    RasterImage img(7, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 7; ++x)
            img.set(x, y, {static_cast<float>(x * 30) / 255.0f, static_cast<float>(y * 80) / 255.0f, 1.0f});
    const auto path = temp_file("roundtrip.png");
    save_image(img, path);
    const RasterImage back = load_image(path);
    REQUIRE(back.width() == 7);
    REQUIRE(back.height() == 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 7; ++x) {
            CHECK(back.at(x, y).r == doctest::Approx(img.at(x, y).r).epsilon(1e-6));
            CHECK(back.at(x, y).g == doctest::Approx(img.at(x, y).g).epsilon(1e-6));
        }
}

TEST_CASE("load_image reports missing and malformed files") {
    try {
        load_image(temp_file("does_not_exist.png"));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingFile);
    }
    const auto junk = temp_file("junk.png");
    { std::ofstream(junk) << "not a png"; }
    CHECK_THROWS_AS(load_image(junk), Error);
}
