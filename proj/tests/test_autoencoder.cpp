#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "ae_helpers.hpp"
#include "hpylori/autoencoder.hpp"
#include "hpylori/error.hpp"

using namespace hpylori;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "hpylori_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream(p, std::ios::binary) << bytes;
}

ErrorKind load_error(const std::filesystem::path& p) {
    try {
        load_model(p);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Io;  // "no error" marker
}

}  // namespace

TEST_CASE("default architecture has a 7x7x64 latent and mirrored decoder") {
    const AutoencoderConfig cfg;
    const auto latent = cfg.latent_shape();
    CHECK(latent.channels == 64);
    CHECK(latent.height == 7);
    CHECK(latent.width == 7);
    CHECK(cfg.encoder_sizes() == std::vector<int>{28, 28, 14, 7});
    CHECK(cfg.decoder_sizes() == std::vector<int>{7, 14, 28, 28});

    const auto model = AutoencoderModel::init(cfg, 1);
    const auto x = test::random_batch<float>(2, 28, 3, 5);
    const auto z = model.encode(x);
    CHECK(z.channels == 64);
    CHECK(z.batch == 2);
    CHECK(z.height == 7);
    CHECK(z.width == 7);
    const auto y = model.forward(x);
    CHECK(y.same_shape(x));
    for (float v : y.data) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("odd input sizes still round-trip") {
    AutoencoderConfig cfg;
    cfg.input_size = 27;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.encoder_sizes() == std::vector<int>{27, 27, 14, 7});
    CHECK(cfg.decoder_sizes() == std::vector<int>{7, 14, 27, 27});
}

TEST_CASE("invalid architectures are rejected") {
    AutoencoderConfig cfg;
    cfg.dec_channels = {64, 32, 4};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.enc_strides = {1, 2};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.kernel = 2;
    CHECK_THROWS_AS(cfg.validate(), Error);
    TrainConfig tc;
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), Error);
}

TEST_CASE("init is deterministic and follows the documented parameter layout") {
    const AutoencoderConfig cfg;
    const auto a = AutoencoderModel::init(cfg, 42);
    const auto b = AutoencoderModel::init(cfg, 42);
    const auto c = AutoencoderModel::init(cfg, 43);
    CHECK(a.blocks()[0].weight == b.blocks()[0].weight);
    CHECK(a.blocks()[0].weight != c.blocks()[0].weight);
    const auto& first = a.blocks()[0];
    CHECK(first.weight.size() == 32u * 3 * 3 * 3);
    CHECK(first.bias.empty());
    CHECK(std::all_of(first.gamma.begin(), first.gamma.end(), [](float g) { return g == 1.0f; }));
    CHECK(std::all_of(first.beta.begin(), first.beta.end(), [](float v) { return v == 0.0f; }));
    // Truncated at two standard deviations of sqrt(2 / fan_in).
    const float bound = 2.0f * std::sqrt(2.0f / 27.0f);
    for (float w : first.weight) CHECK(std::fabs(w) <= bound);
    const auto& last = a.blocks().back();
    CHECK(last.bias.size() == 3);
    CHECK_FALSE(last.batch_norm);
}

TEST_CASE("analytic gradients match central differences on a miniature network") {
    const auto rel = test::gradient_check_errors(7);
    REQUIRE(!rel.empty());
    for (const auto& [name, err] : rel) {
        INFO(name);
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("a single batch can be overfit") {
    const double loss = test::overfit_one_batch(500, 1e-3);
    CHECK(loss < 1e-3);
}

TEST_CASE("training is deterministic for a fixed seed") {
    std::vector<RasterImage> imgs;
    for (int i = 0; i < 12; ++i) imgs.push_back(test::random_smooth_image(28, 100 + i));
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 5;
    tc.seed = 3;
    const auto a = train(AutoencoderModel::init({}, 1), imgs, tc);
    const auto b = train(AutoencoderModel::init({}, 1), imgs, tc);
    CHECK(a.blocks()[2].weight == b.blocks()[2].weight);
    CHECK(a.blocks()[1].running_var == b.blocks()[1].running_var);
    REQUIRE(a.meta.epoch_losses.size() == 2);
    CHECK(a.meta.final_loss == a.meta.epoch_losses.back());
}

TEST_CASE("checkpoint round trip is bit exact") {
    auto model = AutoencoderModel::init({}, 5);
    model.meta.seed = 5;
    model.meta.epochs = 3;
    model.meta.final_loss = 0.0123;
    model.meta.epoch_losses = {0.1, 0.05, 0.0123};
    model.meta.config_hash = "abc123";
    // Put non-trivial values into the running statistics too.
    for (auto& b : model.blocks())
        for (std::size_t i = 0; i < b.running_mean.size(); ++i) {
            b.running_mean[i] = 0.01f * static_cast<float>(i);
            b.running_var[i] = 1.0f + 0.5f * static_cast<float>(i);
        }
    const auto path = temp_file("model.ckpt");
    save_model(model, path);
    const auto loaded = load_model(path);
    CHECK(loaded.config() == model.config());
    const auto a = model.all_arrays();
    const auto b = loaded.all_arrays();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].size() == b[i].size());
        CHECK(std::memcmp(a[i].data(), b[i].data(), a[i].size_bytes()) == 0);
    }
    CHECK(loaded.meta.seed == 5);
    CHECK(loaded.meta.epoch_losses == model.meta.epoch_losses);
    CHECK(loaded.meta.config_hash == "abc123");

    const auto path2 = temp_file("model2.ckpt");
    save_model(loaded, path2);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("damaged checkpoints are rejected with specific errors") {
    const auto good = temp_file("good.ckpt");
    save_model(AutoencoderModel::init({}, 1), good);
    const std::string bytes = slurp(good);
    const auto bad = temp_file("bad.ckpt");

    spit(bad, bytes.substr(0, bytes.size() - 3));
    CHECK(load_error(bad) == ErrorKind::CorruptFile);

    std::string wrong_magic = bytes;
    wrong_magic[0] = 'X';
    spit(bad, wrong_magic);
    CHECK(load_error(bad) == ErrorKind::CorruptFile);

    std::string wrong_version = bytes;
    wrong_version[4] = 9;
    spit(bad, wrong_version);
    CHECK(load_error(bad) == ErrorKind::VersionMismatch);

    spit(bad, bytes + "x");
    CHECK(load_error(bad) == ErrorKind::CorruptFile);

    CHECK(load_error(temp_file("absent.ckpt")) == ErrorKind::MissingFile);
}

TEST_CASE("image tensor conversion round trips") {
    std::vector<RasterImage> imgs{test::random_smooth_image(6, 1), test::random_smooth_image(6, 2)};
    const auto t = to_tensor<float>(imgs);
    CHECK(t.channels == 3);
    CHECK(t.batch == 2);
    CHECK(to_image(t, 1) == imgs[1]);
    std::vector<RasterImage> mixed{RasterImage(4, 4), RasterImage(5, 5)};
    CHECK_THROWS_AS(to_tensor<float>(mixed), Error);
}
