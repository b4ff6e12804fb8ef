#pragma once

// Autoencoder fixtures shared by the unit tests and the acceptance suite.

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hpylori/autoencoder.hpp"

namespace test {

template <typename T>
hpylori::Tensor<T> random_batch(int n, int size, int channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    hpylori::Tensor<T> t(channels, n, size, size);
    for (auto& v : t.data) v = static_cast<T>(u(rng));
    return t;
}

/// Low-frequency color pattern, the kind of content a slide window holds.
inline hpylori::RasterImage random_smooth_image(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double fx[3], fy[3], ph[3], base[3];
    for (int c = 0; c < 3; ++c) {
        fx[c] = 0.05 + 0.25 * u(rng);
        fy[c] = 0.05 + 0.25 * u(rng);
        ph[c] = 6.28 * u(rng);
        base[c] = 0.3 + 0.4 * u(rng);
    }
    hpylori::RasterImage img(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            float v[3];
            for (int c = 0; c < 3; ++c) {
                v[c] = static_cast<float>(base[c] + 0.2 * std::sin(fx[c] * x + fy[c] * y + ph[c]));
            }
            img.set(x, y, {v[0], v[1], v[2]});
        }
    }
    return img;
}

/// 4x4 input, 2 channels, three blocks each way.
inline hpylori::AutoencoderConfig miniature_config() {
    hpylori::AutoencoderConfig cfg;
    cfg.input_size = 4;
    cfg.input_channels = 2;
    cfg.enc_channels = {2, 2, 2};
    cfg.enc_strides = {1, 2, 2};
    cfg.dec_channels = {2, 2, 2};
    cfg.dec_strides = {2, 2, 1};
    return cfg;
}

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// per trainable array of the miniature network, in double precision.
inline std::vector<std::pair<std::string, double>> gradient_check_errors(std::uint64_t seed) {
    using Model = hpylori::BasicAutoencoder<double>;
    Model model = Model::init(miniature_config(), seed);
    const auto x = random_batch<double>(3, 4, 2, seed + 1);

    hpylori::Gradients<double> analytic;
    model.loss_and_gradients(x, analytic, false);
    hpylori::Gradients<double> scratch;

    const double h = 1e-5;
    auto params = model.trainable();
    const auto names = model.trainable_names();
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t g = 0; g < params.size(); ++g) {
        double diff2 = 0.0;
        double a2 = 0.0;
        double n2 = 0.0;
        for (std::size_t j = 0; j < params[g].size(); ++j) {
            const double saved = params[g][j];
            params[g][j] = saved + h;
            const double up = model.loss_and_gradients(x, scratch, false);
            params[g][j] = saved - h;
            const double down = model.loss_and_gradients(x, scratch, false);
            params[g][j] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[g][j];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        const double scale = std::max(std::sqrt(a2), std::sqrt(n2));
        out.emplace_back(names[g], scale < 1e-12 ? 0.0 : std::sqrt(diff2) / scale);
    }
    return out;
}

/// Adam steps on one fixed batch of eight windows; returns the first
/// training loss below `target`, or the last loss after `max_steps`.
inline double overfit_one_batch(int max_steps, double target, int* steps_taken = nullptr) {
    std::vector<hpylori::RasterImage> imgs;
    for (int i = 0; i < 8; ++i) imgs.push_back(random_smooth_image(28, 500 + i));
    const auto batch = hpylori::to_tensor<float>(imgs);
    auto model = hpylori::AutoencoderModel::init({}, 17);
    hpylori::TrainConfig tc;
    hpylori::AdamState<float> state;
    double loss = 0.0;
    for (int step = 1; step <= max_steps; ++step) {
        loss = hpylori::backward_and_step(model, batch, tc, state);
        if (steps_taken) *steps_taken = step;
        if (loss < target) break;
    }
    return loss;
}

}  // namespace test
