#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hpylori/imaging.hpp"

namespace hpylori {

/// Hourglass convolutional autoencoder. Every hidden block is
/// conv -> batch-norm -> leaky-ReLU; the last decoder block is a biased
/// transposed conv followed by a sigmoid. Convolutions use padding
/// kernel/2; decoder output padding is derived so each decoder block
/// restores the mirrored encoder size exactly.
struct AutoencoderConfig {
    int input_size = 28;
    int input_channels = 3;
    std::vector<int> enc_channels{32, 64, 64};
    std::vector<int> enc_strides{1, 2, 2};
    std::vector<int> dec_channels{64, 32, 3};
    std::vector<int> dec_strides{2, 2, 1};
    int kernel = 3;
    double leaky_slope = 0.01;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    /// Throws Error(Config) when the stack cannot round-trip the input size.
    void validate() const;

    /// Spatial size entering each encoder block, plus the latent size last.
    std::vector<int> encoder_sizes() const;
    /// Spatial size entering each decoder block, plus the output size last.
    std::vector<int> decoder_sizes() const;

    struct Shape {
        int channels;
        int height;
        int width;
    };
    Shape latent_shape() const;

    bool operator==(const AutoencoderConfig&) const = default;
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct TrainMeta {
    int epochs = 0;
    double final_loss = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> epoch_losses;
    std::string config_hash;
};

/// Activations in channel-major layout (C, N, H, W).
template <typename T>
struct Tensor {
    int channels = 0;
    int batch = 0;
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int c, int n, int h, int w, T fill = T(0))
        : channels(c), batch(n), height(h), width(w),
          data(static_cast<std::size_t>(c) * n * h * w, fill) {}

    std::size_t plane() const noexcept { return static_cast<std::size_t>(batch) * height * width; }
    T& at(int c, int n, int y, int x) {
        return data[((static_cast<std::size_t>(c) * batch + n) * height + y) * width + x];
    }
    T at(int c, int n, int y, int x) const {
        return data[((static_cast<std::size_t>(c) * batch + n) * height + y) * width + x];
    }
    bool same_shape(const Tensor& o) const noexcept {
        return channels == o.channels && batch == o.batch && height == o.height && width == o.width;
    }
};

enum class Activation { LeakyRelu, Sigmoid };

template <typename T>
struct ConvBlock {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;
    int out_pad = 0;
    int in_size = 0;
    int out_size = 0;
    bool transposed = false;
    bool batch_norm = true;
    Activation activation = Activation::LeakyRelu;

    /// conv: (out, in, k, k); transposed: (in, out, k, k).
    std::vector<T> weight;
    std::vector<T> bias;  // empty when batch_norm is set
    std::vector<T> gamma;
    std::vector<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;
};

/// Gradients for the trainable arrays, in BasicAutoencoder::trainable() order.
template <typename T>
using Gradients = std::vector<std::vector<T>>;

template <typename T>
struct AdamState {
    long step = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
};

template <typename T>
class BasicAutoencoder {
public:
    /// He-scaled truncated-normal kernels, zero biases, unit BN scale.
    static BasicAutoencoder init(const AutoencoderConfig& cfg, std::uint64_t seed);

    const AutoencoderConfig& config() const noexcept { return config_; }
    std::vector<ConvBlock<T>>& blocks() noexcept { return blocks_; }
    const std::vector<ConvBlock<T>>& blocks() const noexcept { return blocks_; }

    /// Inference: batch-norm uses running statistics. Thread-safe.
    Tensor<T> forward(const Tensor<T>& x) const;

    /// Output of the encoder half (inference mode).
    Tensor<T> encode(const Tensor<T>& x) const;

    /// Training-mode forward + reverse pass. Returns the MSE loss; grads is
    /// resized to match trainable(). Running statistics are updated only
    /// when update_running_stats is set.
    T loss_and_gradients(const Tensor<T>& x, Gradients<T>& grads, bool update_running_stats);

    /// Mutable views of every trainable array (weights, biases, BN scale/shift).
    std::vector<std::span<T>> trainable();
    std::vector<std::string> trainable_names() const;

    /// Every stored array (trainable and running statistics) in checkpoint order.
    std::vector<std::span<T>> all_arrays();
    std::vector<std::span<const T>> all_arrays() const;
    std::vector<std::string> array_names() const;
    std::vector<std::vector<int>> array_shapes() const;

    TrainMeta meta;

private:
    explicit BasicAutoencoder(const AutoencoderConfig& cfg);

    AutoencoderConfig config_;
    std::vector<ConvBlock<T>> blocks_;
};

using AutoencoderModel = BasicAutoencoder<float>;

/// Packs 3-channel images of identical size into a (3, N, H, W) tensor.
template <typename T = float>
Tensor<T> to_tensor(std::span<const RasterImage> images);

/// Image n of a 3-channel tensor, clamped into [0,1].
template <typename T>
RasterImage to_image(const Tensor<T>& t, int n);

/// Mean squared difference over all elements. Throws on shape mismatch.
template <typename T>
T mse_loss(const Tensor<T>& x, const Tensor<T>& x_hat);

/// One adaptive-moment step on a batch. Returns the loss before the step.
/// Throws Error(NonFiniteLoss) if the loss is not finite.
template <typename T>
T backward_and_step(BasicAutoencoder<T>& model, const Tensor<T>& batch, const TrainConfig& cfg,
                    AdamState<T>& state);

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Shuffled minibatch training over the given windows; deterministic for a
/// fixed TrainConfig::seed. Records per-epoch mean losses in meta.
AutoencoderModel train(AutoencoderModel model, std::span<const RasterImage> windows,
                       const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/**
 * Checkpoint layout (all integers little-endian):
 *
 *   "HPAE"                 4-byte magic
 *   u32 version            currently 1
 *   u32 n, n bytes         key=value lines: architecture, seed, epochs,
 *                          final_loss, epoch_losses, config_hash
 *   u64 seed
 *   u32 array count
 *   per array, in array_names() order:
 *     u32 name length, name bytes
 *     u32 rank, rank x u32 dims
 *     product(dims) x f32  raw IEEE-754 values
 *
 * Array order per block i: block<i>.weight, block<i>.bias (output block
 * only), block<i>.bn.gamma, .bn.beta, .bn.running_mean, .bn.running_var.
 */
void save_model(const AutoencoderModel& model, const std::filesystem::path& path);
AutoencoderModel load_model(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace hpylori
