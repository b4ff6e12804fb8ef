#include "hpylori/autoencoder.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "hpylori/error.hpp"

namespace hpylori {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Unfolds a (C, N, H, H) tensor into (C*k*k) x (N*O*O) patch columns for a
// convolution with stride s and padding p producing O x O outputs.
template <typename T>
void im2col(const T* x, int channels, int batch, int in_size, int out_size, int k, int s, int p,
            T* col) {
    const std::size_t cols = static_cast<std::size_t>(batch) * out_size * out_size;
    for (int c = 0; c < channels; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* dst = col + static_cast<std::size_t>((c * k + ki) * k + kj) * cols;
                for (int n = 0; n < batch; ++n) {
                    const T* src = x + (static_cast<std::size_t>(c) * batch + n) * in_size * in_size;
                    for (int oy = 0; oy < out_size; ++oy) {
                        const int iy = oy * s - p + ki;
                        if (iy < 0 || iy >= in_size) {
                            std::fill(dst, dst + out_size, T(0));
                            dst += out_size;
                            continue;
                        }
                        const T* row = src + static_cast<std::size_t>(iy) * in_size;
                        for (int ox = 0; ox < out_size; ++ox) {
                            const int ix = ox * s - p + kj;
                            *dst++ = (ix >= 0 && ix < in_size) ? row[ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters patch columns back, accumulating into x,
// which must be zeroed by the caller.
template <typename T>
void col2im(const T* col, int channels, int batch, int in_size, int out_size, int k, int s, int p,
            T* x) {
    const std::size_t cols = static_cast<std::size_t>(batch) * out_size * out_size;
    for (int c = 0; c < channels; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* src = col + static_cast<std::size_t>((c * k + ki) * k + kj) * cols;
                for (int n = 0; n < batch; ++n) {
                    T* dst = x + (static_cast<std::size_t>(c) * batch + n) * in_size * in_size;
                    for (int oy = 0; oy < out_size; ++oy) {
                        const int iy = oy * s - p + ki;
                        if (iy < 0 || iy >= in_size) {
                            src += out_size;
                            continue;
                        }
                        T* row = dst + static_cast<std::size_t>(iy) * in_size;
                        for (int ox = 0; ox < out_size; ++ox) {
                            const int ix = ox * s - p + kj;
                            if (ix >= 0 && ix < in_size) row[ix] += *src;
                            ++src;
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
struct BlockCache {
    Tensor<T> input;
    std::vector<T> col;  // plain conv only
    std::vector<T> xhat;
    std::vector<T> inv_std;
    Tensor<T> pre_act;
    Tensor<T> output;
};

// Linear part of a block: conv or transposed conv plus optional bias.
template <typename T>
Tensor<T> linear_forward(const ConvBlock<T>& b, const Tensor<T>& x, std::vector<T>* col_out) {
    const int n = x.batch;
    const int k = b.kernel;
    Tensor<T> y(b.out_channels, n, b.out_size, b.out_size);
    if (!b.transposed) {
        std::vector<T> col(static_cast<std::size_t>(b.in_channels) * k * k * y.plane());
        im2col(x.data.data(), b.in_channels, n, b.in_size, b.out_size, k, b.stride, b.pad, col.data());
        ConstMatMap<T> w(b.weight.data(), b.out_channels, b.in_channels * k * k);
        ConstMatMap<T> c(col.data(), b.in_channels * k * k, static_cast<Eigen::Index>(y.plane()));
        MatMap<T> out(y.data.data(), b.out_channels, static_cast<Eigen::Index>(y.plane()));
        out.noalias() = w * c;
        if (col_out) *col_out = std::move(col);
    } else {
        std::vector<T> cols(static_cast<std::size_t>(b.out_channels) * k * k * x.plane());
        ConstMatMap<T> w(b.weight.data(), b.in_channels, b.out_channels * k * k);
        ConstMatMap<T> in(x.data.data(), b.in_channels, static_cast<Eigen::Index>(x.plane()));
        MatMap<T> c(cols.data(), b.out_channels * k * k, static_cast<Eigen::Index>(x.plane()));
        c.noalias() = w.transpose() * in;
        col2im(cols.data(), b.out_channels, n, b.out_size, b.in_size, k, b.stride, b.pad, y.data.data());
    }
    if (!b.bias.empty()) {
        const std::size_t plane = y.plane();
        for (int c = 0; c < b.out_channels; ++c) {
            T* row = y.data.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) row[i] += b.bias[c];
        }
    }
    return y;
}

template <typename T>
void activate(Activation act, T slope, std::vector<T>& v) {
    if (act == Activation::LeakyRelu) {
        for (T& e : v) e = e > T(0) ? e : slope * e;
    } else {
        for (T& e : v) e = T(1) / (T(1) + std::exp(-e));
    }
}

template <typename T>
Tensor<T> block_forward(const ConvBlock<T>& b, const Tensor<T>& x, bool training, T slope,
                        T momentum, T eps, BlockCache<T>* cache, ConvBlock<T>* running_stats) {
    Tensor<T> z = linear_forward(b, x, cache ? &cache->col : nullptr);
    const std::size_t plane = z.plane();
    if (b.batch_norm) {
        if (training) {
            if (cache) {
                cache->xhat.resize(z.data.size());
                cache->inv_std.resize(static_cast<std::size_t>(b.out_channels));
            }
            for (int c = 0; c < b.out_channels; ++c) {
                T* row = z.data.data() + c * plane;
                double mean = 0.0;
                for (std::size_t i = 0; i < plane; ++i) mean += row[i];
                mean /= static_cast<double>(plane);
                double var = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = row[i] - mean;
                    var += d * d;
                }
                var /= static_cast<double>(plane);
                const T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
                for (std::size_t i = 0; i < plane; ++i) {
                    const T xh = (row[i] - static_cast<T>(mean)) * inv_std;
                    if (cache) cache->xhat[c * plane + i] = xh;
                    row[i] = b.gamma[c] * xh + b.beta[c];
                }
                if (cache) cache->inv_std[c] = inv_std;
                if (running_stats) {
                    auto& mb = *running_stats;
                    const double unbiased = plane > 1 ? var * plane / (plane - 1.0) : var;
                    mb.running_mean[c] = static_cast<T>((1.0 - momentum) * mb.running_mean[c] + momentum * mean);
                    mb.running_var[c] = static_cast<T>((1.0 - momentum) * mb.running_var[c] + momentum * unbiased);
                }
            }
        } else {
            for (int c = 0; c < b.out_channels; ++c) {
                T* row = z.data.data() + c * plane;
                const T scale = b.gamma[c] / std::sqrt(b.running_var[c] + eps);
                const T shift = b.beta[c] - b.running_mean[c] * scale;
                for (std::size_t i = 0; i < plane; ++i) row[i] = row[i] * scale + shift;
            }
        }
    }
    if (cache) {
        cache->input = x;
        cache->pre_act = z;
    }
    activate(b.activation, slope, z.data);
    if (cache) cache->output = z;
    return z;
}

// Reverse pass of one block. Fills the block's slice of grads (weight,
// [bias], [gamma, beta]) and returns dL/dx unless need_input_grad is false.
template <typename T>
Tensor<T> block_backward(const ConvBlock<T>& b, const BlockCache<T>& cache, Tensor<T> dy, T slope,
                         std::vector<T>* g_weight, std::vector<T>* g_bias, std::vector<T>* g_gamma,
                         std::vector<T>* g_beta, bool need_input_grad) {
    const std::size_t plane = dy.plane();
    const int k = b.kernel;

    if (b.activation == Activation::LeakyRelu) {
        for (std::size_t i = 0; i < dy.data.size(); ++i) {
            if (!(cache.pre_act.data[i] > T(0))) dy.data[i] *= slope;
        }
    } else {
        for (std::size_t i = 0; i < dy.data.size(); ++i) {
            const T s = cache.output.data[i];
            dy.data[i] *= s * (T(1) - s);
        }
    }

    if (b.batch_norm) {
        g_gamma->assign(static_cast<std::size_t>(b.out_channels), T(0));
        g_beta->assign(static_cast<std::size_t>(b.out_channels), T(0));
        const double m = static_cast<double>(plane);
        for (int c = 0; c < b.out_channels; ++c) {
            T* row = dy.data.data() + c * plane;
            const T* xh = cache.xhat.data() + c * plane;
            double sum_dy = 0.0;
            double sum_dy_xh = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += row[i];
                sum_dy_xh += static_cast<double>(row[i]) * xh[i];
            }
            (*g_gamma)[c] = static_cast<T>(sum_dy_xh);
            (*g_beta)[c] = static_cast<T>(sum_dy);
            const double gamma = b.gamma[c];
            const double inv_std = cache.inv_std[c];
            const double s1 = gamma * sum_dy;
            const double s2 = gamma * sum_dy_xh;
            for (std::size_t i = 0; i < plane; ++i) {
                const double dxhat = gamma * row[i];
                row[i] = static_cast<T>(inv_std / m * (m * dxhat - s1 - xh[i] * s2));
            }
        }
    }

    if (!b.bias.empty()) {
        g_bias->assign(static_cast<std::size_t>(b.out_channels), T(0));
        for (int c = 0; c < b.out_channels; ++c) {
            const T* row = dy.data.data() + c * plane;
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += row[i];
            (*g_bias)[c] = static_cast<T>(s);
        }
    }

    const Tensor<T>& x = cache.input;
    g_weight->assign(b.weight.size(), T(0));
    Tensor<T> dx;
    if (!b.transposed) {
        const int rows = b.in_channels * k * k;
        ConstMatMap<T> dz(dy.data.data(), b.out_channels, static_cast<Eigen::Index>(plane));
        ConstMatMap<T> col(cache.col.data(), rows, static_cast<Eigen::Index>(plane));
        MatMap<T> gw(g_weight->data(), b.out_channels, rows);
        gw.noalias() = dz * col.transpose();
        if (need_input_grad) {
            ConstMatMap<T> w(b.weight.data(), b.out_channels, rows);
            std::vector<T> dcol(static_cast<std::size_t>(rows) * plane);
            MatMap<T> dc(dcol.data(), rows, static_cast<Eigen::Index>(plane));
            dc.noalias() = w.transpose() * dz;
            dx = Tensor<T>(b.in_channels, x.batch, b.in_size, b.in_size);
            col2im(dcol.data(), b.in_channels, x.batch, b.in_size, b.out_size, k, b.stride, b.pad,
                   dx.data.data());
        }
    } else {
        const int rows = b.out_channels * k * k;
        const std::size_t in_plane = x.plane();
        std::vector<T> dcols(static_cast<std::size_t>(rows) * in_plane);
        im2col(dy.data.data(), b.out_channels, x.batch, b.out_size, b.in_size, k, b.stride, b.pad,
               dcols.data());
        ConstMatMap<T> dc(dcols.data(), rows, static_cast<Eigen::Index>(in_plane));
        ConstMatMap<T> in(x.data.data(), b.in_channels, static_cast<Eigen::Index>(in_plane));
        MatMap<T> gw(g_weight->data(), b.in_channels, rows);
        gw.noalias() = in * dc.transpose();
        if (need_input_grad) {
            ConstMatMap<T> w(b.weight.data(), b.in_channels, rows);
            dx = Tensor<T>(b.in_channels, x.batch, b.in_size, b.in_size);
            MatMap<T> d(dx.data.data(), b.in_channels, static_cast<Eigen::Index>(in_plane));
            d.noalias() = w * dc;
        }
    }
    return dx;
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::vector<int> AutoencoderConfig::encoder_sizes() const {
    std::vector<int> sizes{input_size};
    const int pad = kernel / 2;
    for (int s : enc_strides) {
        const int in = sizes.back();
        sizes.push_back((in + 2 * pad - kernel) / s + 1);
    }
    return sizes;
}

std::vector<int> AutoencoderConfig::decoder_sizes() const {
    auto enc = encoder_sizes();
    return {enc.rbegin(), enc.rend()};
}

AutoencoderConfig::Shape AutoencoderConfig::latent_shape() const {
    const int size = encoder_sizes().back();
    return {enc_channels.empty() ? input_channels : enc_channels.back(), size, size};
}

void AutoencoderConfig::validate() const {
    auto bad = [](const std::string& m) { fail(ErrorKind::Config, "autoencoder config: " + m); };
    if (input_size < 1 || input_channels < 1) bad("input size and channels must be positive");
    if (kernel < 1 || kernel % 2 == 0) bad("kernel must be a positive odd number");
    if (enc_channels.empty() || enc_channels.size() != enc_strides.size()) {
        bad("enc_channels and enc_strides must be non-empty and of equal length");
    }
    if (dec_channels.size() != dec_strides.size() || dec_channels.size() != enc_channels.size()) {
        bad("decoder must have as many blocks as the encoder");
    }
    if (dec_channels.back() != input_channels) bad("last decoder block must output input_channels");
    for (int c : enc_channels) if (c < 1) bad("channel counts must be positive");
    for (int c : dec_channels) if (c < 1) bad("channel counts must be positive");
    for (int s : enc_strides) if (s < 1) bad("strides must be positive");
    for (int s : dec_strides) if (s < 1) bad("strides must be positive");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) bad("leaky_slope must lie in [0,1)");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) bad("bn_momentum must lie in (0,1]");
    if (!(bn_eps > 0.0)) bad("bn_eps must be positive");

    const auto enc = encoder_sizes();
    for (int s : enc) if (s < 1) bad("encoder collapses the spatial size below 1");
    const auto dec = decoder_sizes();
    const int pad = kernel / 2;
    for (std::size_t i = 0; i < dec_strides.size(); ++i) {
        const int s = dec_strides[i];
        const int base = (dec[i] - 1) * s - 2 * pad + kernel;
        const int out_pad = dec[i + 1] - base;
        if (out_pad < 0 || (s > 1 ? out_pad >= s : out_pad != 0)) {
            bad("decoder block " + std::to_string(i) + " cannot map " + std::to_string(dec[i]) +
                " to " + std::to_string(dec[i + 1]) + " with stride " + std::to_string(s));
        }
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) fail(ErrorKind::Config, "train config: epochs must be >= 1");
    if (batch_size < 1) fail(ErrorKind::Config, "train config: batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        fail(ErrorKind::Config, "train config: learning_rate must be finite and non-negative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
        fail(ErrorKind::Config, "train config: invalid adaptive-moment parameters");
    }
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
BasicAutoencoder<T>::BasicAutoencoder(const AutoencoderConfig& cfg) : config_(cfg) {
    cfg.validate();
    const auto enc = cfg.encoder_sizes();
    const auto dec = cfg.decoder_sizes();
    const int pad = cfg.kernel / 2;
    const int k2 = cfg.kernel * cfg.kernel;

    auto add_block = [&](int in_c, int out_c, int stride, int in_size, int out_size, bool transposed,
                         bool last) {
        ConvBlock<T> b;
        b.in_channels = in_c;
        b.out_channels = out_c;
        b.kernel = cfg.kernel;
        b.stride = stride;
        b.pad = pad;
        b.in_size = in_size;
        b.out_size = out_size;
        b.transposed = transposed;
        b.out_pad = transposed ? out_size - ((in_size - 1) * stride - 2 * pad + cfg.kernel) : 0;
        b.batch_norm = !last;
        b.activation = last ? Activation::Sigmoid : Activation::LeakyRelu;
        b.weight.assign(static_cast<std::size_t>(in_c) * out_c * k2, T(0));
        if (last) {
            b.bias.assign(static_cast<std::size_t>(out_c), T(0));
        } else {
            b.gamma.assign(static_cast<std::size_t>(out_c), T(1));
            b.beta.assign(static_cast<std::size_t>(out_c), T(0));
            b.running_mean.assign(static_cast<std::size_t>(out_c), T(0));
            b.running_var.assign(static_cast<std::size_t>(out_c), T(1));
        }
        blocks_.push_back(std::move(b));
    };

    int in_c = cfg.input_channels;
    for (std::size_t i = 0; i < cfg.enc_channels.size(); ++i) {
        add_block(in_c, cfg.enc_channels[i], cfg.enc_strides[i], enc[i], enc[i + 1], false, false);
        in_c = cfg.enc_channels[i];
    }
    for (std::size_t i = 0; i < cfg.dec_channels.size(); ++i) {
        const bool last = i + 1 == cfg.dec_channels.size();
        add_block(in_c, cfg.dec_channels[i], cfg.dec_strides[i], dec[i], dec[i + 1], true, last);
        in_c = cfg.dec_channels[i];
    }
}

template <typename T>
BasicAutoencoder<T> BasicAutoencoder<T>::init(const AutoencoderConfig& cfg, std::uint64_t seed) {
    BasicAutoencoder model(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& b : model.blocks_) {
        const double fan_in = static_cast<double>(b.in_channels) * b.kernel * b.kernel;
        const double std_dev = std::sqrt(2.0 / fan_in);
        for (T& w : b.weight) {
            double z;
            do {
                z = normal(rng);
            } while (std::fabs(z) > 2.0);
            w = static_cast<T>(z * std_dev);
        }
    }
    model.meta.seed = seed;
    return model;
}

template <typename T>
Tensor<T> BasicAutoencoder<T>::forward(const Tensor<T>& x) const {
    if (x.channels != config_.input_channels || x.height != config_.input_size ||
        x.width != config_.input_size || x.batch < 1) {
        fail(ErrorKind::ShapeMismatch, "autoencoder expects batches of " +
                                           std::to_string(config_.input_channels) + "x" +
                                           std::to_string(config_.input_size) + "x" +
                                           std::to_string(config_.input_size));
    }
    const T slope = static_cast<T>(config_.leaky_slope);
    const T eps = static_cast<T>(config_.bn_eps);
    Tensor<T> h = x;
    for (const auto& b : blocks_) {
        h = block_forward<T>(b, h, false, slope, T(0), eps, nullptr, nullptr);
    }
    return h;
}

template <typename T>
Tensor<T> BasicAutoencoder<T>::encode(const Tensor<T>& x) const {
    const T slope = static_cast<T>(config_.leaky_slope);
    const T eps = static_cast<T>(config_.bn_eps);
    Tensor<T> h = x;
    for (std::size_t i = 0; i < config_.enc_channels.size(); ++i) {
        h = block_forward<T>(blocks_[i], h, false, slope, T(0), eps, nullptr, nullptr);
    }
    return h;
}

template <typename T>
T BasicAutoencoder<T>::loss_and_gradients(const Tensor<T>& x, Gradients<T>& grads,
                                          bool update_running_stats) {
    if (x.channels != config_.input_channels || x.height != config_.input_size ||
        x.width != config_.input_size || x.batch < 1) {
        fail(ErrorKind::ShapeMismatch, "training batch does not match the autoencoder input shape");
    }
    const T slope = static_cast<T>(config_.leaky_slope);
    const T eps = static_cast<T>(config_.bn_eps);
    const T momentum = static_cast<T>(config_.bn_momentum);

    std::vector<BlockCache<T>> caches(blocks_.size());
    Tensor<T> h = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        h = block_forward<T>(blocks_[i], h, true, slope, momentum, eps, &caches[i],
                              update_running_stats ? &blocks_[i] : nullptr);
    }
    const T loss = mse_loss(x, h);

    Tensor<T> dy(h.channels, h.batch, h.height, h.width);
    const T scale = T(2) / static_cast<T>(h.data.size());
    for (std::size_t i = 0; i < h.data.size(); ++i) dy.data[i] = scale * (h.data[i] - x.data[i]);

    // Gradient slots per block, in trainable() order.
    grads.clear();
    std::vector<std::size_t> slot(blocks_.size());
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        slot[i] = grads.size();
        grads.emplace_back();
        if (!blocks_[i].bias.empty()) grads.emplace_back();
        if (blocks_[i].batch_norm) {
            grads.emplace_back();
            grads.emplace_back();
        }
    }
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        const auto& b = blocks_[i];
        std::size_t s = slot[i];
        std::vector<T>* gw = &grads[s++];
        std::vector<T>* gb = b.bias.empty() ? nullptr : &grads[s++];
        std::vector<T>* gg = b.batch_norm ? &grads[s++] : nullptr;
        std::vector<T>* gbe = b.batch_norm ? &grads[s++] : nullptr;
        dy = block_backward(b, caches[i], std::move(dy), slope, gw, gb, gg, gbe, i > 0);
    }
    return loss;
}

template <typename T>
std::vector<std::span<T>> BasicAutoencoder<T>::trainable() {
    std::vector<std::span<T>> out;
    for (auto& b : blocks_) {
        out.emplace_back(b.weight);
        if (!b.bias.empty()) out.emplace_back(b.bias);
        if (b.batch_norm) {
            out.emplace_back(b.gamma);
            out.emplace_back(b.beta);
        }
    }
    return out;
}

template <typename T>
std::vector<std::string> BasicAutoencoder<T>::trainable_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = "block" + std::to_string(i);
        out.push_back(p + ".weight");
        if (!blocks_[i].bias.empty()) out.push_back(p + ".bias");
        if (blocks_[i].batch_norm) {
            out.push_back(p + ".bn.gamma");
            out.push_back(p + ".bn.beta");
        }
    }
    return out;
}

template <typename T>
std::vector<std::span<T>> BasicAutoencoder<T>::all_arrays() {
    std::vector<std::span<T>> out;
    for (auto& b : blocks_) {
        out.emplace_back(b.weight);
        if (!b.bias.empty()) out.emplace_back(b.bias);
        if (b.batch_norm) {
            out.emplace_back(b.gamma);
            out.emplace_back(b.beta);
            out.emplace_back(b.running_mean);
            out.emplace_back(b.running_var);
        }
    }
    return out;
}

template <typename T>
std::vector<std::span<const T>> BasicAutoencoder<T>::all_arrays() const {
    std::vector<std::span<const T>> out;
    for (const auto& b : blocks_) {
        out.emplace_back(b.weight);
        if (!b.bias.empty()) out.emplace_back(b.bias);
        if (b.batch_norm) {
            out.emplace_back(b.gamma);
            out.emplace_back(b.beta);
            out.emplace_back(b.running_mean);
            out.emplace_back(b.running_var);
        }
    }
    return out;
}

template <typename T>
std::vector<std::string> BasicAutoencoder<T>::array_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = "block" + std::to_string(i);
        out.push_back(p + ".weight");
        if (!blocks_[i].bias.empty()) out.push_back(p + ".bias");
        if (blocks_[i].batch_norm) {
            for (const char* s : {".bn.gamma", ".bn.beta", ".bn.running_mean", ".bn.running_var"}) {
                out.push_back(p + s);
            }
        }
    }
    return out;
}

template <typename T>
std::vector<std::vector<int>> BasicAutoencoder<T>::array_shapes() const {
    std::vector<std::vector<int>> out;
    for (const auto& b : blocks_) {
        if (b.transposed) {
            out.push_back({b.in_channels, b.out_channels, b.kernel, b.kernel});
        } else {
            out.push_back({b.out_channels, b.in_channels, b.kernel, b.kernel});
        }
        if (!b.bias.empty()) out.push_back({b.out_channels});
        if (b.batch_norm) {
            for (int i = 0; i < 4; ++i) out.push_back({b.out_channels});
        }
    }
    return out;
}

template class BasicAutoencoder<float>;
template class BasicAutoencoder<double>;

// ---------------------------------------------------------------------------
// Tensors and loss

template <typename T>
Tensor<T> to_tensor(std::span<const RasterImage> images) {
    if (images.empty()) fail(ErrorKind::EmptyInput, "cannot build a tensor from zero images");
    const int h = images.front().height();
    const int w = images.front().width();
    const int n = static_cast<int>(images.size());
    Tensor<T> t(3, n, h, w);
    for (int i = 0; i < n; ++i) {
        const auto& img = images[static_cast<std::size_t>(i)];
        if (img.width() != w || img.height() != h) {
            fail(ErrorKind::ShapeMismatch, "images in a batch must share dimensions");
        }
        const auto d = img.data();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const float* p = &d[3 * (static_cast<std::size_t>(y) * w + x)];
                for (int c = 0; c < 3; ++c) t.at(c, i, y, x) = static_cast<T>(p[c]);
            }
        }
    }
    return t;
}

template <typename T>
RasterImage to_image(const Tensor<T>& t, int n) {
    if (t.channels != 3 || n < 0 || n >= t.batch) {
        fail(ErrorKind::ShapeMismatch, "tensor does not hold a 3-channel image at that index");
    }
    std::vector<float> data(3 * static_cast<std::size_t>(t.height) * t.width);
    for (int y = 0; y < t.height; ++y) {
        for (int x = 0; x < t.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                data[3 * (static_cast<std::size_t>(y) * t.width + x) + c] =
                    std::clamp(static_cast<float>(t.at(c, n, y, x)), 0.0f, 1.0f);
            }
        }
    }
    return RasterImage::from_data(t.width, t.height, std::move(data));
}

template <typename T>
T mse_loss(const Tensor<T>& x, const Tensor<T>& x_hat) {
    if (!x.same_shape(x_hat) || x.data.size() != x_hat.data.size()) {
        fail(ErrorKind::ShapeMismatch, "mse_loss: tensors differ in shape");
    }
    if (x.data.empty()) return T(0);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double d = static_cast<double>(x_hat.data[i]) - static_cast<double>(x.data[i]);
        acc += d * d;
    }
    return static_cast<T>(acc / static_cast<double>(x.data.size()));
}

template Tensor<float> to_tensor<float>(std::span<const RasterImage>);
template Tensor<double> to_tensor<double>(std::span<const RasterImage>);
template RasterImage to_image<float>(const Tensor<float>&, int);
template RasterImage to_image<double>(const Tensor<double>&, int);
template float mse_loss<float>(const Tensor<float>&, const Tensor<float>&);
template double mse_loss<double>(const Tensor<double>&, const Tensor<double>&);

// ---------------------------------------------------------------------------
// Optimization

template <typename T>
T backward_and_step(BasicAutoencoder<T>& model, const Tensor<T>& batch, const TrainConfig& cfg,
                    AdamState<T>& state) {
    Gradients<T> grads;
    const T loss = model.loss_and_gradients(batch, grads, true);
    if (!std::isfinite(static_cast<double>(loss))) {
        fail(ErrorKind::NonFiniteLoss, "training loss became non-finite at step " +
                                           std::to_string(state.step + 1));
    }
    auto params = model.trainable();
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), {});
        state.v.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].size(), T(0));
            state.v[i].assign(params[i].size(), T(0));
        }
    }
    ++state.step;
    const double b1 = cfg.beta1;
    const double b2 = cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = cfg.learning_rate;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto& g = grads[i];
        auto p = params[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * g[j]);
            v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * static_cast<double>(g[j]) * g[j]);
            const double mh = m[j] / c1;
            const double vh = v[j] / c2;
            p[j] = static_cast<T>(p[j] - lr * mh / (std::sqrt(vh) + cfg.adam_eps));
        }
    }
    return loss;
}

template float backward_and_step<float>(BasicAutoencoder<float>&, const Tensor<float>&,
                                        const TrainConfig&, AdamState<float>&);
template double backward_and_step<double>(BasicAutoencoder<double>&, const Tensor<double>&,
                                          const TrainConfig&, AdamState<double>&);

AutoencoderModel train(AutoencoderModel model, std::span<const RasterImage> windows,
                       const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (windows.empty()) fail(ErrorKind::EmptyInput, "training set is empty");
    const auto& mc = model.config();
    for (const auto& w : windows) {
        if (w.width() != mc.input_size || w.height() != mc.input_size) {
            fail(ErrorKind::ShapeMismatch, "training window is " + std::to_string(w.width()) + "x" +
                                               std::to_string(w.height()) + ", model expects " +
                                               std::to_string(mc.input_size));
        }
    }

    const Tensor<float> all = to_tensor<float>(windows);
    const int n = all.batch;
    const std::size_t per_sample = static_cast<std::size_t>(all.height) * all.width;

    std::mt19937_64 rng(cfg.seed);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    AdamState<float> state;
    model.meta.epoch_losses.clear();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n - start);
            Tensor<float> batch(all.channels, bs, all.height, all.width);
            for (int c = 0; c < all.channels; ++c) {
                for (int i = 0; i < bs; ++i) {
                    const float* src = all.data.data() +
                                       (static_cast<std::size_t>(c) * n + order[start + i]) * per_sample;
                    std::copy(src, src + per_sample,
                              batch.data.data() + (static_cast<std::size_t>(c) * bs + i) * per_sample);
                }
            }
            loss_sum += static_cast<double>(backward_and_step(model, batch, cfg, state)) * bs;
        }
        const double mean = loss_sum / n;
        model.meta.epoch_losses.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    model.meta.epochs = cfg.epochs;
    model.meta.final_loss = model.meta.epoch_losses.back();
    model.meta.seed = cfg.seed;
    return model;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    const std::string& str() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) fail(ErrorKind::CorruptFile, "checkpoint is truncated");
    }
    std::string data_;
    std::size_t pos_ = 0;
};

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        int v = 0;
        auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc{} || p != item.data() + item.size()) {
            fail(ErrorKind::CorruptFile, "checkpoint: bad integer list '" + s + "'");
        }
        out.push_back(v);
    }
    return out;
}

template <typename V>
V parse_number(const std::string& s) {
    V v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        fail(ErrorKind::CorruptFile, "checkpoint: bad number '" + s + "'");
    }
    return v;
}

constexpr char kMagic[4] = {'H', 'P', 'A', 'E'};

}  // namespace

void save_model(const AutoencoderModel& model, const std::filesystem::path& path) {
    const auto& c = model.config();
    std::ostringstream kv;
    kv << "input_size=" << c.input_size << '\n'
       << "input_channels=" << c.input_channels << '\n'
       << "enc_channels=" << join_ints(c.enc_channels) << '\n'
       << "enc_strides=" << join_ints(c.enc_strides) << '\n'
       << "dec_channels=" << join_ints(c.dec_channels) << '\n'
       << "dec_strides=" << join_ints(c.dec_strides) << '\n'
       << "kernel=" << c.kernel << '\n'
       << "leaky_slope=" << format_double(c.leaky_slope) << '\n'
       << "bn_momentum=" << format_double(c.bn_momentum) << '\n'
       << "bn_eps=" << format_double(c.bn_eps) << '\n'
       << "seed=" << model.meta.seed << '\n'
       << "epochs=" << model.meta.epochs << '\n'
       << "final_loss=" << format_double(model.meta.final_loss) << '\n';
    kv << "epoch_losses=";
    for (std::size_t i = 0; i < model.meta.epoch_losses.size(); ++i) {
        if (i) kv << ',';
        kv << format_double(model.meta.epoch_losses[i]);
    }
    kv << '\n' << "config_hash=" << model.meta.config_hash << '\n';

    Writer w;
    w.bytes(std::string(kMagic, 4));
    w.u32(kCheckpointVersion);
    const std::string block = kv.str();
    w.u32(static_cast<std::uint32_t>(block.size()));
    w.bytes(block);
    w.u64(model.meta.seed);

    const auto names = model.array_names();
    const auto shapes = model.array_shapes();
    const auto arrays = model.all_arrays();
    w.u32(static_cast<std::uint32_t>(arrays.size()));
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        w.u32(static_cast<std::uint32_t>(names[i].size()));
        w.bytes(names[i]);
        w.u32(static_cast<std::uint32_t>(shapes[i].size()));
        for (int d : shapes[i]) w.u32(static_cast<std::uint32_t>(d));
        for (float v : arrays[i]) w.f32(v);
    }

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
    out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
    if (!out) fail(ErrorKind::Io, "failed writing checkpoint " + path.string());
}

AutoencoderModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingFile, "checkpoint not found: " + path.string());
    Reader r{std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>())};

    if (r.bytes(4) != std::string(kMagic, 4)) {
        fail(ErrorKind::CorruptFile, "not an autoencoder checkpoint: " + path.string());
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        fail(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                             ", expected " + std::to_string(kCheckpointVersion));
    }
    const std::string block = r.bytes(r.u32());
    std::map<std::string, std::string> kv;
    {
        std::istringstream ss(block);
        std::string line;
        while (std::getline(ss, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) fail(ErrorKind::CorruptFile, "checkpoint: malformed header line");
            kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) fail(ErrorKind::CorruptFile, "checkpoint: missing header key " + key);
        return it->second;
    };

    AutoencoderConfig cfg;
    cfg.input_size = parse_number<int>(get("input_size"));
    cfg.input_channels = parse_number<int>(get("input_channels"));
    cfg.enc_channels = parse_ints(get("enc_channels"));
    cfg.enc_strides = parse_ints(get("enc_strides"));
    cfg.dec_channels = parse_ints(get("dec_channels"));
    cfg.dec_strides = parse_ints(get("dec_strides"));
    cfg.kernel = parse_number<int>(get("kernel"));
    cfg.leaky_slope = parse_number<double>(get("leaky_slope"));
    cfg.bn_momentum = parse_number<double>(get("bn_momentum"));
    cfg.bn_eps = parse_number<double>(get("bn_eps"));
    try {
        cfg.validate();
    } catch (const Error& e) {
        fail(ErrorKind::ShapeMismatch, std::string("checkpoint architecture is invalid: ") + e.what());
    }

    AutoencoderModel model = AutoencoderModel::init(cfg, 0);
    model.meta.seed = r.u64();
    model.meta.epochs = parse_number<int>(get("epochs"));
    model.meta.final_loss = parse_number<double>(get("final_loss"));
    model.meta.config_hash = get("config_hash");
    if (!get("epoch_losses").empty()) {
        std::stringstream ss(get("epoch_losses"));
        std::string item;
        while (std::getline(ss, item, ',')) model.meta.epoch_losses.push_back(parse_number<double>(item));
    }

    const auto names = model.array_names();
    const auto shapes = model.array_shapes();
    auto arrays = model.all_arrays();
    const std::uint32_t count = r.u32();
    if (count != arrays.size()) {
        fail(ErrorKind::ShapeMismatch, "checkpoint holds " + std::to_string(count) +
                                           " arrays, architecture needs " + std::to_string(arrays.size()));
    }
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        const std::string name = r.bytes(r.u32());
        if (name != names[i]) {
            fail(ErrorKind::ShapeMismatch, "checkpoint array " + std::to_string(i) + " is '" + name +
                                               "', expected '" + names[i] + "'");
        }
        const std::uint32_t rank = r.u32();
        std::vector<int> dims;
        for (std::uint32_t d = 0; d < rank; ++d) dims.push_back(static_cast<int>(r.u32()));
        if (dims != shapes[i]) {
            fail(ErrorKind::ShapeMismatch, "checkpoint array '" + name + "' has the wrong shape");
        }
        for (float& v : arrays[i]) {
            v = r.f32();
            if (!std::isfinite(v)) fail(ErrorKind::CorruptFile, "checkpoint array '" + name + "' is not finite");
        }
    }
    if (!r.done()) fail(ErrorKind::CorruptFile, "checkpoint has trailing bytes");
    return model;
}

}  // namespace hpylori
