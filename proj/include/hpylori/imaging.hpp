#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace hpylori {

struct Rgb {
    float r = 0.0f;
    float g = 0.0f;
    float b = 0.0f;

    bool operator==(const Rgb&) const = default;
};

/// Hue in degrees [0,360), saturation and value in [0,1].
/// Achromatic pixels carry hue 0.
struct HsvPixel {
    double hue = 0.0;
    double saturation = 0.0;
    double value = 0.0;
};

/// Red-like pixel filter. The hue window is read on the circle, so a
/// half-width of 20 accepts [340,360) and [0,20].
struct RedFilterConfig {
    double hue_half_width = 20.0;
    double min_saturation = 0.2;
    double min_value = 0.2;
};

/**
 * Row-major RGB raster with intensities normalized to [0,1].
 *
 * Used for whole slides, cropped windows and autoencoder reconstructions.
 * Pixel (x, y) occupies data()[3 * (y * width + x) + c].
 */
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, Rgb fill = {});

    /// Takes ownership of interleaved RGB data. Throws on a length mismatch
    /// or on intensities outside [0,1].
    static RasterImage from_data(int width, int height, std::vector<float> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return width_ == 0 || height_ == 0; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }

    Rgb at(int x, int y) const {
        const float* p = &data_[index(x, y)];
        return {p[0], p[1], p[2]};
    }

    /// Components are clamped into [0,1].
    void set(int x, int y, Rgb c);

    std::span<const float> data() const noexcept { return data_; }

    /// Copy of the rectangle [x0, x0+w) x [y0, y0+h); must lie inside the image.
    RasterImage crop(int x0, int y0, int w, int h) const;

    bool operator==(const RasterImage&) const = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                    static_cast<std::size_t>(x));
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

HsvPixel rgb_to_hsv(Rgb p);
Rgb hsv_to_rgb(const HsvPixel& p);

bool is_red_like(const HsvPixel& p, const RedFilterConfig& cfg = {});
inline bool is_red_like(Rgb p, const RedFilterConfig& cfg = {}) {
    return is_red_like(rgb_to_hsv(p), cfg);
}

std::size_t count_red(const RasterImage& img, const RedFilterConfig& cfg = {});

/// Area-averaging resample. Each output pixel is the overlap-weighted mean
/// of the source pixels it covers; for integral ratios this is an exact
/// box filter.
RasterImage resize(const RasterImage& img, int out_w, int out_h);

/// 8-bit RGB PNG. Grayscale, palette and alpha inputs are expanded to RGB;
/// 16-bit inputs are rejected.
RasterImage load_image(const std::filesystem::path& path);
void save_image(const RasterImage& img, const std::filesystem::path& path);

}  // namespace hpylori
