#include "hpylori/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hpylori/error.hpp"

namespace hpylori {

RasterImage::RasterImage(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
        fail(ErrorKind::InvalidArgument, "negative image dimensions");
    }
    fill.r = std::clamp(fill.r, 0.0f, 1.0f);
    fill.g = std::clamp(fill.g, 0.0f, 1.0f);
    fill.b = std::clamp(fill.b, 0.0f, 1.0f);
    data_.resize(3 * pixel_count());
    for (std::size_t i = 0; i < data_.size(); i += 3) {
        data_[i] = fill.r;
        data_[i + 1] = fill.g;
        data_[i + 2] = fill.b;
    }
}

RasterImage RasterImage::from_data(int width, int height, std::vector<float> data) {
    if (width < 0 || height < 0) {
        fail(ErrorKind::InvalidArgument, "negative image dimensions");
    }
    const std::size_t expected = 3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (data.size() != expected) {
        fail(ErrorKind::ShapeMismatch, "raster data length " + std::to_string(data.size()) +
                                           " does not match " + std::to_string(width) + "x" +
                                           std::to_string(height) + "x3");
    }
    for (float v : data) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            fail(ErrorKind::InvalidArgument, "raster intensity outside [0,1]");
        }
    }
    RasterImage img;
    img.width_ = width;
    img.height_ = height;
    img.data_ = std::move(data);
    return img;
}

void RasterImage::set(int x, int y, Rgb c) {
    float* p = &data_[index(x, y)];
    p[0] = std::clamp(c.r, 0.0f, 1.0f);
    p[1] = std::clamp(c.g, 0.0f, 1.0f);
    p[2] = std::clamp(c.b, 0.0f, 1.0f);
}

RasterImage RasterImage::crop(int x0, int y0, int w, int h) const {
    if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > width_ || y0 + h > height_) {
        fail(ErrorKind::InvalidArgument, "crop rectangle outside image");
    }
    RasterImage out(w, h);
    for (int y = 0; y < h; ++y) {
        const float* src = &data_[index(x0, y0 + y)];
        std::copy(src, src + 3 * static_cast<std::size_t>(w), &out.data_[out.index(0, y)]);
    }
    return out;
}

HsvPixel rgb_to_hsv(Rgb p) {
    const double r = p.r;
    const double g = p.g;
    const double b = p.b;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;

    HsvPixel out;
    out.value = mx;
    out.saturation = mx > 0.0 ? delta / mx : 0.0;
    if (delta <= 0.0) {
        return out;
    }
    double hue;
    if (mx == r) {
        hue = 60.0 * ((g - b) / delta);
    } else if (mx == g) {
        hue = 60.0 * ((b - r) / delta + 2.0);
    } else {
        hue = 60.0 * ((r - g) / delta + 4.0);
    }
    if (hue < 0.0) hue += 360.0;
    if (hue >= 360.0) hue -= 360.0;
    out.hue = hue;
    return out;
}

Rgb hsv_to_rgb(const HsvPixel& p) {
    const double c = p.value * p.saturation;
    double h = std::fmod(p.hue, 360.0);
    if (h < 0.0) h += 360.0;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = p.value - c;
    return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

bool is_red_like(const HsvPixel& p, const RedFilterConfig& cfg) {
    const bool hue_ok = p.hue <= cfg.hue_half_width || p.hue >= 360.0 - cfg.hue_half_width;
    return hue_ok && p.saturation >= cfg.min_saturation && p.value >= cfg.min_value;
}

std::size_t count_red(const RasterImage& img, const RedFilterConfig& cfg) {
    std::size_t n = 0;
    const auto d = img.data();
    for (std::size_t i = 0; i < d.size(); i += 3) {
        if (is_red_like(Rgb{d[i], d[i + 1], d[i + 2]}, cfg)) ++n;
    }
    return n;
}

namespace {

struct Tap {
    int src;
    double weight;
};

// Source taps for every output index along one axis. Output cell i covers
// [i*scale, (i+1)*scale) in source coordinates; weights are overlap lengths
// normalized to sum to one.
std::vector<std::vector<Tap>> area_taps(int in, int out) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        const double lo = i * scale;
        const double hi = (i + 1) * scale;
        const int first = static_cast<int>(std::floor(lo));
        const int last = std::min(in - 1, static_cast<int>(std::ceil(hi)) - 1);
        double total = 0.0;
        for (int s = first; s <= last; ++s) {
            const double w = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
            if (w > 0.0) {
                taps[i].push_back({s, w});
                total += w;
            }
        }
        for (auto& t : taps[i]) t.weight /= total;
    }
    return taps;
}

}  // namespace

RasterImage resize(const RasterImage& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) {
        fail(ErrorKind::InvalidArgument, "resize target must be at least 1x1");
    }
    if (img.empty()) {
        fail(ErrorKind::InvalidArgument, "cannot resize an empty image");
    }
    const auto xs = area_taps(img.width(), out_w);
    const auto ys = area_taps(img.height(), out_h);
    const auto src = img.data();
    const std::size_t in_w = static_cast<std::size_t>(img.width());

    std::vector<float> out(3 * static_cast<std::size_t>(out_w) * static_cast<std::size_t>(out_h));
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (const Tap& ty : ys[oy]) {
                for (const Tap& tx : xs[ox]) {
                    const double w = ty.weight * tx.weight;
                    const float* p = &src[3 * (static_cast<std::size_t>(ty.src) * in_w +
                                               static_cast<std::size_t>(tx.src))];
                    acc[0] += w * p[0];
                    acc[1] += w * p[1];
                    acc[2] += w * p[2];
                }
            }
            float* q = &out[3 * (static_cast<std::size_t>(oy) * out_w + ox)];
            for (int c = 0; c < 3; ++c) {
                q[c] = static_cast<float>(std::clamp(acc[c], 0.0, 1.0));
            }
        }
    }
    return RasterImage::from_data(out_w, out_h, std::move(out));
}

}  // namespace hpylori
