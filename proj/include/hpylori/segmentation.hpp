#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpylori/imaging.hpp"

namespace hpylori {

struct Point {
    int x = 0;
    int y = 0;

    bool operator==(const Point&) const = default;
    auto operator<=>(const Point&) const = default;
};

/// One boolean per slide pixel, true = tissue.
class TissueMask {
public:
    TissueMask() = default;
    TissueMask(int width, int height, bool fill = false)
        : width_(width), height_(height),
          bits_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    bool inside(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }
    /// Out-of-range coordinates read as background.
    bool at(int x, int y) const noexcept { return inside(x, y) && bits_[offset(x, y)] != 0; }
    void set(int x, int y, bool v) { bits_[offset(x, y)] = v ? 1 : 0; }

    std::size_t count() const noexcept;
    bool any() const noexcept { return count() > 0; }

    /// Tissue pixel with at least one non-tissue 8-neighbor (outside counts as non-tissue).
    bool is_boundary(int x, int y) const noexcept;

    bool operator==(const TissueMask&) const = default;

private:
    std::size_t offset(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

struct BorderTrace {
    std::vector<Point> points;
    bool closed = true;
    std::size_t component_area = 0;
};

struct MaskConfig {
    int close_radius = 3;
    int min_component_px = 500;
    /// Lower bound on the Otsu threshold so a blank, faintly noisy slide
    /// is not split into two "classes".
    double saturation_floor = 0.1;
};

struct WindowSpec {
    std::string slide_id;
    std::string patient_id;
    Point center;
    int size = 224;
    int resized_to = 28;

    bool operator==(const WindowSpec&) const = default;
};

/// Otsu threshold over a 256-bin histogram of values in [0,1]. Returns the
/// lower edge of the first bin of the upper class, so `v >= t` selects it.
/// Returns -1 for a histogram with a single occupied bin.
double otsu_threshold(const std::vector<double>& values);

TissueMask detect_mask(const RasterImage& slide, const MaskConfig& cfg = {});

/// Binary closing with a disk of the given radius. Pixels outside the
/// image count as background for the dilation and as tissue for the
/// erosion, so closing never shrinks the mask.
TissueMask close_mask(const TissueMask& mask, int radius);

/// 8-connected components; drops those smaller than min_px.
TissueMask remove_small_components(const TissueMask& mask, int min_px);

/// Per-pixel component labels (0 = background, 1..n) with 8-connectivity.
std::vector<int> label_components(const TissueMask& mask, int* n_labels = nullptr);

/// One closed Moore-neighbor trace per 8-connected component, largest
/// component first.
std::vector<BorderTrace> trace_borders(const TissueMask& mask);

std::vector<WindowSpec> sample_training_windows(const RasterImage& slide,
                                                const std::vector<BorderTrace>& traces, int n,
                                                std::uint64_t seed, const std::string& slide_id = {},
                                                const std::string& patient_id = {},
                                                int size = 224, int resized_to = 28);

std::vector<WindowSpec> enumerate_inference_windows(const RasterImage& slide,
                                                    const std::vector<BorderTrace>& traces,
                                                    int stride = 112,
                                                    const std::string& slide_id = {},
                                                    const std::string& patient_id = {},
                                                    int size = 224, int resized_to = 28);

struct Rect {
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;

    bool contains(int x, int y) const noexcept {
        return x >= x0 && y >= y0 && x < x0 + width && y < y0 + height;
    }
};

/// Capture rectangle of a window after clamping it inside the slide.
Rect window_rect(const WindowSpec& spec, int slide_w, int slide_h);

RasterImage crop_window(const RasterImage& slide, const WindowSpec& spec);

}  // namespace hpylori
