#include "hpylori/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>

#include "hpylori/error.hpp"

namespace hpylori {

namespace {

// Clockwise in image coordinates (y grows downwards), starting west.
constexpr std::array<Point, 8> kRing = {{
    {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1},
}};

int ring_index(Point d) {
    for (int i = 0; i < 8; ++i) {
        if (kRing[i] == d) return i;
    }
    return -1;
}

std::vector<Point> disk_offsets(int radius) {
    std::vector<Point> out;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy <= radius * radius) out.push_back({dx, dy});
        }
    }
    return out;
}

// Moore-neighbor tracing of the component containing `start`, which must be
// its first pixel in raster order (so its west neighbor is background).
// Stops when the first move, start -> second point, is about to repeat;
// unlike re-entering the start pixel from the initial backtrack direction,
// this also terminates on one-pixel-wide lines.
std::vector<Point> moore_trace(const std::vector<int>& labels, int width, int height, int label,
                               Point start) {
    auto is_fg = [&](Point p) {
        return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height &&
               labels[static_cast<std::size_t>(p.y) * width + p.x] == label;
    };

    std::vector<Point> trace{start};
    Point current = start;
    Point back{start.x - 1, start.y};
    const std::size_t limit = 4 * static_cast<std::size_t>(width) * height + 8;

    while (trace.size() < limit) {
        const int first = ring_index({back.x - current.x, back.y - current.y});
        Point next{};
        Point next_back{};
        bool found = false;
        Point prev = back;
        for (int k = 1; k <= 8; ++k) {
            const Point d = kRing[(first + k) % 8];
            const Point cand{current.x + d.x, current.y + d.y};
            if (is_fg(cand)) {
                next = cand;
                next_back = prev;
                found = true;
                break;
            }
            prev = cand;
        }
        if (!found) break;  // isolated pixel
        if (trace.size() > 1 && current == start && next == trace[1]) {
            trace.pop_back();  // start was appended when the loop closed
            break;
        }
        current = next;
        back = next_back;
        trace.push_back(current);
    }
    return trace;
}

}  // namespace

std::size_t TissueMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool TissueMask::is_boundary(int x, int y) const noexcept {
    if (!at(x, y)) return false;
    for (const Point d : kRing) {
        if (!at(x + d.x, y + d.y)) return true;
    }
    return false;
}

double otsu_threshold(const std::vector<double>& values) {
    constexpr int kBins = 256;
    std::array<double, kBins> hist{};
    for (double v : values) {
        const int b = std::clamp(static_cast<int>(v * kBins), 0, kBins - 1);
        hist[b] += 1.0;
    }
    const int occupied = static_cast<int>(std::count_if(hist.begin(), hist.end(), [](double h) { return h > 0; }));
    if (occupied < 2) return -1.0;

    const double total = static_cast<double>(values.size());
    double sum_all = 0.0;
    for (int i = 0; i < kBins; ++i) sum_all += i * hist[i];

    double w0 = 0.0;
    double sum0 = 0.0;
    double best = -1.0;
    int best_k = 0;
    for (int k = 0; k < kBins - 1; ++k) {
        w0 += hist[k];
        sum0 += k * hist[k];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_k = k;
        }
    }
    return static_cast<double>(best_k + 1) / kBins;
}

TissueMask close_mask(const TissueMask& mask, int radius) {
    if (radius <= 0) return mask;
    const auto offsets = disk_offsets(radius);
    const int w = mask.width();
    const int h = mask.height();

    TissueMask dilated(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (const Point d : offsets) {
                if (mask.at(x + d.x, y + d.y)) {
                    dilated.set(x, y, true);
                    break;
                }
            }
        }
    }
    TissueMask closed(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool keep = true;
            for (const Point d : offsets) {
                const int xx = x + d.x;
                const int yy = y + d.y;
                if (dilated.inside(xx, yy) && !dilated.at(xx, yy)) {
                    keep = false;
                    break;
                }
            }
            closed.set(x, y, keep);
        }
    }
    return closed;
}

std::vector<int> label_components(const TissueMask& mask, int* n_labels) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<int> labels(static_cast<std::size_t>(w) * h, 0);
    int next = 0;
    std::vector<Point> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y) || labels[static_cast<std::size_t>(y) * w + x] != 0) continue;
            ++next;
            labels[static_cast<std::size_t>(y) * w + x] = next;
            stack.push_back({x, y});
            while (!stack.empty()) {
                const Point p = stack.back();
                stack.pop_back();
                for (const Point d : kRing) {
                    const int xx = p.x + d.x;
                    const int yy = p.y + d.y;
                    if (!mask.at(xx, yy)) continue;
                    int& l = labels[static_cast<std::size_t>(yy) * w + xx];
                    if (l == 0) {
                        l = next;
                        stack.push_back({xx, yy});
                    }
                }
            }
        }
    }
    if (n_labels) *n_labels = next;
    return labels;
}

TissueMask remove_small_components(const TissueMask& mask, int min_px) {
    int n = 0;
    const auto labels = label_components(mask, &n);
    std::vector<std::size_t> area(static_cast<std::size_t>(n) + 1, 0);
    for (int l : labels) ++area[l];
    TissueMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            const int l = labels[static_cast<std::size_t>(y) * mask.width() + x];
            if (l != 0 && area[l] >= static_cast<std::size_t>(std::max(min_px, 0))) out.set(x, y, true);
        }
    }
    return out;
}

TissueMask detect_mask(const RasterImage& slide, const MaskConfig& cfg) {
    if (slide.empty()) {
        fail(ErrorKind::InvalidArgument, "cannot detect tissue on an empty slide");
    }
    std::vector<double> sat(slide.pixel_count());
    const auto d = slide.data();
    for (std::size_t i = 0; i < sat.size(); ++i) {
        sat[i] = rgb_to_hsv(Rgb{d[3 * i], d[3 * i + 1], d[3 * i + 2]}).saturation;
    }
    // Unimodal histograms fall back to the floor alone.
    const double threshold = std::max(otsu_threshold(sat), cfg.saturation_floor);

    TissueMask raw(slide.width(), slide.height());
    for (int y = 0; y < slide.height(); ++y) {
        for (int x = 0; x < slide.width(); ++x) {
            const double s = sat[static_cast<std::size_t>(y) * slide.width() + x];
            if (s > cfg.saturation_floor && s >= threshold) raw.set(x, y, true);
        }
    }
    if (!raw.any()) return raw;
    return remove_small_components(close_mask(raw, cfg.close_radius), cfg.min_component_px);
}

std::vector<BorderTrace> trace_borders(const TissueMask& mask) {
    int n = 0;
    const auto labels = label_components(mask, &n);
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::size_t> area(static_cast<std::size_t>(n) + 1, 0);
    std::vector<Point> start(static_cast<std::size_t>(n) + 1, Point{-1, -1});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int l = labels[static_cast<std::size_t>(y) * w + x];
            if (l == 0) continue;
            if (area[l]++ == 0) start[l] = {x, y};
        }
    }

    std::vector<BorderTrace> traces;
    traces.reserve(static_cast<std::size_t>(n));
    for (int l = 1; l <= n; ++l) {
        BorderTrace t;
        t.points = moore_trace(labels, w, h, l, start[l]);
        t.closed = true;
        t.component_area = area[l];
        traces.push_back(std::move(t));
    }
    std::stable_sort(traces.begin(), traces.end(), [](const BorderTrace& a, const BorderTrace& b) {
        return a.component_area > b.component_area;
    });
    return traces;
}

std::vector<WindowSpec> sample_training_windows(const RasterImage& slide,
                                                const std::vector<BorderTrace>& traces, int n,
                                                std::uint64_t seed, const std::string& slide_id,
                                                const std::string& patient_id, int size,
                                                int resized_to) {
    (void)slide;
    if (n < 1) {
        fail(ErrorKind::InvalidArgument, "window count must be at least 1");
    }
    std::set<Point> unique;
    for (const auto& t : traces) unique.insert(t.points.begin(), t.points.end());
    if (unique.empty()) {
        fail(ErrorKind::NoTissue, "no tissue border to sample windows from" +
                                      (slide_id.empty() ? std::string{} : " (" + slide_id + ")"));
    }
    std::vector<Point> pool(unique.begin(), unique.end());
    std::mt19937_64 rng(seed);

    std::vector<Point> centers;
    if (static_cast<std::size_t>(n) <= pool.size()) {
        // Partial Fisher-Yates: n distinct border pixels.
        for (int i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
            std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
            centers.push_back(pool[static_cast<std::size_t>(i)]);
        }
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (int i = 0; i < n; ++i) centers.push_back(pool[pick(rng)]);
    }

    std::vector<WindowSpec> out;
    out.reserve(centers.size());
    for (const Point c : centers) out.push_back({slide_id, patient_id, c, size, resized_to});
    return out;
}

std::vector<WindowSpec> enumerate_inference_windows(const RasterImage& slide,
                                                    const std::vector<BorderTrace>& traces,
                                                    int stride, const std::string& slide_id,
                                                    const std::string& patient_id, int size,
                                                    int resized_to) {
    (void)slide;
    if (stride < 1) {
        fail(ErrorKind::InvalidArgument, "stride must be at least 1");
    }
    std::vector<WindowSpec> out;
    for (const auto& t : traces) {
        for (std::size_t i = 0; i < t.points.size(); i += static_cast<std::size_t>(stride)) {
            out.push_back({slide_id, patient_id, t.points[i], size, resized_to});
        }
    }
    return out;
}

Rect window_rect(const WindowSpec& spec, int slide_w, int slide_h) {
    if (spec.size < 1) {
        fail(ErrorKind::InvalidArgument, "window size must be at least 1");
    }
    if (slide_w < spec.size || slide_h < spec.size) {
        fail(ErrorKind::SlideTooSmall, "slide " + std::to_string(slide_w) + "x" +
                                           std::to_string(slide_h) + " is smaller than window " +
                                           std::to_string(spec.size));
    }
    const int half = spec.size / 2;
    const int x0 = std::clamp(spec.center.x - half, 0, slide_w - spec.size);
    const int y0 = std::clamp(spec.center.y - half, 0, slide_h - spec.size);
    return {x0, y0, spec.size, spec.size};
}

RasterImage crop_window(const RasterImage& slide, const WindowSpec& spec) {
    const Rect r = window_rect(spec, slide.width(), slide.height());
    if (spec.resized_to < 1) {
        fail(ErrorKind::InvalidArgument, "resized window size must be at least 1");
    }
    RasterImage patch = slide.crop(r.x0, r.y0, r.width, r.height);
    if (spec.resized_to == spec.size) return patch;
    return resize(patch, spec.resized_to, spec.resized_to);
}

}  // namespace hpylori
