#include "doctest.h"

#include <algorithm>
#include <set>

#include "hpylori/error.hpp"
#include "hpylori/segmentation.hpp"

using namespace hpylori;

namespace {

TissueMask rect_mask(int w, int h, int x0, int y0, int rw, int rh) {
    TissueMask m(w, h);
    for (int y = y0; y < y0 + rh; ++y)
        for (int x = x0; x < x0 + rw; ++x) m.set(x, y, true);
    return m;
}

TissueMask disk_mask(int w, int h, int cx, int cy, int r) {
    TissueMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y, true);
    return m;
}

// Tissue pixels with a background pixel directly left, right, above or below.
std::set<Point> four_boundary(const TissueMask& m) {
    std::set<Point> out;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.at(x, y) && (!m.at(x - 1, y) || !m.at(x + 1, y) || !m.at(x, y - 1) || !m.at(x, y + 1)))
                out.insert({x, y});
    return out;
}

bool eight_adjacent(Point a, Point b) {
    return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)) == 1;
}

// Blue disk on a near-white background.
RasterImage blob_slide(int w, int h, int cx, int cy, int r) {
    RasterImage img(w, h, Rgb{0.95f, 0.95f, 0.96f});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img.set(x, y, {0.35f, 0.45f, 0.75f});
    return img;
}

}  // namespace

TEST_CASE("otsu separates two well-spaced modes") {
    std::vector<double> v(100, 0.2);
    v.insert(v.end(), 100, 0.8);
    const double t = otsu_threshold(v);
    CHECK(t > 0.2);
    CHECK(t <= 0.8);
    CHECK(otsu_threshold(std::vector<double>(50, 0.4)) == -1.0);
}

TEST_CASE("detect_mask finds a blob and nothing on a blank slide") {
    const RasterImage slide = blob_slide(120, 90, 60, 45, 30);
    const TissueMask mask = detect_mask(slide);
    CHECK(mask.at(60, 45));
    CHECK_FALSE(mask.at(2, 2));
    CHECK(mask.count() == disk_mask(120, 90, 60, 45, 30).count());

    const RasterImage blank(64, 64, Rgb{0.95f, 0.95f, 0.96f});
    CHECK_FALSE(detect_mask(blank).any());
}

TEST_CASE("closing fills small gaps and never shrinks the mask") {
    TissueMask m = rect_mask(40, 40, 5, 5, 30, 30);
    m.set(20, 20, false);
    m.set(21, 20, false);
    const TissueMask closed = close_mask(m, 2);
    CHECK(closed.at(20, 20));
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x)
            if (m.at(x, y)) CHECK(closed.at(x, y));
    // A mask touching the border stays put.
    const TissueMask edge = rect_mask(20, 20, 0, 0, 10, 20);
    CHECK(close_mask(edge, 3) == edge);
}

TEST_CASE("remove_small_components drops specks only") {
    TissueMask m = rect_mask(50, 50, 10, 10, 20, 20);
    m.set(45, 45, true);
    m.set(46, 46, true);  // diagonal neighbor: one 2-pixel component
    int n = 0;
    label_components(m, &n);
    CHECK(n == 2);
    const TissueMask cleaned = remove_small_components(m, 3);
    CHECK_FALSE(cleaned.at(45, 45));
    CHECK(cleaned.count() == 400);
}

TEST_CASE("trace of a 10x10 square visits its 36 boundary pixels once") {
    const TissueMask m = rect_mask(20, 20, 5, 5, 10, 10);
    const auto traces = trace_borders(m);
    REQUIRE(traces.size() == 1);
    const auto& pts = traces[0].points;
    CHECK(pts.size() == 36);
    CHECK(pts.front() == Point{5, 5});
    CHECK(std::set<Point>(pts.begin(), pts.end()) == four_boundary(m));
    CHECK(traces[0].component_area == 100);
}

TEST_CASE("trace of a disk is a closed 8-connected walk over its 4-boundary") {
    const TissueMask m = disk_mask(80, 80, 40, 38, 25);
    const auto traces = trace_borders(m);
    REQUIRE(traces.size() == 1);
    const auto& pts = traces[0].points;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(m.is_boundary(pts[i].x, pts[i].y));
        CHECK(eight_adjacent(pts[i], pts[(i + 1) % pts.size()]));
    }
    CHECK(std::set<Point>(pts.begin(), pts.end()) == four_boundary(m));
    CHECK(std::set<Point>(pts.begin(), pts.end()).size() == pts.size());
}

TEST_CASE("tracing handles single pixels, lines and several components") {
    TissueMask m(30, 30);
    m.set(3, 3, true);
    for (int x = 10; x < 20; ++x) m.set(x, 25, true);
    for (int y = 5; y < 15; ++y)
        for (int x = 12; x < 25; ++x) m.set(x, y, true);
    const auto traces = trace_borders(m);
    REQUIRE(traces.size() == 3);
    CHECK(traces[0].component_area == 130);
    CHECK(traces[1].component_area == 10);
    CHECK(traces[2].points == std::vector<Point>{{3, 3}});
    // A 1-pixel-wide line is walked out and back.
    CHECK(traces[1].points.size() == 18);
}

TEST_CASE("training windows are distinct border pixels and reproducible") {
    const TissueMask m = disk_mask(400, 400, 200, 200, 120);
    const RasterImage slide(400, 400);
    const auto traces = trace_borders(m);
    const auto a = sample_training_windows(slide, traces, 50, 9, "s", "p");
    const auto b = sample_training_windows(slide, traces, 50, 9, "s", "p");
    const auto c = sample_training_windows(slide, traces, 50, 10, "s", "p");
    CHECK(a == b);
    CHECK(a != c);
    std::set<Point> centers;
    for (const auto& w : a) {
        CHECK(m.is_boundary(w.center.x, w.center.y));
        CHECK(w.size == 224);
        CHECK(w.resized_to == 28);
        centers.insert(w.center);
    }
    CHECK(centers.size() == 50);
}

TEST_CASE("oversampling a short border draws with replacement") {
    const TissueMask m = rect_mask(300, 300, 100, 100, 3, 3);
    const RasterImage slide(300, 300);
    const auto w = sample_training_windows(slide, trace_borders(m), 20, 1);
    CHECK(w.size() == 20);
    CHECK_THROWS_AS(sample_training_windows(slide, {}, 5, 1), Error);
}

TEST_CASE("inference windows follow the trace at the given stride") {
    const TissueMask m = rect_mask(300, 300, 20, 20, 200, 100);
    const auto traces = trace_borders(m);
    const RasterImage slide(300, 300);
    const auto w = enumerate_inference_windows(slide, traces, 112);
    const std::size_t n = traces[0].points.size();
    CHECK(w.size() == (n + 111) / 112);
    CHECK(w[0].center == traces[0].points[0]);
    CHECK(w[1].center == traces[0].points[112]);
}

TEST_CASE("window rectangles clamp inside the slide") {
    WindowSpec spec{"s", "p", {5, 290}, 224, 28};
    const Rect r = window_rect(spec, 400, 300);
    CHECK(r.x0 == 0);
    CHECK(r.y0 == 300 - 224);
    CHECK(r.width == 224);
    const RasterImage slide(400, 300, Rgb{0.5f, 0.5f, 0.5f});
    const RasterImage crop = crop_window(slide, spec);
    CHECK(crop.width() == 28);
    CHECK(crop.height() == 28);
    try {
        window_rect(spec, 200, 300);
        FAIL("expected SlideTooSmall");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SlideTooSmall);
    }
}
