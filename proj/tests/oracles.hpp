#pragma once

// Reference implementations used only by tests. They are written from the
// textbook definitions and deliberately avoid reusing library code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <vector>

#include "hpylori/imaging.hpp"

namespace oracle {

struct Hsv {
    double h, s, v;
};

// Hexcone model in the form used by Python's colorsys: the hue sector is
// picked from the distances of each channel to the maximum.
inline Hsv hexcone(double r, double g, double b) {
    const double mx = std::max(r, std::max(g, b));
    const double mn = std::min(r, std::min(g, b));
    if (mx == mn) return {0.0, 0.0, mx};
    const double s = (mx - mn) / mx;
    const double rc = (mx - r) / (mx - mn);
    const double gc = (mx - g) / (mx - mn);
    const double bc = (mx - b) / (mx - mn);
    double h;
    if (r == mx) h = bc - gc;
    else if (g == mx) h = 2.0 + rc - bc;
    else h = 4.0 + gc - rc;
    h = std::fmod(h / 6.0, 1.0);
    if (h < 0.0) h += 1.0;
    return {h * 360.0, s, mx};
}

// Angular distance of the hue to 0 degrees, compared against the half width.
inline bool red_like(double r, double g, double b, double half_width = 20.0, double min_s = 0.2,
                     double min_v = 0.2) {
    const Hsv p = hexcone(r, g, b);
    const double dist = std::min(p.h, 360.0 - p.h);
    return dist <= half_width && p.s >= min_s && p.v >= min_v;
}

inline std::size_t count_red(const hpylori::RasterImage& img) {
    std::size_t n = 0;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const auto p = img.at(x, y);
            if (red_like(p.r, p.g, p.b)) ++n;
        }
    }
    return n;
}

// Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 P(tie).
inline double pair_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

// Exhaustive scan over all candidate thresholds (observed values plus one
// below and one above). Distances are compared as exact integers:
// d^2 * P^2 * N^2 = fp^2 * P^2 + fn^2 * N^2. Ties go to the smaller threshold.
inline double best_threshold(const std::vector<double>& scores, const std::vector<bool>& positive) {
    std::set<double> candidates(scores.begin(), scores.end());
    const double lo = *candidates.begin() - 1.0;
    const double hi = *candidates.rbegin() + 1.0;
    candidates.insert(lo);
    candidates.insert(hi);
    const std::int64_t P = std::count(positive.begin(), positive.end(), true);
    const std::int64_t N = static_cast<std::int64_t>(positive.size()) - P;

    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    double best_t = 0.0;
    // Ascending order: the first minimum found is the smallest threshold.
    for (double t : candidates) {
        std::int64_t fp = 0;
        std::int64_t fn = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const bool predicted = scores[i] > t;
            if (predicted && !positive[i]) ++fp;
            if (!predicted && positive[i]) ++fn;
        }
        const std::int64_t d = fp * fp * P * P + fn * fn * N * N;
        if (d < best) {
            best = d;
            best_t = t;
        }
    }
    return best_t;
}

}  // namespace oracle
