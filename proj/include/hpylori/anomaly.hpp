#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hpylori/autoencoder.hpp"
#include "hpylori/imaging.hpp"
#include "hpylori/segmentation.hpp"

namespace hpylori {

/// Red-pixel loss of one window. positive == (f_red > 1).
struct WindowScore {
    WindowSpec window;
    std::size_t red_orig = 0;
    std::size_t red_recon = 0;
    double f_red = 1.0;  // may be +infinity
    bool positive = false;
};

/// Ratio of red-like pixel counts, original over reconstruction.
/// b == 0 yields +infinity when a > 0 and 1 when a == 0.
double f_red_from_counts(std::size_t red_orig, std::size_t red_recon);

double f_red(const RasterImage& original, const RasterImage& reconstruction,
             const RedFilterConfig& cfg = {});

WindowScore score_window(const AutoencoderModel& model, const RasterImage& window_img,
                         const WindowSpec& spec, const RedFilterConfig& cfg = {});

/// Scores windows in one batched forward pass. Results match score_window
/// up to floating-point reassociation inside the batched GEMM.
std::vector<WindowScore> score_windows(const AutoencoderModel& model,
                                       std::span<const RasterImage> window_imgs,
                                       std::span<const WindowSpec> specs,
                                       const RedFilterConfig& cfg = {});

}  // namespace hpylori
