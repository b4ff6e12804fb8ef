#include "hpylori/anomaly.hpp"

#include <limits>

#include "hpylori/error.hpp"

namespace hpylori {

double f_red_from_counts(std::size_t red_orig, std::size_t red_recon) {
    if (red_recon > 0) return static_cast<double>(red_orig) / static_cast<double>(red_recon);
    return red_orig > 0 ? std::numeric_limits<double>::infinity() : 1.0;
}

double f_red(const RasterImage& original, const RasterImage& reconstruction,
             const RedFilterConfig& cfg) {
    if (original.width() != reconstruction.width() || original.height() != reconstruction.height()) {
        fail(ErrorKind::ShapeMismatch, "f_red: original and reconstruction differ in size");
    }
    return f_red_from_counts(count_red(original, cfg), count_red(reconstruction, cfg));
}

namespace {

WindowScore make_score(const WindowSpec& spec, const RasterImage& original,
                       const RasterImage& reconstruction, const RedFilterConfig& cfg) {
    WindowScore s;
    s.window = spec;
    s.red_orig = count_red(original, cfg);
    s.red_recon = count_red(reconstruction, cfg);
    s.f_red = f_red_from_counts(s.red_orig, s.red_recon);
    s.positive = s.f_red > 1.0;
    return s;
}

}  // namespace

WindowScore score_window(const AutoencoderModel& model, const RasterImage& window_img,
                         const WindowSpec& spec, const RedFilterConfig& cfg) {
    return score_windows(model, std::span<const RasterImage>(&window_img, 1),
                         std::span<const WindowSpec>(&spec, 1), cfg)
        .front();
}

std::vector<WindowScore> score_windows(const AutoencoderModel& model,
                                       std::span<const RasterImage> window_imgs,
                                       std::span<const WindowSpec> specs,
                                       const RedFilterConfig& cfg) {
    if (window_imgs.size() != specs.size()) {
        fail(ErrorKind::InvalidArgument, "score_windows: one spec per window image required");
    }
    std::vector<WindowScore> out;
    if (window_imgs.empty()) return out;
    const auto recon = model.forward(to_tensor<float>(window_imgs));
    out.reserve(window_imgs.size());
    for (std::size_t i = 0; i < window_imgs.size(); ++i) {
        out.push_back(make_score(specs[i], window_imgs[i], to_image(recon, static_cast<int>(i)), cfg));
    }
    return out;
}

}  // namespace hpylori
